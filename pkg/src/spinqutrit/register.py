"""N-qutrit register arithmetic.

Qutrit 0 is the most significant base-3 digit of a basis-state index, so
|j, k> of two qutrits has index 3*j + k.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .gates import m_ideal


@lru_cache(maxsize=16)
def digits(n: int) -> np.ndarray:
    """(n, 3**n) array: digits(n)[q, idx] is the level of qutrit q in state idx."""
    idx = np.arange(3**n)
    out = np.empty((n, 3**n), dtype=np.int8)
    for q in range(n):
        out[q] = (idx // 3 ** (n - 1 - q)) % 3
    out.flags.writeable = False
    return out


def _apply_local(mat: np.ndarray, gate: np.ndarray, ion: int, n: int) -> np.ndarray:
    """Left-multiply the rows of ``mat`` (shape (3**n, ...)) by ``gate`` on qutrit ``ion``."""
    rest = mat.shape[1:]
    t = mat.reshape((3**ion, 3, 3 ** (n - ion - 1)) + rest)
    t = np.einsum("ab,ibj...->iaj...", gate, t)
    return t.reshape((3**n,) + rest)


@dataclass(frozen=True)
class RegisterUnitary:
    """A 3**n x 3**n unitary held either as its diagonal or as a dense matrix."""

    n: int
    diag: Optional[np.ndarray] = None
    dense: Optional[np.ndarray] = None

    @classmethod
    def identity(cls, n: int) -> "RegisterUnitary":
        return cls(n, diag=np.ones(3**n, dtype=complex))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RegisterUnitary":
        m = np.asarray(m, dtype=complex)
        n = int(round(np.log(m.shape[0]) / np.log(3)))
        if 3**n != m.shape[0] or m.shape[0] != m.shape[1]:
            raise ValueError("matrix dimension is not a power of 3")
        return cls(n, dense=m)

    @property
    def dim(self) -> int:
        return 3**self.n

    @property
    def is_diagonal(self) -> bool:
        return self.diag is not None

    def matrix(self) -> np.ndarray:
        if self.diag is not None:
            return np.diag(self.diag)
        return self.dense

    def then_diagonal(self, phases: np.ndarray) -> "RegisterUnitary":
        """diag(phases) @ self."""
        if self.diag is not None:
            return RegisterUnitary(self.n, diag=phases * self.diag)
        return RegisterUnitary(self.n, dense=phases[:, None] * self.dense)

    def then_local(self, gate: np.ndarray, ion: int) -> "RegisterUnitary":
        """embed(gate, ion) @ self, without forming the embedded matrix."""
        gate = np.asarray(gate, dtype=complex)
        if not 0 <= ion < self.n:
            raise IndexError(f"qutrit index {ion} out of range for {self.n} qutrits")
        if np.count_nonzero(gate - np.diag(np.diag(gate))) == 0:
            return self.then_diagonal(np.diag(gate)[digits(self.n)[ion]])
        base = self.dense if self.diag is None else np.diag(self.diag)
        return RegisterUnitary(self.n, dense=_apply_local(base, gate, ion, self.n))

    def then(self, other: "RegisterUnitary") -> "RegisterUnitary":
        """other @ self."""
        if other.n != self.n:
            raise ValueError("register sizes differ")
        if other.diag is not None:
            return self.then_diagonal(other.diag)
        return RegisterUnitary(self.n, dense=other.dense @ self.matrix())

    def __matmul__(self, other: "RegisterUnitary") -> "RegisterUnitary":
        return other.then(self)

    def apply(self, state: np.ndarray) -> np.ndarray:
        if self.diag is not None:
            return self.diag * state
        return self.dense @ state

    def unitarity_error(self) -> float:
        if self.diag is not None:
            return float(np.max(np.abs(np.abs(self.diag) - 1)))
        m = self.dense
        return float(np.max(np.abs(m.conj().T @ m - np.eye(self.dim))))

    def to_json(self) -> dict:
        m = self.matrix()
        return {
            "n_qutrits": self.n,
            "representation": "diagonal" if self.is_diagonal else "dense",
            "matrix": [[[float(v.real), float(v.imag)] for v in row] for row in m],
        }


def embed(gate: np.ndarray, ion: int, n: int) -> RegisterUnitary:
    """Single-qutrit ``gate`` on qutrit ``ion`` of an ``n``-qutrit register."""
    if not 0 <= ion < n:
        raise IndexError(f"qutrit index {ion} out of range for {n} qutrits")
    return RegisterUnitary.identity(n).then_local(gate, ion)


def embed_dense(gate: np.ndarray, ion: int, n: int) -> np.ndarray:
    """Plain Kronecker-product embedding (reference path)."""
    if not 0 <= ion < n:
        raise IndexError(f"qutrit index {ion} out of range for {n} qutrits")
    return np.kron(np.kron(np.eye(3**ion), gate), np.eye(3 ** (n - ion - 1)))


def _m_diag(m_matrix) -> np.ndarray:
    m = m_ideal() if m_matrix is None else np.asarray(m_matrix)
    return np.real(np.diag(m)) if m.ndim == 2 else np.real(m)


def mm_pair(theta: float, ion_a: int, ion_b: int, n: int, m_matrix=None) -> RegisterUnitary:
    """exp(-i theta M_a M_b) as a diagonal register unitary."""
    if ion_a == ion_b:
        raise ValueError("MM evolution needs two distinct qutrits")
    for ion in (ion_a, ion_b):
        if not 0 <= ion < n:
            raise IndexError(f"qutrit index {ion} out of range for {n} qutrits")
    m = _m_diag(m_matrix)
    d = digits(n)
    return RegisterUnitary(n, diag=np.exp(-1j * theta * m[d[ion_a]] * m[d[ion_b]]))


def mm_chain_phases(duration: float, j: np.ndarray, n: int, m_matrix=None) -> np.ndarray:
    m = _m_diag(m_matrix)
    j = np.asarray(j, dtype=float)
    if j.shape != (n, n):
        raise ValueError(f"coupling matrix must be {n}x{n}")
    vals = m[digits(n)]  # (n, 3**n)
    energy = np.zeros(3**n)
    for a in range(n):
        for b in range(a + 1, n):
            if j[a, b] != 0.0:
                energy += j[a, b] * vals[a] * vals[b]
    return np.exp(-1j * duration * energy)


def mm_chain(duration: float, coupling, n: int, m_matrix=None) -> RegisterUnitary:
    """exp(-i t sum_{a<b} J_ab M_a M_b) for the whole chain, J in rad/s."""
    j = getattr(coupling, "j", coupling)
    return RegisterUnitary(n, diag=mm_chain_phases(duration, j, n, m_matrix))


def _as_matrix(u) -> np.ndarray:
    return u.matrix() if isinstance(u, RegisterUnitary) else np.asarray(u)


def fidelity_up_to_global_phase(u, v) -> float:
    """|tr(U^dagger V)| / d."""
    if isinstance(u, RegisterUnitary) and isinstance(v, RegisterUnitary):
        if u.n != v.n:
            raise ValueError("dimension mismatch")
        if u.is_diagonal and v.is_diagonal:
            return float(abs(np.vdot(u.diag, v.diag)) / u.dim)
    a, b = _as_matrix(u), _as_matrix(v)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(abs(np.vdot(a, b)) / a.shape[0])


def local_phase_diagonal(phases: np.ndarray) -> np.ndarray:
    """Diagonal of the product of per-qutrit phase gates; ``phases`` is (n, 3)."""
    phases = np.asarray(phases, dtype=float)
    d = digits(phases.shape[0])
    total = np.zeros(d.shape[1])
    for q in range(phases.shape[0]):
        total += phases[q][d[q]]
    return np.exp(1j * total)


def equal_up_to_local_phases(u, target, tol: float = 1e-9):
    """Look for per-qutrit phase gates L with L U = target up to a global phase.

    Returns ``(ok, phases)`` where ``phases[q]`` are the three phases of the
    correction on qutrit q, normalised so that ``phases[q][0] = 0``. The
    candidate is read off target U^dagger and polished with a simplex search
    when the read-off alone falls short of ``1 - tol``.
    """
    a, b = _as_matrix(u), _as_matrix(target)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    n = int(round(np.log(a.shape[0]) / np.log(3)))
    ratio = np.einsum("ij,ij->i", b, a.conj())  # diag(target U^dagger)
    phases = np.zeros((n, 3))
    ref = ratio[0]
    if abs(ref) > 1e-12:
        for q in range(n):
            for lvl in (1, 2):
                idx = 3 ** (n - 1 - q) * lvl
                if abs(ratio[idx]) > 1e-12:
                    phases[q, lvl] = np.angle(ratio[idx] / ref)

    def fid(p):
        l = local_phase_diagonal(p.reshape(n, 3))
        return float(abs(np.vdot(b, l[:, None] * a)) / a.shape[0])

    best = fid(phases)
    if best < 1 - tol:
        free = [(q, lvl) for q in range(n) for lvl in (1, 2)]

        def cost(x):
            p = np.zeros((n, 3))
            for (q, lvl), v in zip(free, x):
                p[q, lvl] = v
            return 1 - fid(p.ravel())

        x0 = np.array([phases[q, lvl] for q, lvl in free])
        res = minimize(cost, x0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000})
        if 1 - res.fun > best:
            best = 1 - res.fun
            for (q, lvl), v in zip(free, res.x):
                phases[q, lvl] = v
    phases = np.angle(np.exp(1j * phases))
    return bool(best >= 1 - tol), phases


# ---------------------------------------------------------------------------
# readout

@dataclass(frozen=True)
class Readout:
    """Outcome statistics of the two-step fluorescence readout.

    ``counts`` maps outcome strings (one digit per qutrit, qutrit 0 first)
    to shot counts; ``per_ion[q, k]`` counts shots where qutrit q read k.
    """

    shots: int
    counts: dict
    per_ion: np.ndarray

    def frequencies(self) -> np.ndarray:
        return self.per_ion / self.shots

    def to_json(self) -> dict:
        return {
            "shots": self.shots,
            "counts": dict(sorted(self.counts.items())),
            "per_ion_counts": self.per_ion.astype(int).tolist(),
        }


def _sample_patterns(rng, probs: np.ndarray, keys: np.ndarray, shots: int) -> dict:
    """Multinomial draw over the distinct values of ``keys`` weighted by ``probs``."""
    uniq, inv = np.unique(keys, return_inverse=True)
    p = np.bincount(inv, weights=probs, minlength=len(uniq))
    p = np.clip(p, 0, None)
    p = p / p.sum()
    draws = rng.multinomial(shots, p)
    return {int(uniq[i]): int(c) for i, c in enumerate(draws) if c}


def measure_register(state: np.ndarray, shots: int, seed: int = 0, tol: float = 1e-10) -> Readout:
    """Simulate the two-step readout on ``shots`` copies of ``state``.

    Step one images which ions fluoresce (projection onto |2> versus the rest).
    A pi pulse on |1>-|2> of every ion follows, and a second image then
    flags ions that were in |1>. Ions dark in both images are read as |0>.
    """
    from .gates import pi_pulse

    state = np.asarray(state, dtype=complex)
    n = int(round(np.log(state.size) / np.log(3)))
    if 3**n != state.size:
        raise ValueError("state size is not a power of 3")
    norm = np.vdot(state, state).real
    if abs(norm - 1) > tol:
        raise ValueError(f"state is not normalised (norm^2 = {norm:.6g})")
    if shots < 0:
        raise ValueError("shots must be non-negative")

    rng = np.random.default_rng(seed)
    d = digits(n)
    weights = 2 ** np.arange(n - 1, -1, -1)
    bright = ((d == 2).astype(np.int64) * weights[:, None]).sum(axis=0)

    x12 = pi_pulse("12")
    counts: dict[str, int] = {}
    per_ion = np.zeros((n, 3), dtype=np.int64)
    for pattern1, c1 in sorted(_sample_patterns(rng, np.abs(state) ** 2, bright, shots).items()):
        post = np.where(bright == pattern1, state, 0)
        post = post / np.linalg.norm(post)
        for q in range(n):
            post = _apply_local(post, x12, q, n)
        for pattern2, c2 in sorted(_sample_patterns(rng, np.abs(post) ** 2, bright, c1).items()):
            levels = []
            for q in range(n):
                bit = 1 << (n - 1 - q)
                if pattern1 & bit:
                    levels.append(2)
                elif pattern2 & bit:
                    levels.append(1)
                else:
                    levels.append(0)
            key = "".join(map(str, levels))
            counts[key] = counts.get(key, 0) + c2
            for q, lvl in enumerate(levels):
                per_ion[q, lvl] += c2
    return Readout(shots=shots, counts=counts, per_ion=per_ion)


def basis_state(levels, n: Optional[int] = None) -> np.ndarray:
    levels = list(levels)
    n = len(levels) if n is None else n
    idx = 0
    for lvl in levels:
        idx = 3 * idx + int(lvl)
    psi = np.zeros(3**n, dtype=complex)
    psi[idx] = 1.0
    return psi
