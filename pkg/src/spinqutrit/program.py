"""Pulse programs: op types, text/JSON formats and execution.

Text format, one op per line, ``#`` starts a comment::

    X <ij> <ion>
    U <ij> <ion> <theta> <phi>
    Z <ij> <ion> <rho>
    MM <ion_a> <ion_b> <theta>
    MMALL <duration_s>
    MEASURE

Angles are radians, written as ``0.25pi``, ``0.785398rad`` or a bare number.
Ops are chronological: the first line acts first.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import gates
from .register import (
    RegisterUnitary,
    mm_chain_phases,
    mm_pair,
    _apply_local,
)

TRANSITIONS = ("01", "12", "02")


class ProgramError(ValueError):
    pass


class ProgramParseError(ProgramError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


@dataclass(frozen=True)
class SingleQutrit:
    ion: int
    ij: str
    theta: float
    phi: float = 0.0

    def gate(self) -> np.ndarray:
        return gates.rotation(self.ij, self.theta, self.phi)


@dataclass(frozen=True)
class ZPhase:
    ion: int
    ij: str
    rho: float

    def gate(self) -> np.ndarray:
        return gates.z_rot(self.ij, self.rho)


@dataclass(frozen=True)
class MMPair:
    ion_a: int
    ion_b: int
    theta: float


@dataclass(frozen=True)
class MMChain:
    """Evolution of the whole register under the chain couplings.

    ``coupling`` may be left ``None`` and supplied at run time.
    """

    duration: float
    coupling: Optional[np.ndarray] = field(default=None, compare=False)


@dataclass(frozen=True)
class Measure:
    pass


PulseOp = Union[SingleQutrit, ZPhase, MMPair, MMChain, Measure]


@dataclass(frozen=True)
class PulseProgram:
    n_qutrits: int
    ops: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        validate(self)

    @property
    def has_measure(self) -> bool:
        return any(isinstance(op, Measure) for op in self.ops)

    def reversed(self) -> "PulseProgram":
        return PulseProgram(self.n_qutrits, self.ops[::-1])


def validate(program: PulseProgram) -> None:
    n = program.n_qutrits
    if n < 1:
        raise ProgramError("a program needs at least one qutrit")
    for k, op in enumerate(program.ops):
        if isinstance(op, (SingleQutrit, ZPhase)):
            if not 0 <= op.ion < n:
                raise ProgramError(f"op {k}: qutrit {op.ion} out of range for {n} qutrits")
            if op.ij not in TRANSITIONS:
                raise ProgramError(f"op {k}: unknown transition {op.ij!r}")
        elif isinstance(op, MMPair):
            for ion in (op.ion_a, op.ion_b):
                if not 0 <= ion < n:
                    raise ProgramError(f"op {k}: qutrit {ion} out of range for {n} qutrits")
            if op.ion_a == op.ion_b:
                raise ProgramError(f"op {k}: MM needs two distinct qutrits")
        elif isinstance(op, Measure):
            if k != len(program.ops) - 1:
                raise ProgramError("MEASURE must be the last op")
        elif not isinstance(op, MMChain):
            raise ProgramError(f"op {k}: unknown op {op!r}")


# ---------------------------------------------------------------------------
# parsing

_ANGLE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(pi|rad)?$")


def parse_angle(text: str) -> float:
    m = _ANGLE.match(text.strip())
    if not m:
        raise ValueError(f"bad angle {text!r}")
    value = float(m.group(1))
    return value * np.pi if m.group(2) == "pi" else value


def _tokens(line: str):
    for m in re.finditer(r"\S+", line):
        yield m.group(0), m.start() + 1


def parse_program(text: str, n_qutrits: Optional[int] = None) -> PulseProgram:
    """Parse the text format.

    Without ``n_qutrits`` the register size is one more than the largest
    qutrit index used (at least 1).
    """
    ops = []
    max_ion = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = list(_tokens(line))
        if not toks:
            continue
        word, col = toks[0]
        word = word.upper()
        args = toks[1:]

        def need(count):
            if len(args) != count:
                where = args[count][1] if len(args) > count else len(line.rstrip()) + 1
                raise ProgramParseError(f"{word} takes {count} argument(s), got {len(args)}", lineno, where)

        def ion(tok):
            text_, c = tok
            if not re.fullmatch(r"\d+", text_):
                raise ProgramParseError(f"bad qutrit index {text_!r}", lineno, c)
            return int(text_)

        def transition(tok):
            text_, c = tok
            if text_ not in TRANSITIONS:
                raise ProgramParseError(f"transition must be one of {TRANSITIONS}, got {text_!r}", lineno, c)
            return text_

        def angle(tok):
            text_, c = tok
            try:
                return parse_angle(text_)
            except ValueError:
                raise ProgramParseError(f"bad angle {text_!r}", lineno, c) from None

        def number(tok):
            text_, c = tok
            try:
                return float(text_)
            except ValueError:
                raise ProgramParseError(f"bad number {text_!r}", lineno, c) from None

        if word == "X":
            need(2)
            op = SingleQutrit(ion(args[1]), transition(args[0]), np.pi / 2, 0.0)
        elif word == "U":
            need(4)
            op = SingleQutrit(ion(args[1]), transition(args[0]), angle(args[2]), angle(args[3]))
        elif word == "Z":
            need(3)
            op = ZPhase(ion(args[1]), transition(args[0]), angle(args[2]))
        elif word == "MM":
            need(3)
            a, b = ion(args[0]), ion(args[1])
            if a == b:
                raise ProgramParseError("MM needs two distinct qutrits", lineno, args[1][1])
            op = MMPair(a, b, angle(args[2]))
        elif word == "MMALL":
            need(1)
            op = MMChain(number(args[0]))
        elif word == "MEASURE":
            need(0)
            op = Measure()
        else:
            raise ProgramParseError(f"unknown op {toks[0][0]!r}", lineno, col)
        if ops and isinstance(ops[-1], Measure):
            raise ProgramParseError("MEASURE must be the last op", lineno, col)
        for attr in ("ion", "ion_a", "ion_b"):
            if hasattr(op, attr):
                max_ion = max(max_ion, getattr(op, attr))
        ops.append(op)

    n = max(max_ion + 1, 1) if n_qutrits is None else n_qutrits
    if max_ion >= n:
        raise ProgramError(f"program uses qutrit {max_ion} but the register has {n}")
    return PulseProgram(n, ops)


def _angle_text(x: float) -> str:
    return f"{float(x)!r}rad"


def format_program(program: PulseProgram) -> str:
    lines = []
    for op in program.ops:
        if isinstance(op, SingleQutrit):
            lines.append(f"U {op.ij} {op.ion} {_angle_text(op.theta)} {_angle_text(op.phi)}")
        elif isinstance(op, ZPhase):
            lines.append(f"Z {op.ij} {op.ion} {_angle_text(op.rho)}")
        elif isinstance(op, MMPair):
            lines.append(f"MM {op.ion_a} {op.ion_b} {_angle_text(op.theta)}")
        elif isinstance(op, MMChain):
            lines.append(f"MMALL {float(op.duration)!r}")
        elif isinstance(op, Measure):
            lines.append("MEASURE")
    return "\n".join(lines) + "\n"


def program_to_json(program: PulseProgram) -> dict:
    out = []
    for op in program.ops:
        if isinstance(op, SingleQutrit):
            out.append({"op": "U", "ij": op.ij, "ion": op.ion, "theta": op.theta, "phi": op.phi})
        elif isinstance(op, ZPhase):
            out.append({"op": "Z", "ij": op.ij, "ion": op.ion, "rho": op.rho})
        elif isinstance(op, MMPair):
            out.append({"op": "MM", "ion_a": op.ion_a, "ion_b": op.ion_b, "theta": op.theta})
        elif isinstance(op, MMChain):
            out.append({"op": "MMALL", "duration_s": op.duration})
        else:
            out.append({"op": "MEASURE"})
    return {"n_qutrits": program.n_qutrits, "ops": out}


def program_from_json(data: Union[dict, str]) -> PulseProgram:
    if isinstance(data, str):
        data = json.loads(data)
    ops = []
    for k, rec in enumerate(data["ops"]):
        kind = str(rec.get("op", "")).upper()
        try:
            if kind == "X":
                ops.append(SingleQutrit(int(rec["ion"]), str(rec["ij"]), np.pi / 2, 0.0))
            elif kind == "U":
                ops.append(SingleQutrit(int(rec["ion"]), str(rec["ij"]), _json_angle(rec["theta"]),
                                        _json_angle(rec.get("phi", 0.0))))
            elif kind == "Z":
                ops.append(ZPhase(int(rec["ion"]), str(rec["ij"]), _json_angle(rec["rho"])))
            elif kind == "MM":
                ops.append(MMPair(int(rec["ion_a"]), int(rec["ion_b"]), _json_angle(rec["theta"])))
            elif kind == "MMALL":
                ops.append(MMChain(float(rec["duration_s"])))
            elif kind == "MEASURE":
                ops.append(Measure())
            else:
                raise ProgramError(f"op {k}: unknown op {rec.get('op')!r}")
        except KeyError as exc:
            raise ProgramError(f"op {k}: missing field {exc}") from None
    return PulseProgram(int(data["n_qutrits"]), ops)


def _json_angle(v) -> float:
    return parse_angle(v) if isinstance(v, str) else float(v)


def load_program(path, n_qutrits: Optional[int] = None) -> PulseProgram:
    from pathlib import Path

    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        prog = program_from_json(text)
        if n_qutrits is not None and n_qutrits != prog.n_qutrits:
            prog = PulseProgram(n_qutrits, prog.ops)
        return prog
    return parse_program(text, n_qutrits)


# ---------------------------------------------------------------------------
# execution

def _coupling_for(op: MMChain, coupling, n: int) -> np.ndarray:
    j = op.coupling if op.coupling is not None else coupling
    if j is None:
        raise ProgramError("MMALL needs a coupling matrix")
    j = np.asarray(getattr(j, "j", j), dtype=float)
    if j.shape != (n, n):
        raise ProgramError(f"coupling matrix is {j.shape}, register has {n} qutrits")
    return j


def run_program(program: PulseProgram, coupling=None, mm_sign: int = -1,
                m_matrix=None) -> RegisterUnitary:
    """Unitary of the program, first op acting first.

    MM segments evolve as exp(mm_sign * i * theta * M_a M_b); the default
    ``mm_sign=-1`` is exp(-i H t). A trailing MEASURE is ignored here.
    The result stays diagonal until a non-diagonal gate is met.
    """
    n = program.n_qutrits
    u = RegisterUnitary.identity(n)
    for op in program.ops:
        if isinstance(op, SingleQutrit):
            u = u.then_local(op.gate(), op.ion)
        elif isinstance(op, ZPhase):
            u = u.then_local(op.gate(), op.ion)
        elif isinstance(op, MMPair):
            u = u.then(mm_pair(-mm_sign * op.theta, op.ion_a, op.ion_b, n, m_matrix))
        elif isinstance(op, MMChain):
            j = _coupling_for(op, coupling, n)
            u = u.then_diagonal(mm_chain_phases(-mm_sign * op.duration, j, n, m_matrix))
    return u


def run_on_state(program: PulseProgram, state: np.ndarray, coupling=None,
                 mm_sign: int = -1, m_matrix=None) -> np.ndarray:
    """Propagate a state vector; memory stays O(3**n)."""
    n = program.n_qutrits
    psi = np.asarray(state, dtype=complex).copy()
    for op in program.ops:
        if isinstance(op, (SingleQutrit, ZPhase)):
            psi = _apply_local(psi, op.gate(), op.ion, n)
        elif isinstance(op, MMPair):
            psi = mm_pair(-mm_sign * op.theta, op.ion_a, op.ion_b, n, m_matrix).diag * psi
        elif isinstance(op, MMChain):
            j = _coupling_for(op, coupling, n)
            psi = mm_chain_phases(-mm_sign * op.duration, j, n, m_matrix) * psi
    return psi
