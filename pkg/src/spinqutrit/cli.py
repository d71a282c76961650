"""Command-line front end.

Exit codes: 0 success, 1 verification failed, 2 usage or parse error.
Frequencies are read in Hz and fields in T; reports carry unit suffixes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__, gates
from .chain import coupling_matrix, gradient_window, perturbation_ratio, solve_chain
from .program import ProgramError, ProgramParseError, load_program, run_on_state, run_program
from .register import basis_state, measure_register
from .species import TrapConfig, get_species, load_species_file
from .synthesis import (
    evaluate_alphas,
    evaluate_published_angles,
    optimize_phase_angles,
    qubit_refocus_demo,
    refocus_plan,
    xor_from_fourier,
    xor_target,
)
from .zeeman import UnsupportedSpeciesError, breit_rabi_energies, field_for_x, site_frequencies

TWO_PI = 2 * np.pi

# dense unitary dumps beyond this register size are refused
MAX_DENSE_QUTRITS = 6

PHASEGATE_TOL = 1e-6
XOR_TOL = 1e-12
REFOCUS_TOL = 1e-10


class UsageError(Exception):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _emit(text: str, output) -> None:
    if output is None:
        sys.stdout.write(text)
        return
    path = Path(output)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


# ---------------------------------------------------------------------------
# config

def _species(args):
    name = args.species
    if args.species_file:
        registry = load_species_file(args.species_file)
        if name.lower() in registry:
            return registry[name.lower()]
        if len(registry) == 1 and name == "yb171":
            return next(iter(registry.values()))
        raise UsageError(f"species {name!r} not found in {args.species_file}")
    try:
        return get_species(name)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None


def _trap(args, species) -> TrapConfig:
    if args.ions is None or args.ions < 1:
        raise UsageError("--ions must be a positive integer")
    if not args.nu1_hz > 0:
        raise UsageError("--nu1-hz must be positive")
    if args.b < 0:
        raise UsageError("--b must be non-negative")
    B0 = field_for_x(species, 1.0) if args.B0 is None else args.B0
    if B0 < 0:
        raise UsageError("--B0 must be non-negative")
    return TrapConfig(args.ions, TWO_PI * args.nu1_hz, B0, args.b)


# ---------------------------------------------------------------------------
# commands

def cmd_chain(args) -> tuple[int, str]:
    species = _species(args)
    trap = _trap(args, species)
    chain = solve_chain(trap, species)
    j = coupling_matrix(chain, species, trap).j
    if args.out == "csv":
        rows = [(n, chain.u[n], chain.z0[n], chain.mode_freqs[n]) for n in range(trap.n_ions)]
        return 0, _csv(rows, ["index", "u", "z0_m", "mode_freq_rad_s"])
    window = gradient_window(species, trap, args.epsilon_m)
    report = {
        "species": species.name,
        "n_ions": trap.n_ions,
        "nu1_rad_s": trap.nu1,
        "B0_T": trap.B0,
        "b_T_per_m": trap.b,
        "length_scale_m": chain.length_scale_gamma,
        "u": _floats(chain.u),
        "z0_m": _floats(chain.z0),
        "hessian": _floats(chain.hessian),
        "mode_freqs_rad_s": _floats(chain.mode_freqs),
        "mode_matrix": _floats(chain.mode_matrix),
        "j_matrix_rad_s": _floats(j),
        "perturbation_ratio": perturbation_ratio(chain, species, trap),
        "gradient_window": window.to_dict(),
    }
    return 0, _dumps(report)


def cmd_jmatrix(args) -> tuple[int, str]:
    species = _species(args)
    trap = _trap(args, species)
    chain = solve_chain(trap, species)
    cm = coupling_matrix(chain, species, trap)
    if args.out == "csv":
        return 0, _csv(cm.j.tolist(), [f"j{m}_rad_s" for m in range(cm.n)])
    nn = cm.nearest_neighbour()
    report = {
        "species": species.name,
        "n_ions": trap.n_ions,
        "nu1_rad_s": trap.nu1,
        "b_T_per_m": trap.b,
        "j_matrix_rad_s": _floats(cm.j),
        "nearest_neighbour_rad_s": _floats(nn),
        "nearest_neighbour_hz": _floats(nn / TWO_PI),
    }
    return 0, _dumps(report)


def cmd_breitrabi(args) -> tuple[int, str]:
    species = _species(args)
    trap = _trap(args, species)
    try:
        centre = breit_rabi_energies(species, trap.B0)
        table = site_frequencies(solve_chain(trap, species), species, trap)
    except UnsupportedSpeciesError as exc:
        raise UsageError(str(exc)) from None
    if args.out == "csv":
        rows = [(n, table.z[n], table.B[n], table.omega01[n], table.omega12[n], *table.m_diag[n])
                for n in range(len(table.z))]
        return 0, _csv(rows, ["index", "z_m", "B_T", "omega01_rad_s", "omega12_rad_s",
                              "m0", "m1", "m2"])
    report = {
        "species": species.name,
        "centre": {
            "B_T": centre.B,
            "x": centre.x,
            "omega01_rad_s": centre.omega01,
            "omega12_rad_s": centre.omega12,
            "omega01_hz": centre.omega01 / TWO_PI,
            "omega12_hz": centre.omega12 / TWO_PI,
            "Delta_rad_s": centre.Delta,
            "delta_rad_s": centre.delta,
            "d_omega01_dB_rad_s_per_T": centre.d_omega01_dB,
            "d_omega12_dB_rad_s_per_T": centre.d_omega12_dB,
            "m_diag": list(centre.m_diag),
        },
        "ions": table.to_records(),
        "neighbour_d_omega01_rad_s": _floats(table.d_omega01),
        "neighbour_d_omega12_rad_s": _floats(table.d_omega12),
        "note": "labels follow |0>=m_F-1, |1>=m_F 0, |2>=m_F+1; omega01 is the larger "
                "splitting near x=1",
    }
    return 0, _dumps(report)


def cmd_bounds(args) -> tuple[int, str]:
    species = _species(args)
    trap = _trap(args, species)
    if not 0 < args.epsilon_m < 1:
        raise UsageError("--epsilon-m must lie in (0, 1)")
    window = gradient_window(species, trap, args.epsilon_m)
    if args.out == "csv":
        d = window.to_dict()
        rows = [
            ("first_principles", "b_min_T_per_m", d["first_principles"]["b_min_T_per_m"]),
            ("first_principles", "b_max_T_per_m", d["first_principles"]["b_max_T_per_m"]),
            ("first_principles", "feasible", d["first_principles"]["feasible"]),
        ]
        for label, vals in d["fit_formula"].items():
            rows += [(f"fit_formula:{label}", k, v) for k, v in sorted(vals.items())]
        rows.append(("estimate", "max_ions_estimate", d["max_ions_estimate"]))
        return 0, _csv(rows, ["provenance", "quantity", "value"])
    report = {"species": species.name, "n_ions": trap.n_ions, "nu1_rad_s": trap.nu1,
              "B0_T": trap.B0, **window.to_dict()}
    return 0, _dumps(report)


def _coupling_if_needed(args, program):
    from .program import MMChain

    if not any(isinstance(op, MMChain) for op in program.ops):
        return None
    species = _species(args)
    ns = argparse.Namespace(**vars(args))
    ns.ions = program.n_qutrits
    trap = _trap(ns, species)
    return coupling_matrix(solve_chain(trap, species), species, trap)


def _load(args):
    try:
        return load_program(args.program, args.ions)
    except ProgramParseError:
        raise
    except (ProgramError, ValueError, KeyError) as exc:
        raise UsageError(f"{args.program}: {exc}") from None


def _initial_state(args, n):
    levels = args.initial or "0" * n
    if len(levels) != n or any(c not in "012" for c in levels):
        raise UsageError(f"--initial must be {n} digits from 0, 1, 2")
    return basis_state([int(c) for c in levels])


def _readout_text(args, readout) -> str:
    if args.out == "csv":
        return _csv(sorted(readout.counts.items()), ["outcome", "count"])
    return _dumps({"seed": args.seed, **readout.to_json()})


def cmd_simulate(args) -> tuple[int, str]:
    program = _load(args)
    coupling = _coupling_if_needed(args, program)
    if program.has_measure:
        psi = run_on_state(program, _initial_state(args, program.n_qutrits), coupling)
        return 0, _readout_text(args, measure_register(psi, args.shots, args.seed))
    if program.n_qutrits > MAX_DENSE_QUTRITS:
        u = run_program(program, coupling)
        if not u.is_diagonal:
            raise UsageError(f"dense unitary for {program.n_qutrits} qutrits is too large; "
                             "add MEASURE to sample instead")
        if args.out == "csv":
            return 0, _csv([(k, v.real, v.imag) for k, v in enumerate(u.diag)], ["index", "re", "im"])
        return 0, _dumps({"n_qutrits": u.n, "representation": "diagonal",
                          "diagonal": [[float(v.real), float(v.imag)] for v in u.diag]})
    u = run_program(program, coupling)
    if args.out == "csv":
        m = u.matrix()
        rows = [(r, c, m[r, c].real, m[r, c].imag) for r in range(u.dim) for c in range(u.dim)]
        return 0, _csv(rows, ["row", "col", "re", "im"])
    return 0, _dumps(u.to_json())


def cmd_measure(args) -> tuple[int, str]:
    program = _load(args)
    coupling = _coupling_if_needed(args, program)
    psi = run_on_state(program, _initial_state(args, program.n_qutrits), coupling)
    return 0, _readout_text(args, measure_register(psi, args.shots, args.seed))


def _check(name, measured, tolerance) -> dict:
    return {"name": name, "measured": float(measured), "tolerance": float(tolerance),
            "passed": bool(measured <= tolerance)}


def cmd_verify(args) -> tuple[int, str]:
    checks = []
    extra = {}
    if args.which == "xor":
        xc = xor_from_fourier(tol=np.inf)
        dev = float(np.max(np.abs(xc.unitary.matrix() - xor_target().matrix())))
        checks.append(_check("fourier_conjugated_phase_equals_xor", dev, XOR_TOL))
        extra = {"fourier_qutrit": xc.fourier_qutrit, "order": xc.order, "placements": xc.tried}
    elif args.which == "refocus":
        plan = refocus_plan(args.theta, tol=np.inf)
        lam = gates.gellmann_coeffs(gates.m_ideal())
        checks.append(_check("corrected_composite_is_identity", plan.deviation(), REFOCUS_TOL))
        checks.append(_check("global_phase_minus_3a0^2_theta",
                             abs(plan.global_phase - 3 * lam.a0**2 * args.theta), REFOCUS_TOL))
        demo = qubit_refocus_demo(args.theta)
        checks.append(_check("qubit_echo", demo["echo_deviation"], 1e-14))
        extra = {"theta": args.theta, "global_phase": plan.global_phase,
                 "spectator_coefficient": plan.spectator_coefficient,
                 "spectator_correction_phases": _floats(np.angle(np.diag(plan.spectator_correction))),
                 "qutrit0_correction_phases": _floats(np.angle(np.diag(plan.pulse_phase_fix)))}
    else:
        if args.solution:
            try:
                sol = json.loads(Path(args.solution).read_text())
                alphas = np.array(sol["alphas_pi"], dtype=float) * np.pi
                conv = sol.get("convention", {})
            except (OSError, ValueError, KeyError) as exc:
                raise UsageError(f"cannot read solution file: {exc}") from None
            result = evaluate_alphas(alphas, int(conv.get("mm_sign", -1)), conv.get("order", "forward"))
            fid = result["fidelity"]
        else:
            sol = optimize_phase_angles(seed=args.seed, restarts=args.restarts, tol=PHASEGATE_TOL)
            fid = sol.fidelity
            extra = {"solution": sol.to_json()}
        checks.append(_check("phase_gate_infidelity", max(1 - fid, 0.0), PHASEGATE_TOL))
    ok = all(c["passed"] for c in checks)
    report = {"which": args.which, "passed": ok, "checks": checks, **extra}
    if not ok:
        worst = max(checks, key=lambda c: c["measured"] - c["tolerance"])
        print(f"verification failed: {worst['name']} = {worst['measured']:.3e} "
              f"> {worst['tolerance']:.1e}", file=sys.stderr)
    return (0 if ok else 1), _dumps(report)


def cmd_optimize_phase(args) -> tuple[int, str]:
    sol = optimize_phase_angles(seed=args.seed, restarts=args.restarts, tol=args.tol,
                                stop_at_first=not args.all_restarts)
    report = sol.to_json()
    report["seed"] = args.seed
    report["restarts"] = args.restarts
    report["published_angles"] = evaluate_published_angles()
    return 0, _dumps(report)


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--out", choices=["json", "csv"], help="output format")
    common.add_argument("--species-file", help="JSON species registry")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--output", "-o", help="write to this file instead of stdout")

    trap = argparse.ArgumentParser(add_help=False)
    trap.add_argument("--ions", type=int, default=None, help="number of ions")
    trap.add_argument("--nu1-hz", type=float, default=200e3, help="axial trap frequency in Hz")
    trap.add_argument("--B0", type=float, default=None,
                      help="field at the chain centre in T (default: x = 1 field of the species)")
    trap.add_argument("--b", type=float, default=0.0, help="field gradient in T/m")
    trap.add_argument("--species", default="yb171")

    p = argparse.ArgumentParser(prog="spinqutrit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--out", choices=["json", "csv"], default="json")
    p.add_argument("--species-file", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", default=None)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("chain", parents=[common, trap], help="equilibrium, modes, J matrix, window")
    s.add_argument("--epsilon-m", type=float, default=0.01)
    s.set_defaults(func=cmd_chain)

    s = sub.add_parser("jmatrix", parents=[common, trap], help="J coupling matrix")
    s.set_defaults(func=cmd_jmatrix)

    s = sub.add_parser("breitrabi", parents=[common, trap], help="per-ion Breit-Rabi frequencies")
    s.set_defaults(func=cmd_breitrabi)

    s = sub.add_parser("bounds", parents=[common, trap], help="magnetic gradient window")
    s.add_argument("--epsilon-m", type=float, default=0.01)
    s.set_defaults(func=cmd_bounds)

    for name, func, helptext in (("simulate", cmd_simulate, "run a pulse program"),
                                 ("measure", cmd_measure, "run a program and sample the readout")):
        s = sub.add_parser(name, parents=[common, trap], help=helptext)
        s.add_argument("program", help="pulse program (text or JSON)")
        s.add_argument("--shots", type=int, default=1000)
        s.add_argument("--initial", default=None, help="initial basis state, e.g. 012")
        s.set_defaults(func=func)

    s = sub.add_parser("verify", parents=[common], help="check a gate identity")
    s.add_argument("which", choices=["refocus", "xor", "phasegate"])
    s.add_argument("--theta", type=float, default=1.0)
    s.add_argument("--solution", default=None, help="solution file to check (phasegate)")
    s.add_argument("--restarts", type=int, default=64)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("optimize-phase", parents=[common], help="search phase-gate pulse angles")
    s.add_argument("--restarts", type=int, default=64)
    s.add_argument("--tol", type=float, default=PHASEGATE_TOL)
    s.add_argument("--all-restarts", action="store_true",
                   help="run every restart instead of stopping at the first success")
    s.set_defaults(func=cmd_optimize_phase)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            code, text = args.func(args)
    except ProgramParseError as exc:
        print(f"{args.program}:{exc.line}:{exc.column}: {exc.message}", file=sys.stderr)
        return 2
    except (UsageError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _emit(text, args.output)
    return code


if __name__ == "__main__":
    sys.exit(main())
