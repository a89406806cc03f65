"""Command-line front end.

Exit status: 0 on success (a negative verdict is still a result), 1 when the
spec cannot be read or violates the standing hypotheses, 2 when an analysis
precondition fails.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import boundary, fixtures, model, simulate, transfer
from .errors import (DegenerateDataError, DimensionError, NotApplicableError, NotSquareError,
                     NotWellPosedError, OnSpectrumError, RankDeficientConstraintsError, SchemaError,
                     SingularSError, SpecIOError, StepSolveFailedError)

EXIT_OK, EXIT_INPUT, EXIT_PRECONDITION = 0, 1, 2

_INPUT_ERRORS = (SchemaError, DimensionError, SpecIOError)
_PRECONDITION_ERRORS = (NotWellPosedError, NotApplicableError, OnSpectrumError, SingularSError,
                        RankDeficientConstraintsError, DegenerateDataError, NotSquareError,
                        StepSolveFailedError)


class _InvalidSpec(Exception):
    pass


def parse_omega(text: str) -> np.ndarray:
    """``start:stop:count`` with both endpoints included."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected start:stop:count, got {text!r}")
    try:
        a, b, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    if count < 0:
        raise argparse.ArgumentTypeError("count must be nonnegative")
    return np.linspace(a, b, count)


def _load(path) -> model.SystemSpec:
    spec = model.load_spec(fixtures.resolve_spec_path(path))
    return spec


def _require_valid(spec: model.SystemSpec) -> model.ValidationReport:
    rep = model.validate(spec)
    if not rep.ok:
        names = ", ".join(c.name for c in rep.failures())
        raise _InvalidSpec(f"spec violates the standing hypotheses: {names}\n{rep.render()}")
    return rep


def _write(path, text: str) -> None:
    model.atomic_write_text(path, text)


# ---------------------------------------------------------------- subcommands


def cmd_validate(args) -> int:
    rep = model.validate(_load(args.spec))
    print(rep.render())
    return EXIT_OK if rep.ok else EXIT_INPUT


def _analysis_dict(spec, rep: boundary.WellPosednessReport) -> dict:
    a = rep.algebra
    enc = model.encode_matrix
    return {
        "name": spec.name,
        "verdict": rep.verdict.value,
        "criterion": rep.criterion.value,
        "sigma_min": rep.sigma_min,
        "sigma_ratio": rep.sigma_ratio,
        "q_sigma_ratio": rep.q_sigma_ratio,
        "passivity": rep.passivity.status.value,
        "passivity_defect": None if np.isnan(rep.passivity.defect) else rep.passivity.defect,
        "regular": rep.regular,
        "feedthrough": None if rep.feedthrough is None else enc(rep.feedthrough),
        "matrices": {k: enc(getattr(a, k)) for k in ("T", "K1", "K2", "B1", "B2", "C1", "C2", "R")},
    }


def cmd_analyze(args) -> int:
    spec = _load(args.spec)
    _require_valid(spec)
    rep = boundary.wellposedness_verdict(spec)
    print(f"spec: {spec.name or args.spec}  (n={spec.n}, m={spec.m})")
    print(rep.render())
    payload = _analysis_dict(spec, rep)
    if args.feedthrough:
        fr = transfer.feedthrough_limit(spec, N=args.grid or transfer.DEFAULT_N)
        print(f"numerical limit of G(r):\n{boundary.format_matrix(fr.limit)}")
        print(f"|limit - D| = {fr.deviation:.3e}   |G({fr.rs[-1]:g}) - D| = {fr.raw_deviation:.3e}")
        payload["feedthrough_limit"] = model.encode_matrix(fr.limit)
        payload["feedthrough_deviation"] = fr.deviation
    if args.out:
        _write(args.out, json.dumps(payload, indent=1) + "\n")
    return EXIT_OK


def cmd_transfer(args) -> int:
    spec = _load(args.spec)
    _require_valid(spec)
    omegas = args.omega if args.omega is not None else np.zeros(1)
    sweep = transfer.transfer_sweep(spec, args.re, omegas, args.grid or transfer.DEFAULT_N)
    text = sweep.to_csv()
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    print(f"samples: {len(sweep.samples)}  sup norm: {sweep.sup_norm:.6e}  flagged: {len(sweep.flagged)}",
          file=sys.stderr)
    for om, msg in sweep.flagged:
        print(f"  omega={om:g}: {msg}", file=sys.stderr)
    return EXIT_OK


def _summary_lines(spec, traj, rep_skew: bool) -> list:
    lines = [f"steps: {traj.steps}  dt: {traj.dt:g}  N: {traj.N}",
             f"E(0): {traj.energies[0]:.6e}  E(T): {traj.energies[-1]:.6e}",
             f"initial-state projection defect: {traj.projection_defect:.3e}"]
    try:
        lines.append(f"well-posedness ratio: {simulate.wellposedness_ratio(traj):.6e}")
    except DegenerateDataError:
        lines.append("well-posedness ratio: undefined (zero data)")
    if rep_skew:
        res = simulate.energy_balance_residual(traj, spec)
        scale = max(traj.energies[0], 1e-300)
        lines.append(f"energy balance residual: max {np.abs(res).max(initial=0.0):.3e}"
                     f" (relative to E(0): {np.abs(res).max(initial=0.0) / scale:.3e})")
    return lines


def _output_paths(args):
    if not args.out:
        return None, None
    state = None
    if args.dump_state:
        p = Path(args.out)
        state = p.with_name(p.stem + ".states" + (p.suffix or ".csv"))
    return args.out, state


def cmd_simulate(args) -> int:
    spec = _load(args.spec)
    rep = _require_valid(spec)
    N = args.grid or simulate.DEFAULT_N
    disc = simulate.discretize(spec, N)
    x0 = simulate.smooth_initial_state(spec, N, args.seed)
    if args.input == "zero":
        u = simulate.InputSignal.zero(spec.m)
    else:
        u = simulate.InputSignal.smooth_step(np.full(spec.m, args.amplitude), rise=0.1)
    traj = simulate.simulate(disc, x0, u, args.horizon, args.dt, store_states=args.dump_state)
    out, state = _output_paths(args)
    if out:
        traj.write_csv(out, state)
    print("\n".join(_summary_lines(spec, traj, rep.p0_skew)))
    return EXIT_OK


def cmd_feedback(args) -> int:
    spec = _load(args.spec)
    _require_valid(spec)
    if args.extended:
        spec = boundary.extended_spec(spec)
    N = args.grid or simulate.DEFAULT_N
    x0 = simulate.smooth_initial_state(spec, N, args.seed)
    traj, rep = simulate.feedback_experiment(spec, args.gain, x0, args.horizon, args.dt, N,
                                             store_states=args.dump_state)
    out, state = _output_paths(args)
    if out:
        traj.write_csv(out, state)
    print(f"spec: {spec.name}  (m={spec.m})")
    print(rep.render())
    return EXIT_OK


def cmd_dual(args) -> int:
    spec = _load(args.spec)
    _require_valid(spec)
    dual = boundary.dual_system(spec)
    text = model.dumps_spec(dual)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    status = boundary.passivity_check(dual).status.value
    print(f"dual passivity: {status}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wellposed", description=(
        "Well-posedness, passivity and transfer functions of boundary control systems on [0, 1]."))
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and accuracy warnings")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, grid=True):
        sp.add_argument("spec", help="spec file (JSON) or the name of a bundled fixture")
        sp.add_argument("--out", help="output path (written atomically)")
        sp.add_argument("--seed", type=int, default=0, help="seed for randomized inputs (default 0)")
        if grid:
            sp.add_argument("--grid", type=int, default=None, help="number of grid nodes N")

    sp = sub.add_parser("validate", help="check the standing hypotheses")
    common(sp, grid=False)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("analyze", help="boundary algebra, well-posedness verdict and passivity")
    common(sp)
    sp.add_argument("--feedthrough", action="store_true", help="also extrapolate G(r) for r -> infinity")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("transfer", help="sweep G(r + i omega) and write a CSV")
    common(sp)
    sp.add_argument("--re", type=float, required=True, help="real part r > 0")
    sp.add_argument("--omega", type=parse_omega, default=None, help="start:stop:count (inclusive)")
    sp.set_defaults(func=cmd_transfer)

    for name, fn, helptext in (("simulate", cmd_simulate, "open-loop simulation"),
                               ("feedback", cmd_feedback, "closed loop u = -k y")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.add_argument("--horizon", type=float, default=1.0 if name == "simulate" else 50.0, help="final time T")
        sp.add_argument("--dt", type=float, default=simulate.DEFAULT_DT, help="time step")
        sp.add_argument("--dump-state", action="store_true", help="also write the node-major state history")
        if name == "simulate":
            sp.add_argument("--input", choices=("step", "zero"), default="step",
                            help="smoothed unit step on every input channel, or zero")
            sp.add_argument("--amplitude", type=float, default=1.0)
        else:
            sp.add_argument("--gain", type=float, default=1.0, help="feedback gain k >= 0")
            sp.add_argument("--extended", action="store_true",
                            help="use the full extended input/output pair instead of WB1/WC")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("dual", help="write the dual system spec")
    common(sp, grid=False)
    sp.set_defaults(func=cmd_dual)
    return p


def _join_negative_values(argv: list) -> list:
    # "--omega -10:10:41" would otherwise be read as an unknown option
    out, i = [], 0
    while i < len(argv):
        if argv[i] in ("--omega", "--re", "--gain", "--amplitude") and i + 1 < len(argv) \
                and argv[i + 1].startswith("-") and len(argv[i + 1]) > 1 and \
                (argv[i + 1][1].isdigit() or argv[i + 1][1] == "."):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
            continue
        out.append(argv[i])
        i += 1
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(_join_negative_values(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _InvalidSpec as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    except _INPUT_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _PRECONDITION_ERRORS as exc:
        print(f"precondition failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
