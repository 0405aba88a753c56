"""Command-line front end.

Exit codes: 0 success (or separable), 1 nonseparable verdict, 2 usage error,
3 solver failure or no witness.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .causal_sdp import SolverError, is_causally_separable
from .hardware import CompileError, recipe_for
from .processes import (
    GATE_ORDER,
    ProcessMatrix,
    dephase_control,
    parse_gates,
    switch_process,
    white_noise_process,
)
from .simulator import NoiseModel, figure4_rows, run_experiment, write_figure4_csv
from .witness import CausalWitness, NoWitnessError, corrected_separable_bound, optimize_witness

EXIT_OK, EXIT_NONSEPARABLE, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3
RECIPE_FIELDS = ["gate", "theta1_deg", "theta2_deg", "phase_rad"]

log = logging.getLogger("qswitch")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, args, **extra) -> None:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "config") and not callable(v)}
    config.update(extra, version=__version__)
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True, default=str) + "\n")


def _emit(args, text: str, payload: dict) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True, default=str))
    else:
        print(text)


def write_recipes_csv(names, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RECIPE_FIELDS)
        writer.writeheader()
        for name in names:
            row = recipe_for(name).row()
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def cmd_witness(args) -> int:
    gates = parse_gates(args.gates)
    out = _out_dir(args)
    start = time.perf_counter()
    try:
        witness = optimize_witness(switch_process(), gates)
    except NoWitnessError as exc:
        _emit(
            args,
            f"no witness possible with gates {args.gates}: optimum {exc.optimum:.6f} >= 0",
            {"status": "no_witness", "optimum": exc.optimum},
        )
        return EXIT_SOLVER
    witness.save(out / "witness.json")
    write_recipes_csv(
        sorted({g for p in witness.pairs for g in p}, key=GATE_ORDER.index), out / "recipes.csv"
    )
    _write_config(out, args, elapsed_s=round(time.perf_counter() - start, 3))
    _emit(
        args,
        f"optimum <S> = {witness.optimum:.6f}\nnonzero pairs = {len(witness.gamma)}\nwrote {out}",
        {"optimum": witness.optimum, "pairs": len(witness.gamma), "out": str(out), **witness.diagnostics},
    )
    return EXIT_OK


def cmd_process(args) -> int:
    if args.kind == "switch":
        w = switch_process(args.target, args.control)
    elif args.kind in ("AB", "BA"):
        w = switch_process(args.target, "zero" if args.kind == "AB" else "one")
    else:
        w = white_noise_process()
    if args.visibility is not None:
        w = dephase_control(w, args.visibility)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(w.to_json()) + "\n")
    _emit(args, f"wrote {path}", {"out": str(path), "trace": w.trace()})
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        w = ProcessMatrix.from_json(json.loads(Path(args.process_file).read_text()))
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot read process: {exc}", file=sys.stderr)
        return EXIT_USAGE
    measurable = None
    if not args.full:
        try:
            witness = optimize_witness(w, parse_gates(args.gates), sparsify=False)
            measurable = witness.optimum
        except NoWitnessError:
            pass
    try:
        verdict = is_causally_separable(w)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if verdict.separable:
        _emit(
            args,
            f"separable: q = {verdict.q:.6f} (residual {verdict.residual:.2e})",
            {"separable": True, "q": verdict.q, "residual": verdict.residual},
        )
        return EXIT_OK
    lines = [
        f"nonseparable: certificate value tr[S W] = {verdict.value:.6f}"
        f" (random robustness {-verdict.value:.6f})"
    ]
    if measurable is not None:
        lines.append(f"measurable witness value ({args.gates}) = {measurable:.6f}")
    _emit(
        args,
        "\n".join(lines),
        {"separable": False, "certificate_value": verdict.value, "measurable_value": measurable},
    )
    return EXIT_NONSEPARABLE


def _load_witness(path) -> CausalWitness:
    return CausalWitness.load(path)


def _noise(args) -> NoiseModel:
    return NoiseModel(
        visibility=args.visibility,
        angle_jitter_deg=args.jitter,
        shots_per_setting=args.shots,
        rng_seed=args.seed,
        analytic=args.analytic,
    )


def cmd_simulate(args) -> int:
    witness = _load_witness(args.witness_file)
    if args.bound is not None:
        witness.separable_bound = args.bound
    noise = _noise(args)
    result = run_experiment(witness, noise)
    out = _out_dir(args)
    write_figure4_csv(figure4_rows(result), out / "figure4.csv")
    (out / "summary.json").write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    _write_config(out, args, noise=asdict(noise))
    est = result.witness_estimate
    sigma = "n/a" if est.sigma_from_bound is None else f"{est.sigma_from_bound:.1f}"
    _emit(
        args,
        f"<S> = {est.value:.4f} +/- {est.std_error:.4f} (statistical)\n"
        f"distance from bound {est.separable_bound:g}: {sigma} sigma",
        result.summary(),
    )
    return EXIT_OK


def cmd_bound(args) -> int:
    witness = _load_witness(args.witness_file)
    try:
        value = corrected_separable_bound(
            witness, args.uncertainty, mc_samples=args.samples, seed=args.seed, model=args.model
        )
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _emit(
        args,
        f"corrected separable bound ({args.model}) at {args.uncertainty:g} deg: {value:.6f}",
        {"uncertainty_deg": args.uncertainty, "model": args.model, "bound": value},
    )
    return EXIT_OK


def cmd_recipes(args) -> int:
    names = [g.name for g in parse_gates(args.gates)]
    try:
        if args.out:
            write_recipes_csv(names, Path(args.out))
        else:
            writer = csv.DictWriter(sys.stdout, fieldnames=RECIPE_FIELDS)
            writer.writeheader()
            for n in names:
                writer.writerow(recipe_for(n).row())
    except CompileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable stdout")
    common.add_argument("--config", help="JSON file of flag defaults")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qswitch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = {}

    p = parser.subcommands["witness"] = sub.add_parser(
        "witness", parents=[common], help="optimise the measurable witness for the ideal switch"
    )
    p.add_argument("--gates", default="".join(GATE_ORDER))
    p.add_argument("--out", default="out/witness")
    p.set_defaults(func=cmd_witness)

    p = parser.subcommands["process"] = sub.add_parser(
        "process", parents=[common], help="write a process matrix JSON file"
    )
    p.add_argument("kind", choices=["switch", "AB", "BA", "noise"])
    p.add_argument("--target", default="zero")
    p.add_argument("--control", default="plus")
    p.add_argument("--visibility", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_process)

    p = parser.subcommands["check"] = sub.add_parser(
        "check", parents=[common], help="decide causal separability of a process file"
    )
    p.add_argument("process_file")
    p.add_argument("--gates", default="".join(GATE_ORDER), help="family for the measurable witness value")
    p.add_argument("--full", action="store_true", help="skip the measurable witness value")
    p.set_defaults(func=cmd_check)

    p = parser.subcommands["simulate"] = sub.add_parser(
        "simulate", parents=[common], help="simulate the experiment for a witness file"
    )
    p.add_argument("witness_file")
    p.add_argument("--visibility", type=float, default=0.938)
    p.add_argument("--jitter", type=float, default=1.0)
    p.add_argument("--shots", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--analytic", action="store_true", help="expectation values, no sampling")
    p.add_argument("--bound", type=float, help="separable bound used for the sigma distance")
    p.add_argument("--out", default="out/simulate")
    p.set_defaults(func=cmd_simulate)

    p = parser.subcommands["bound"] = sub.add_parser(
        "bound", parents=[common], help="misalignment-corrected separable bound"
    )
    p.add_argument("witness_file")
    p.add_argument("--uncertainty", type=float, default=1.0, help="prism angle uncertainty in degrees")
    p.add_argument("--samples", type=int, default=200, help="interior Monte-Carlo samples")
    p.add_argument(
        "--model",
        choices=["sampled", "adversarial"],
        default="sampled",
        help="per-gate sampled errors, or worst-case independent errors per pair",
    )
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bound)

    p = parser.subcommands["recipes"] = sub.add_parser(
        "recipes", parents=[common], help="prism/lens settings for gates"
    )
    p.add_argument("--gates", default="".join(GATE_ORDER))
    p.add_argument("--out")
    p.set_defaults(func=cmd_recipes)
    return parser


def _parse(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            defaults = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config: {exc}")
        unknown = sorted(set(defaults) - set(vars(args)))
        if unknown:
            parser.error(f"unknown config keys: {unknown}")
        # flags given on the command line still win
        parser.subcommands[args.command].set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = _parse(parser, argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        return args.func(args)
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
