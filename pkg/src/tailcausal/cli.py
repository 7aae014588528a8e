"""Command-line interface: ``tailcausal <subcommand> ...``.

Exit status is 0 on success, 1 for invalid input (bad flags, schema or I/O problems) and 2
when the input is well-formed but infeasible (e.g. a gamma matrix no model can produce).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import secrets
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .air import AirError, air_by_impulse, air_by_paths, matrix_to_csv, standardize
from .ctc import CtcMatrix, EstimationError, choose_k, empirical_ctc, parse_k_rule, population_ctc
from .dag import CycleError, PathLimitError, random_dag
from .discovery import InfeasibleGammaError, default_delta, discover, is_linear_extension, recover_weights
from .model import (
    HscmModel,
    ModelError,
    model_from_dict,
    model_to_dict,
    random_model,
    read_samples_csv,
    resolve_threads,
    simulate,
    write_samples_csv,
)
from .oracle import StatisticalError, brute_force_ctc, exhaustive_roundtrip, mc_tail_ratio

log = logging.getLogger("tailcausal")

OUTPUT_FORMAT_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- helpers


def _sha256(path: str | Path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None


def _load_model(path: str) -> HscmModel:
    return model_from_dict(_read_json(path))


def _load_gamma(path: str) -> CtcMatrix:
    doc = _read_json(path)
    if isinstance(doc, dict) and "ctc" in doc and "gamma" not in doc:
        doc = doc["ctc"]
    return CtcMatrix.from_dict(doc)


def _meta(args: argparse.Namespace, inputs: dict[str, str]) -> dict[str, Any]:
    config = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in ("func", "no_timestamp", "verbose") and v is not None
    }
    meta: dict[str, Any] = {
        "tool": "tailcausal",
        "tool_version": __version__,
        "inputs": {name: {"path": p, "hash": _sha256(p)} for name, p in inputs.items()},
        "config": config,
    }
    if not args.no_timestamp:
        meta["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return meta


def _write_json(path: str, doc: dict[str, Any]) -> None:
    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, newline="\n")


def _seed(args: argparse.Namespace) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(63)
        log.info("no --seed given; using %d (recorded in output metadata)", args.seed)
    if args.seed < 0:
        raise ValueError("--seed must be a nonnegative 64-bit integer")
    return args.seed


def _matrix(values: np.ndarray) -> list[list[float]]:
    return [[float(v) for v in row] for row in np.asarray(values)]


def _k_for(args: argparse.Namespace, n: int) -> int:
    if args.k is not None:
        return int(args.k)
    rule, param = parse_k_rule(args.k_rule)
    return choose_k(n, rule, param)


def _coef_range(text: str) -> tuple[float, float]:
    lo, _, hi = text.partition(",")
    try:
        lo_f, hi_f = float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    if not 0 < lo_f <= hi_f:
        raise argparse.ArgumentTypeError("coefficient range needs 0 < LO <= HI")
    return lo_f, hi_f


# ---------------------------------------------------------------- subcommands


def cmd_gen_model(args):
    seed = _seed(args)
    dag = random_dag(args.d, args.edge_prob, seed)
    families = ["linear", "max_linear", "lp"] if args.family == "mixed" else args.family
    p_choices = (args.p,) if args.p is not None else (0.5, 2.0, 3.0)
    model = random_model(dag, families, args.alpha, seed, args.coef_range, p_choices, args.noise, args.scale)
    # the model file schema is closed, so provenance goes to a sidecar
    _write_json(args.output, model_to_dict(model))
    if args.output != "-":
        _write_json(args.output + ".meta.json", {"version": OUTPUT_FORMAT_VERSION, "meta": _meta(args, {})})


def cmd_simulate(args):
    seed = _seed(args)
    model = _load_model(args.model)
    samples = simulate(model, args.n, seed, resolve_threads(args.threads))
    write_samples_csv(samples, args.output)
    _write_json(args.output + ".meta.json", {"version": OUTPUT_FORMAT_VERSION, "meta": _meta(args, {"model": args.model})})


def cmd_air(args):
    model = _load_model(args.model)
    alpha = args.alpha if args.alpha is not None else model.alpha
    F = air_by_impulse(model)
    doc: dict[str, Any] = {"version": OUTPUT_FORMAT_VERSION, "d": model.d, "alpha": alpha, "F": _matrix(F.values)}
    try:
        Fp = air_by_paths(model, args.max_paths)
        diff = float(np.max(np.abs(Fp.values - F.values) / np.maximum(1.0, np.abs(F.values))))
        doc["F_paths"] = _matrix(Fp.values)
        doc["agreement"] = {"max_relative_difference": diff, "agree": diff <= 1e-12}
    except (AirError, PathLimitError) as exc:
        doc["agreement"] = {"skipped": str(exc)}
    Ft, W = standardize(F, alpha)
    doc["F_standardized"] = _matrix(Ft.values)
    doc["W"] = _matrix(W.values)
    doc["meta"] = _meta(args, {"model": args.model})
    _write_json(args.output, doc)
    if args.csv:
        Path(args.csv).write_text(matrix_to_csv(W.values), newline="\n")
    if "agree" in doc["agreement"] and not doc["agreement"]["agree"]:
        log.error("impulse and path AIR disagree by %.3g", doc["agreement"]["max_relative_difference"])
        return 2
    return 0


def cmd_ctc(args):
    inputs = {}
    if args.samples:
        samples = read_samples_csv(args.samples)
        inputs["samples"] = args.samples
        gamma = empirical_ctc(samples, _k_for(args, samples.n))
    elif args.model:
        model = _load_model(args.model)
        inputs["model"] = args.model
        alpha = args.alpha if args.alpha is not None else model.alpha
        _, W = standardize(air_by_impulse(model), alpha)
        gamma = population_ctc(W, model.dag)
    else:
        raise UsageError("ctc needs --model (population) or --samples (estimated)")
    doc = gamma.to_dict()
    doc["meta"] = _meta(args, inputs)
    _write_json(args.output, doc)
    if args.csv:
        Path(args.csv).write_text(matrix_to_csv(gamma.gamma, "conditioning"), newline="\n")


def cmd_recover(args):
    gamma = _load_gamma(args.gamma)
    delta = args.delta if args.delta is not None else default_delta(gamma)
    rec = recover_weights(gamma, delta)
    doc: dict[str, Any] = {
        "version": OUTPUT_FORMAT_VERSION,
        "d": gamma.d,
        "delta": delta,
        "W": _matrix(rec.weights.values),
    }
    if args.alpha is not None:
        doc["alpha"] = args.alpha
        doc["F_standardized"] = _matrix(rec.weights.standardized_air(args.alpha).values)
    doc["diagnostics"] = rec.diagnostics
    doc["meta"] = _meta(args, {"gamma": args.gamma})
    _write_json(args.output, doc)


def cmd_classify(args):
    gamma = _load_gamma(args.gamma)
    report = discover(gamma, args.delta, args.alpha)
    doc = {"version": OUTPUT_FORMAT_VERSION, "mode": args.mode, **report.to_dict()}
    doc["order"] = report.causal_order.get(args.mode)
    doc["meta"] = _meta(args, {"gamma": args.gamma})
    _write_json(args.output, doc)


def cmd_pipeline(args):
    seed = _seed(args)
    model = _load_model(args.model)
    samples = simulate(model, args.n, seed, resolve_threads(args.threads))
    k = _k_for(args, samples.n)
    gamma = empirical_ctc(samples, k)
    delta = args.delta if args.delta is not None else default_delta(gamma)
    report = discover(gamma, delta, model.alpha)

    _, W_true = standardize(air_by_impulse(model), model.alpha)
    gamma_true = population_ctc(W_true, model.dag)
    reach = model.dag.reach
    off = ~np.eye(model.d, dtype=bool)
    reference = {
        "gamma": _matrix(gamma_true.gamma),
        "W": _matrix(W_true.values),
        "max_abs_gamma_error": float(np.max(np.abs(gamma.gamma - gamma_true.gamma)[off], initial=0.0)),
        "order_is_linear_extension": {
            mode: (None if order is None else is_linear_extension(order, reach))
            for mode, order in report.causal_order.items()
        },
    }
    if report.recovered_weights is not None:
        reference["max_abs_W_error"] = float(np.max(np.abs(report.recovered_weights.values - W_true.values)))
    doc = {
        "version": OUTPUT_FORMAT_VERSION,
        "n": args.n,
        "k_used": k,
        "ctc": gamma.to_dict(),
        **report.to_dict(),
        "reference": reference,
        "meta": _meta(args, {"model": args.model}),
    }
    _write_json(args.output, doc)


def cmd_oracle(args):
    seed = _seed(args)
    results: dict[str, Any] = {"version": OUTPUT_FORMAT_VERSION, "check": args.check}
    ok = True
    if args.check == "roundtrip":
        rep = exhaustive_roundtrip(args.d_max, args.graphs, seed)
        results.update(rep.to_dict())
        ok = rep.max_error <= args.tol and rep.support_ok
        print(f"{'PASS' if ok else 'FAIL'} roundtrip: {len(rep.cases)} graphs, max error {rep.max_error:.3g}")
    else:
        if not args.model:
            raise UsageError(f"oracle {args.check} needs --model")
        model = _load_model(args.model)
        if args.check == "tail-ratio":
            tr = mc_tail_ratio(model, args.node, args.quantile, args.n, seed)
            ok = tr.relative_error <= args.tol
            results.update(vars(tr), relative_error=tr.relative_error)
            print(f"{'PASS' if ok else 'FAIL'} tail-ratio node {args.node}: {tr.ratio:.4f} vs {tr.target:.4f}")
        else:
            j, i = args.pair
            value = brute_force_ctc(model, j, i, args.n, args.quantile, seed)
            _, W = standardize(air_by_impulse(model), model.alpha)
            target = population_ctc(W, model.dag)[j, i]
            ok = abs(value - target) <= args.tol
            results.update(value=value, population=target, abs_error=abs(value - target))
            print(f"{'PASS' if ok else 'FAIL'} brute-force-ctc ({j},{i}): {value:.4f} vs {target:.4f}")
    results["passed"] = ok
    results["meta"] = _meta(args, {"model": args.model} if getattr(args, "model", None) else {})
    if args.output:
        _write_json(args.output, results)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tailcausal", description="Heavy-tailed homogeneous SCMs: simulate, estimate, recover.")
    parser.add_argument("--version", action="version", version=f"tailcausal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=False, threads=False):
        p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from output metadata")
        p.add_argument("-v", "--verbose", action="store_true")
        if seed:
            p.add_argument("--seed", type=int, help="64-bit seed; generated and recorded if omitted")
        if threads:
            p.add_argument("--threads", type=int, help="worker threads (default: $TAILCAUSAL_THREADS or 1)")

    p = sub.add_parser("gen-model", help="random model -> model.json")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--edge-prob", type=float, default=0.5)
    p.add_argument("--family", choices=["linear", "max_linear", "lp", "mixed"], default="linear")
    p.add_argument("--p", type=float, help="l_p exponent (default: drawn from 0.5, 2, 3)")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--noise", choices=["pareto", "frechet", "log_perturbed_pareto"], default="pareto")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--coef-range", type=_coef_range, default=(0.5, 2.0), metavar="LO,HI")
    p.add_argument("-o", "--output", required=True)
    common(p, seed=True)
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("simulate", help="model.json -> samples.csv")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    common(p, seed=True, threads=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("air", help="model.json -> air.json (impulse and path methods)")
    p.add_argument("--model", required=True)
    p.add_argument("--alpha", type=float, help="override the model's alpha when standardizing")
    p.add_argument("--max-paths", type=int, default=10**6)
    p.add_argument("--csv", help="also write W as CSV")
    p.add_argument("-o", "--output", required=True)
    common(p)
    p.set_defaults(func=cmd_air)

    p = sub.add_parser("ctc", help="population gamma from a model, or estimated gamma from samples")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--samples")
    p.add_argument("--alpha", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--k-rule", default="power:0.4")
    p.add_argument("--csv", help="also write gamma as CSV")
    p.add_argument("-o", "--output", required=True)
    common(p)
    p.set_defaults(func=cmd_ctc)

    p = sub.add_parser("recover", help="gamma.json -> weights.json")
    p.add_argument("--gamma", required=True)
    p.add_argument("--delta", type=float)
    p.add_argument("--alpha", type=float, help="also report F_tilde = W**(1/alpha)")
    p.add_argument("-o", "--output", required=True)
    common(p)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("classify", help="gamma.json -> report.json")
    p.add_argument("--gamma", required=True)
    p.add_argument("--delta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mode", choices=["exact", "ease"], default="ease")
    p.add_argument("-o", "--output", required=True)
    common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("pipeline", help="simulate, estimate, classify and recover in one go")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--k-rule", default="power:0.4")
    p.add_argument("--delta", type=float)
    p.add_argument("-o", "--output", required=True)
    common(p, seed=True, threads=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("oracle", help="Monte Carlo and brute-force checks")
    p.add_argument("check", choices=["tail-ratio", "brute-force-ctc", "roundtrip"])
    p.add_argument("--model")
    p.add_argument("--node", type=int, default=1)
    p.add_argument("--pair", type=int, nargs=2, metavar=("J", "I"), default=(1, 2))
    p.add_argument("--n", type=int, default=10**6)
    p.add_argument("--quantile", type=float, default=0.999)
    p.add_argument("--d-max", type=int, default=6)
    p.add_argument("--graphs", type=int, default=50)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("-o", "--output")
    common(p, seed=True)
    p.set_defaults(func=cmd_oracle)
    return parser


_DEFAULT_TOL = {"roundtrip": 1e-10, "tail-ratio": 0.2, "brute-force-ctc": 0.1}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
        if args.command == "oracle" and args.tol is None:
            args.tol = _DEFAULT_TOL[args.check]
        status = args.func(args)
        return int(status or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InfeasibleGammaError, CycleError) as exc:
        print(f"infeasible input: {exc}", file=sys.stderr)
        return 2
    except (ModelError, EstimationError, StatisticalError, AirError, PathLimitError, ValueError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
