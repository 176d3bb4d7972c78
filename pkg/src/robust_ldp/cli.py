"""Command-line front end: chain-spec files, machine-readable reports,
and plot-data emission.

Chain files are UTF-8 JSON documents with keys "states", "metric" (an
n-by-n matrix or the string "discrete"), "pi0", "kernel" and "r".  All
reports are JSON with a "schema_version" field; infinities are encoded as
the strings "inf"/"-inf" to stay within standard JSON.

Exit codes, stable for scripting: 0 success, 2 input error, 3 condition
check negative, 4 solver non-convergence, 5 unusable estimate.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from datetime import datetime, timezone

import numpy as np

from .chain_core import (
    BallSet,
    ChainSpec,
    Dist,
    Kernel,
    MetricSpace,
    validate_chain,
)
from .divergence import MODEL_NAMES, Variant
from .montecarlo import RateEstimate, SimPlan, compare_rates, simulate_paths
from .rate_solver import RateReport, Residuals, sharpness_check, tail_rate
from .set_chain import ConditionReport, Envelope, check_conditions, envelope, robust_functional_bound
from .transport import w1

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONDITION = 3
EXIT_NO_CONVERGENCE = 4
EXIT_UNUSABLE = 5

SCHEMA_VERSION = "1"


class InputError(Exception):
    """Malformed input, reported with a JSON-path style location."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


def _need(cond: bool, path: str, message: str):
    if not cond:
        raise InputError(path, message)


def _as_number(value, path: str) -> float:
    _need(isinstance(value, (int, float)) and not isinstance(value, bool), path, "expected a number")
    return float(value)


def _as_matrix(value, n: int, path: str) -> np.ndarray:
    _need(isinstance(value, list) and len(value) == n, path, f"expected {n} rows")
    out = np.zeros((n, n))
    for i, row in enumerate(value):
        _need(isinstance(row, list) and len(row) == n, f"{path}[{i}]", f"expected {n} entries")
        for j, v in enumerate(row):
            out[i, j] = _as_number(v, f"{path}[{i}][{j}]")
    return out


def load_chain_file(path: str) -> ChainSpec:
    """Parse and validate a chain-spec file; raises InputError carrying the
    JSON path of the first violation."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError("$", f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError("$", f"invalid JSON: {exc}") from None
    _need(isinstance(doc, dict), "$", "expected a JSON object")
    for key in ("states", "metric", "pi0", "kernel", "r"):
        _need(key in doc, f"$.{key}", "missing required key")
    states = doc["states"]
    _need(
        isinstance(states, list) and states and all(isinstance(s, str) for s in states),
        "$.states",
        "expected a nonempty array of strings",
    )
    n = len(states)
    if doc["metric"] == "discrete":
        space = MetricSpace(tuple(states), 1.0 - np.eye(n))
    else:
        space = MetricSpace(tuple(states), _as_matrix(doc["metric"], n, "$.metric"))
    _need(isinstance(doc["pi0"], list) and len(doc["pi0"]) == n, "$.pi0", f"expected {n} entries")
    pi0 = np.array([_as_number(v, f"$.pi0[{i}]") for i, v in enumerate(doc["pi0"])])
    kernel = _as_matrix(doc["kernel"], n, "$.kernel")
    r = _as_number(doc["r"], "$.r")

    raw = ChainSpec(space, Dist(pi0), Kernel(kernel), r)
    violations = validate_chain(raw)
    if violations:
        raise InputError(violations[0].path, violations[0].message)
    # Renormalize once at load; exact thereafter.
    return ChainSpec(space, Dist.from_values(pi0), Kernel.from_matrix(kernel), r)


def parse_dist(arg: str, space: MetricSpace, flag: str) -> Dist:
    """A state label (Dirac) or comma-separated masses."""
    if arg in space.labels:
        return Dist.dirac(space.labels.index(arg), space.n)
    parts = arg.split(",")
    if len(parts) != space.n:
        raise InputError(flag, f"expected a state label or {space.n} comma-separated masses")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise InputError(flag, "expected numeric masses") from None
    try:
        return Dist.from_values(values)
    except ValueError as exc:
        raise InputError(flag, str(exc)) from None


def parse_lengths(arg: str, flag: str) -> tuple[int, ...]:
    m = re.fullmatch(r"(\d+)\.\.(\d+):(\d+)", arg)
    if not m:
        raise InputError(flag, "expected A..B:S, e.g. 40..160:20")
    a, b, s = (int(g) for g in m.groups())
    if a < 1 or s < 1 or b < a:
        raise InputError(flag, "need 1 <= A <= B and step >= 1")
    return tuple(range(a, b + 1, s))


def _encode(value):
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, np.ndarray):
        return [_encode(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.floating):
        return _encode(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def _decode_float(value) -> float:
    if value == "inf":
        return math.inf
    if value == "-inf":
        return -math.inf
    return float(value)


def rate_report_to_dict(report: RateReport) -> dict:
    return _encode({
        "schema_version": SCHEMA_VERSION,
        "kind": "rate_report",
        "value": report.value,
        "nu_star": report.nu_star.p,
        "q_star": report.q_star.rows,
        "pi_hat": report.pi_hat.rows,
        "residuals": {
            "kkt": report.residuals.kkt,
            "marginal": report.residuals.marginal,
            "invariance": report.residuals.invariance,
        },
        "converged": report.converged,
    })


def rate_report_from_dict(doc: dict) -> RateReport:
    res = doc["residuals"]
    return RateReport(
        _decode_float(doc["value"]),
        Dist(np.array(doc["nu_star"])),
        Kernel(np.array(doc["q_star"])),
        Kernel(np.array(doc["pi_hat"])),
        Residuals(
            _decode_float(res["kkt"]),
            _decode_float(res["marginal"]),
            _decode_float(res["invariance"]),
        ),
        bool(doc["converged"]),
    )


def envelope_to_dict(env: Envelope) -> dict:
    return _encode({
        "schema_version": SCHEMA_VERSION,
        "kind": "envelope",
        "lo": env.lo,
        "hi": env.hi,
    })


def envelope_from_dict(doc: dict) -> Envelope:
    return Envelope(np.array(doc["lo"]), np.array(doc["hi"]))


def condition_report_to_dict(report: ConditionReport) -> dict:
    return _encode({
        "schema_version": SCHEMA_VERSION,
        "kind": "condition_report",
        "m1_holds": report.m1_holds,
        "l0": report.l0,
        "n0": report.n0,
        "m2_holds": report.m2_holds,
        "invariant": report.invariant.p if report.invariant is not None else None,
        "unique_invariant": report.unique_invariant,
        "note": report.note,
    })


def condition_report_from_dict(doc: dict) -> ConditionReport:
    inv = doc["invariant"]
    return ConditionReport(
        bool(doc["m1_holds"]),
        doc["l0"],
        doc["n0"],
        bool(doc["m2_holds"]),
        Dist(np.array(inv)) if inv is not None else None,
        bool(doc["unique_invariant"]),
        doc["note"],
    )


def rate_estimate_to_dict(est: RateEstimate) -> dict:
    return _encode({
        "schema_version": SCHEMA_VERSION,
        "kind": "rate_estimate",
        "lengths": est.lengths,
        "hits": est.hits,
        "p_hat": est.p_hat,
        "slope": est.slope,
        "stderr": est.stderr,
        "usable_lengths": est.usable_lengths,
        "fit_lengths": est.fit_lengths,
        "usable": est.usable,
        "status": est.status,
    })


def rate_estimate_from_dict(doc: dict) -> RateEstimate:
    return RateEstimate(
        np.array(doc["lengths"], dtype=np.int64),
        np.array(doc["hits"], dtype=np.int64),
        np.array(doc["p_hat"], dtype=np.float64),
        None if doc["slope"] is None else _decode_float(doc["slope"]),
        None if doc["stderr"] is None else _decode_float(doc["stderr"]),
        np.array(doc["usable_lengths"], dtype=np.int64),
        np.array(doc["fit_lengths"], dtype=np.int64),
        bool(doc["usable"]),
        doc["status"],
    )


def parse_report(doc: dict):
    kind = doc.get("kind")
    builders = {
        "rate_report": rate_report_from_dict,
        "envelope": envelope_from_dict,
        "condition_report": condition_report_from_dict,
        "rate_estimate": rate_estimate_from_dict,
    }
    if kind not in builders:
        raise InputError("$.kind", f"unknown report kind {kind!r}")
    return builders[kind](doc)


def _emit(payload: dict, args, extra_file: str | None = None):
    doc = dict(payload)
    if not getattr(args, "reproducible", False):
        doc["timestamp"] = datetime.now(timezone.utc).isoformat()
    text = json.dumps(_encode(doc), indent=2, sort_keys=True)
    print(text)
    if extra_file:
        with open(extra_file, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def write_plot_csv(path: str, estimate: RateEstimate):
    lines = ["n,hits,p_hat,ln_p_hat"]
    for n, h, p in zip(estimate.lengths, estimate.hits, estimate.p_hat):
        ln_p = math.log(p) if p > 0 else -math.inf
        lines.append(f"{int(n)},{int(h)},{float(p)},{ln_p}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _entropic_variant(name: str) -> Variant:
    return MODEL_NAMES[name]


def cmd_check(args) -> int:
    spec = load_chain_file(args.chain)
    report = check_conditions(spec, args.max_exponent)
    _emit(condition_report_to_dict(report), args)
    return EXIT_OK if (report.m1_holds and report.m2_holds) else EXIT_CONDITION


def cmd_rate(args) -> int:
    spec = load_chain_file(args.chain)
    ball = BallSet(parse_dist(args.center, spec.space, "--center"), args.kappa)
    if args.kappa < 0:
        raise InputError("--kappa", "must be nonnegative")
    report = tail_rate(spec, ball, _entropic_variant(args.model))
    payload = rate_report_to_dict(report)
    payload["nonvacuous"] = bool(report.value > 1e-6)
    payload["sharp"] = (
        sharpness_check(spec, report)
        if report.converged and math.isfinite(report.value)
        else None
    )
    _emit(payload, args, extra_file=args.out)
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


def cmd_envelope(args) -> int:
    spec = load_chain_file(args.chain)
    variant = _entropic_variant(args.model)
    if args.weights is not None:
        parts = args.weights.split(",")
        if len(parts) != spec.space.n:
            raise InputError("--weights", f"expected {spec.space.n} comma-separated numbers")
        try:
            weights = [float(p) for p in parts]
        except ValueError:
            raise InputError("--weights", "expected numeric weights") from None
        best, argmax = robust_functional_bound(spec, variant, weights)
        _emit(
            {
                "schema_version": SCHEMA_VERSION,
                "kind": "functional_bound",
                "max": best,
                "argmax": argmax.p,
                "weights": weights,
            },
            args,
        )
        return EXIT_OK
    env = envelope(spec, variant, threads=args.threads)
    payload = envelope_to_dict(env)
    payload["states"] = list(spec.space.labels)
    _emit(payload, args)
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = load_chain_file(args.chain)
    ball = BallSet(parse_dist(args.center, spec.space, "--center"), args.kappa)
    variant = _entropic_variant(args.model)
    if args.worst_case:
        solved = tail_rate(spec, ball, variant)
        if not solved.converged:
            _emit(rate_report_to_dict(solved), args)
            return EXIT_NO_CONVERGENCE
        play = solved.pi_hat
        analytic = solved.value
        played = "worst_case"
    else:
        solved = tail_rate(spec.with_radius(0.0), ball, variant)
        play = spec.kernel
        analytic = solved.value
        played = "nominal"
    plan = SimPlan(spec, play, ball, parse_lengths(args.lengths, "--lengths"), args.paths, args.seed)
    estimate = simulate_paths(plan, threads=args.threads)
    verdict = compare_rates(analytic, estimate, args.rel_tol)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "simulation",
        "played": played,
        "analytic_rate": analytic,
        "estimate": rate_estimate_to_dict(estimate),
        "verdict": {
            "status": verdict.status,
            "passed": verdict.passed,
            "analytic": verdict.analytic,
            "slope": verdict.slope,
            "stderr": verdict.stderr,
            "margin": verdict.margin,
        },
    }
    _emit(payload, args)
    if args.plot:
        write_plot_csv(args.plot, estimate)
    return EXIT_OK if estimate.usable else EXIT_UNUSABLE


def cmd_wasserstein(args) -> int:
    spec = load_chain_file(args.chain)
    mu = parse_dist(args.mu, spec.space, "--mu")
    nu = parse_dist(args.nu, spec.space, "--nu")
    value, plan, potential = w1(spec.space, mu, nu)
    dual = float(potential.f @ (mu.p - nu.p))
    _emit(
        {
            "schema_version": SCHEMA_VERSION,
            "kind": "wasserstein",
            "value": value,
            "plan": plan.gamma,
            "potential": potential.f,
            "duality_gap": abs(value - dual),
        },
        args,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robust-ldp",
        description="Robust large-deviations rates, worst-case kernels and "
        "stationary envelopes for finite Markov chains with Wasserstein "
        "kernel ambiguity.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--chain", required=True, help="chain-spec JSON file")
        p.add_argument(
            "--reproducible",
            action="store_true",
            help="suppress the timestamp field for byte-identical output",
        )

    p = sub.add_parser("check", help="verify the chain conditions")
    common(p)
    p.add_argument("--max-exponent", type=int, default=None, help="search bound (default n^2+n)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("rate", help="worst-case tail rate for a Wasserstein ball")
    common(p)
    p.add_argument("--center", required=True, help="ball center: state label or comma-separated masses")
    p.add_argument("--kappa", type=float, required=True, help="ball radius")
    p.add_argument(
        "--model",
        default="RobustEntropy",
        choices=["RobustEntropy", "RobustEntropyAC", "Entropy"],
    )
    p.add_argument("--out", default=None, help="also write the report to this file")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("envelope", help="stationary envelope or linear-functional bound")
    common(p)
    p.add_argument(
        "--model", default="BallIndicator", choices=["BallIndicator", "BallIndicatorAC"]
    )
    p.add_argument("--weights", default=None, help="comma-separated weights for a functional bound")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("simulate", help="Monte Carlo validation of the decay rate")
    common(p)
    p.add_argument("--center", required=True)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--worst-case", action="store_true", help="simulate under the worst-case kernel")
    p.add_argument("--lengths", default="40..160:20", help="path lengths as A..B:S")
    p.add_argument("--paths", type=int, default=200000, help="paths per length")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--rel-tol", type=float, default=0.2, help="relative slope tolerance")
    p.add_argument("--plot", default=None, help="write plot data CSV here")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument(
        "--model",
        default="RobustEntropy",
        choices=["RobustEntropy", "RobustEntropyAC", "Entropy"],
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("wasserstein", help="W1 distance between two laws on the chain's space")
    common(p)
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.set_defaults(func=cmd_wasserstein)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error at {exc.path}: {exc.message}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE


def entry():  # console-script hook
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
