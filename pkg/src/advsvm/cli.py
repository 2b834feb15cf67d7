"""Command-line entry point: ``advsvm <subcommand> ...``.

Every command is deterministic given its flags (all randomness flows from
``--seed``).  Failures print one JSON line to stderr followed by a readable
message and exit non-zero.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import best_response as br
from . import model as mdl
from .equilibrium import run_best_response_dynamics, verify_equilibrium
from .errors import AdvSVMError, DataFormatError, FeasibilityError
from .game import GameConfig, evaluate, feasible_adversary, feasible_classifier
from .montecarlo import decision_boundary_points, empirical_rates, scatter_points
from .policy import AdversaryPolicy, ClassifierPolicy, identity_adversary, policy_from_dict

DEFAULT_SEED = 42


def _write_json(path: str | None, doc: dict) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc.msg})", row=exc.lineno) from None


def load_model(source: str, ridge: float | None = None, labels01: bool = False, whiten: bool = False):
    """``synthetic``, ``fit:<csv>``, or a model JSON file."""
    if source == "synthetic":
        return mdl.synthetic_example(), None
    if source.startswith("fit:"):
        data = mdl.read_csv(source[4:], labels01=labels01)
        transform = None
        if whiten:
            data, transform = mdl.whiten(data)
        return mdl.fit(data, ridge), transform
    doc = _read_json(source)
    transform = mdl.WhitenTransform.from_dict(doc["whiten"]) if doc.get("whiten") else None
    return mdl.GaussianClassModel.from_dict(doc.get("model", doc)), transform


def load_policy(path: str):
    doc = _read_json(path)
    return policy_from_dict(doc.get("policy", doc))


def _expect(policy, kind, path):
    if not isinstance(policy, kind):
        raise DataFormatError(f"{path}: expected a {kind.__name__}, got {type(policy).__name__}", column="type")
    return policy


def _model_source(args):
    return load_model(args.model, args.ridge, args.labels01, args.whiten)


# ------------------------------------------------------------------ commands


def cmd_gen_synthetic(args) -> None:
    m = mdl.synthetic_example()
    pos = mdl.sample(m, 1, args.n_per_class, args.seed)
    neg = mdl.sample(m, -1, args.n_per_class, args.seed)
    mdl.write_csv(args.out, mdl.dataset_from_samples(pos, neg, ("x1", "x2")))


def cmd_fit(args) -> None:
    data = mdl.read_csv(args.csv, labels01=args.labels01)
    transform = None
    if args.whiten:
        data, transform = mdl.whiten(data)
    model = mdl.fit(data, args.ridge)
    doc = {"schema": "advsvm/model/v1", "model": model.to_dict(), "whiten": transform.to_dict() if transform else None}
    if data.columns:
        doc["columns"] = list(data.columns)
    _write_json(args.out, doc)


def cmd_best_response(args) -> None:
    model, _ = _model_source(args)
    if args.player == "classifier":
        adv = _expect(load_policy(args.opponent), AdversaryPolicy, args.opponent) if args.opponent else identity_adversary(model.dim)
        res = br.classifier_best_response(model, adv, args.delta, args.solver_tol)
        clf = res.policy
        if not feasible_classifier(model, clf, args.delta, 1e-6):
            raise FeasibilityError("classifier best response failed its feasibility check")
    else:
        if not args.opponent:
            raise DataFormatError("the adversary best response needs --opponent <classifier.json>", column="opponent")
        clf = _expect(load_policy(args.opponent), ClassifierPolicy, args.opponent)
        res = br.adversary_best_response(model, clf, args.epsilon, args.solver_tol, beta_scaling=args.beta_scaling, resolution=args.resolution)
        adv = res.policy
        if not feasible_adversary(model, adv, args.epsilon, 1e-6):
            raise FeasibilityError("adversary best response failed its feasibility check")
    doc = {
        "schema": "advsvm/best-response/v1",
        "player": args.player,
        "policy": res.policy.to_dict(),
        "achieved": res.value,
        "metrics": evaluate(model, adv, clf).to_dict(args.delta, args.epsilon),
        "diagnostics": res.diagnostics,
    }
    _write_json(args.out, doc)


def cmd_equilibrium(args) -> None:
    model, _ = _model_source(args)
    config = GameConfig(args.delta, args.epsilon, args.varpi, args.max_iters, args.conv_tol, args.solver_tol)
    adv, clf, trace = run_best_response_dynamics(model, config, sweep=args.sweep, beta_scaling=args.beta_scaling)
    if not (feasible_adversary(model, adv, config.epsilon, 1e-6) and feasible_classifier(model, clf, config.delta, 1e-6)):
        raise FeasibilityError("equilibrium policies failed their feasibility check")
    doc = {
        "schema": "advsvm/equilibrium/v1",
        "adversary": adv.to_dict(),
        "classifier": clf.to_dict(),
        "metrics": evaluate(model, adv, clf).to_dict(config.delta, config.epsilon),
        "config": config.to_dict(),
        "sweep": args.sweep,
        "converged": trace.converged,
        "stop_reason": trace.stop_reason,
        "iterations": len(trace.iterations),
    }
    if args.verify:
        doc["verification"] = verify_equilibrium(model, adv, clf, config, args.verify_tol).to_dict()
    if args.trace:
        Path(args.trace).write_text(trace.to_jsonl())
    _write_json(args.out, doc)


def cmd_eval(args) -> None:
    model, _ = _model_source(args)
    adv = _expect(load_policy(args.adversary), AdversaryPolicy, args.adversary) if args.adversary else identity_adversary(model.dim)
    clf = _expect(load_policy(args.classifier), ClassifierPolicy, args.classifier)
    _write_json(args.out, {"schema": "advsvm/metrics/v1", "metrics": evaluate(model, adv, clf).to_dict(args.delta, args.epsilon)})


def cmd_simulate(args) -> None:
    model, _ = _model_source(args)
    adv = _expect(load_policy(args.adversary), AdversaryPolicy, args.adversary) if args.adversary else identity_adversary(model.dim)
    clf = _expect(load_policy(args.classifier), ClassifierPolicy, args.classifier)
    rates = empirical_rates(model, adv, clf, args.n, args.seed, args.workers)
    if args.scatter:
        rows = scatter_points(model, adv, args.n_per_class, args.seed)
        with Path(args.scatter).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*(f"x{i + 1}" for i in range(model.dim)), "class", "manipulated"])
            w.writerows(rows)
    doc = {
        "schema": "advsvm/rates/v1",
        "rates": rates.to_dict(),
        "closed_form": evaluate(model, adv, clf).to_dict(None, None),
        "seed": args.seed,
    }
    _write_json(args.out, doc)


def cmd_boundary(args) -> None:
    clf = _expect(load_policy(args.classifier), ClassifierPolicy, args.classifier)
    pts = decision_boundary_points(clf, (args.lo, args.hi), args.count)
    out = sys.stdout if args.out in (None, "-") else Path(args.out).open("w", newline="")
    try:
        w = csv.writer(out)
        w.writerow(["x1", "x2"])
        w.writerows(pts)
    finally:
        if out is not sys.stdout:
            out.close()


# -------------------------------------------------------------------- parser


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", default="synthetic", help="'synthetic', 'fit:<csv>', or a model JSON file")
    p.add_argument("--ridge", type=float, default=None, help="covariance ridge when fitting (default 1e-8*trace/n)")
    p.add_argument("--labels01", action="store_true", help="CSV labels are 0/1 instead of -1/+1")
    p.add_argument("--whiten", action="store_true", help="whiten features before fitting")


def _add_game_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--epsilon", type=float, default=2.0)
    p.add_argument("--solver-tol", type=float, default=1e-8)
    p.add_argument("--beta-scaling", choices=("perspective", "unscaled"), default="perspective")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advsvm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="sample labeled points from the two-dimensional benchmark model")
    p.add_argument("--n-per-class", type=int, default=500)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("fit", help="fit class-conditional Gaussians to a labeled CSV")
    p.add_argument("csv")
    p.add_argument("--ridge", type=float, default=None)
    p.add_argument("--labels01", action="store_true")
    p.add_argument("--whiten", action="store_true")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("best-response", help="best response of one player to a fixed opponent")
    p.add_argument("player", choices=("adversary", "classifier"))
    p.add_argument("--opponent", help="opponent policy JSON (classifier default: no manipulation)")
    p.add_argument("--resolution", type=int, default=64, help="grid resolution of the reduced adversary search")
    _add_model_flags(p)
    _add_game_flags(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_best_response)

    p = sub.add_parser("equilibrium", help="run averaged best-response dynamics")
    _add_model_flags(p)
    _add_game_flags(p)
    defaults = GameConfig()
    p.add_argument("--varpi", type=float, default=defaults.varpi)
    p.add_argument("--max-iters", type=int, default=defaults.max_iters)
    p.add_argument("--conv-tol", type=float, default=defaults.conv_tol)
    p.add_argument("--sweep", choices=("jacobi", "gauss-seidel"), default="jacobi")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="accepted for uniformity; the dynamics are deterministic")
    p.add_argument("--verify", action="store_true", help="also report unilateral deviation gains")
    p.add_argument("--verify-tol", type=float, default=0.01)
    p.add_argument("--trace", help="write per-iteration records as JSON lines")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("eval", help="closed-form game metrics for a policy pair")
    _add_model_flags(p)
    p.add_argument("--adversary", help="adversary policy JSON (default: no manipulation)")
    p.add_argument("--classifier", required=True)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="Monte Carlo rates for a policy pair, plus optional scatter CSV")
    _add_model_flags(p)
    p.add_argument("--adversary")
    p.add_argument("--classifier", required=True)
    p.add_argument("--n", type=int, default=1_000_000, help="samples per class")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--scatter", help="write x1..xn,class,manipulated rows here")
    p.add_argument("--n-per-class", type=int, default=500)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("boundary", help="points on a two-dimensional decision boundary")
    p.add_argument("--classifier", required=True)
    p.add_argument("--lo", type=float, nargs=2, default=(-3.0, -3.0))
    p.add_argument("--hi", type=float, nargs=2, default=(7.0, 7.0))
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_boundary)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except AdvSVMError as exc:
        sys.stderr.write(json.dumps(exc.to_record()) + "\n")
        sys.stderr.write(f"advsvm {args.command}: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "io", "message": str(exc)}) + "\n")
        sys.stderr.write(f"advsvm {args.command}: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
