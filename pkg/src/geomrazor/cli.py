"""``geomrazor`` command-line entry point.

Every command writes only under the path given by ``--out``.  Failures exit
with status 1 and print a JSON object ``{"error", "message", ...}`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from .complexity import Dataset, Grid1D, MonteCarlo, measure
from .experiments import (
    ExperimentSpec,
    run_lr_sweep,
    run_regression_1d,
    run_train,
    write_snapshots,
)
from .network import load_checkpoint, save_checkpoint
from .plotting import emit_plot
from .theorem import DEFAULT_EPS, check_theorem, weight_spectral_norms
from .training import write_records_csv

_UNION_TAGS = {"random_smooth", "fixed_seeded", "two_moons", "gaussian_blobs"}


class SpecError(ValueError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path


class CheckFailed(RuntimeError):
    pass


def _loc_to_path(loc) -> str:
    return ".".join(str(p) for p in loc if p not in _UNION_TAGS)


def parse_spec(path) -> ExperimentSpec:
    """Load and strictly validate an experiment spec JSON file."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON: {exc}") from None
    try:
        return ExperimentSpec.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        where = _loc_to_path(err["loc"])
        raise SpecError(f"{where or '<root>'}: {err['msg']}", where) from None


def spec_to_json(spec: ExperimentSpec) -> str:
    """Canonical serialization: sorted keys, defaults filled in."""
    return json.dumps(spec.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_measure(args) -> dict:
    mlp = load_checkpoint(args.model)
    data = Dataset.load(args.data)
    quad = None
    if args.quad == "grid":
        quad = Grid1D(args.n)
    elif args.quad == "mc":
        quad = MonteCarlo(args.n, args.seed)
    report = measure(mlp, data, quad, args.polytope)
    out = _out_dir(args.out)
    _write_json(out / "report.json", report.to_dict())
    return report.to_dict()


def _load_inputs(path) -> np.ndarray:
    raw = json.loads(Path(path).read_text())
    if isinstance(raw, dict):
        raw = raw.get("inputs")
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError(f"{path}: expected a list of input vectors (or {{\"inputs\": [...]}})")
    return arr


def cmd_check_theorem(args) -> dict:
    mlp = load_checkpoint(args.model)
    xs = _load_inputs(args.inputs)
    if xs.shape[1] != mlp.input_dim:
        raise ValueError(f"inputs are {xs.shape[1]}-D but the model takes {mlp.input_dim} inputs")
    comps = range(mlp.output_dim) if args.output_index is None else [args.output_index]
    w_norms = weight_spectral_norms(mlp)
    out = _out_dir(args.out)
    n_checks = n_viol = 0
    worst = float("inf")
    with open(out / "verdicts.jsonl", "w") as fh:
        for j, x in enumerate(xs):
            for k in comps:
                v = check_theorem(mlp, x, k, args.eps, w_norms)
                rec = {"input_index": j, "holds": v.holds(args.rtol), **v.to_dict()}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
                n_checks += 1
                n_viol += not rec["holds"]
                if v.rhs > 0:
                    worst = min(worst, v.slack / v.rhs)
    summary = {"n_checks": n_checks, "n_violations": n_viol, "rtol": args.rtol, "eps": args.eps,
               "min_relative_slack": None if worst == float("inf") else worst}
    _write_json(out / "summary.json", summary)
    if n_viol:
        raise CheckFailed(f"{n_viol} of {n_checks} checks violate lhs <= rhs (rtol {args.rtol:g})")
    return summary


def _save_spec(out: Path, spec: ExperimentSpec) -> None:
    (out / "spec.json").write_text(spec_to_json(spec))


def cmd_train(args) -> dict:
    spec = parse_spec(args.spec)
    out = _out_dir(args.out)
    mlp, records = run_train(spec)
    h = spec.train_config.learning_rate
    bad = [r.step for r in records if r.modified_loss != r.train_loss + h * r.igr_penalty]
    if bad:
        raise CheckFailed(f"modified-loss bookkeeping broken at steps {bad[:5]}")
    _save_spec(out, spec)
    write_records_csv(records, out / "records.csv")
    save_checkpoint(mlp, out / "model.json")
    summary = {"name": spec.name, "steps": spec.train_config.steps, "final": records[-1].__dict__}
    _write_json(out / "summary.json", summary)
    return summary


def cmd_regress1d(args) -> dict:
    spec = parse_spec(args.spec)
    out = _out_dir(args.out)
    records, snapshots, summary = run_regression_1d(spec)
    _save_spec(out, spec)
    write_records_csv(records, out / "records.csv")
    snap_dir = _out_dir(out / "snapshots")
    write_snapshots(snapshots, snap_dir)
    _write_json(out / "summary.json", summary)
    return summary


def cmd_sweep(args) -> dict:
    spec = parse_spec(args.spec)
    out = _out_dir(args.out)
    result = run_lr_sweep(spec)
    _save_spec(out, spec)
    result.write_csv(out / "sweep.csv")
    summary = {
        "name": spec.name,
        "n_rows": len(result.rows),
        "n_diverged": sum(r.diverged for r in result.rows),
        "spearman_lr_vs_discrete_de": result.spearman("discrete_de_at_best"),
        "spearman_lr_vs_slope": result.spearman("slope_at_best"),
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_plot(args) -> dict:
    ys = [c.strip() for c in args.y.split(",") if c.strip()]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    emit_plot(args.csv, args.x, ys, args.out, logx=args.logx, logy=args.logy, title=args.title)
    return {"svg": str(args.out)}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geomrazor", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("measure", help="geometric complexity of a checkpoint over a dataset")
    m.add_argument("--model", required=True)
    m.add_argument("--data", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--quad", choices=["auto", "grid", "mc"], default="auto")
    m.add_argument("--n", type=int, default=4096, help="grid segments or Monte Carlo samples")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--polytope", choices=["auto", "interval", "box", "hull"], default="auto")
    m.set_defaults(func=cmd_measure)

    c = sub.add_parser("check-theorem", help="verify the gradient-norm inequality at given inputs")
    c.add_argument("--model", required=True)
    c.add_argument("--inputs", required=True)
    c.add_argument("--eps", type=float, default=DEFAULT_EPS)
    c.add_argument("--rtol", type=float, default=1e-9)
    c.add_argument("--output-index", type=int, default=None)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_check_theorem)

    for name, func, help_ in [("train", cmd_train, "train a model from a spec"),
                              ("regress1d", cmd_regress1d, "1-D interpolation study"),
                              ("sweep", cmd_sweep, "learning-rate sweep")]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--spec", required=True)
        s.add_argument("--out", required=True)
        s.set_defaults(func=func)

    pl = sub.add_parser("plot", help="SVG plot of CSV columns")
    pl.add_argument("--csv", required=True)
    pl.add_argument("--x", required=True)
    pl.add_argument("--y", required=True, help="comma-separated column names")
    pl.add_argument("--out", required=True, help="output .svg path")
    pl.add_argument("--logx", action="store_true")
    pl.add_argument("--logy", action="store_true")
    pl.add_argument("--title", default=None)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON error
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        if isinstance(exc, SpecError) and exc.path:
            err["path"] = exc.path
        print(json.dumps(err), file=sys.stderr)
        return 1
    print(json.dumps(result, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
