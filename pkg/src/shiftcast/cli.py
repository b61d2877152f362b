"""``shiftcast`` command line: generate, featurize, train, tune, evaluate,
sweep-k, summarize and predict.

Data goes to files (and report tables to stdout); diagnostics go to
stderr. Every command drops ``<command>.config.json`` next to its output,
holding the resolved arguments needed to re-run it.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .domain import (
    BUILTIN_SPECS,
    FEATURE_NAMES,
    KEY_FIELDS,
    TARGETS,
    feature_matrix,
    filter_spec,
    join_spi_aoi,
    resolve_target,
    shift_summary,
    target_vector,
)
from .errors import ConfigError, SchemaError, ShiftcastError
from .modelsel import (
    DEFAULT_CS,
    DEFAULT_EPSILONS,
    DEFAULT_GAMMAS,
    REFERENCE_MODELS,
    TARGET_ORDER,
    Grid,
    evaluate_models,
    grid_search,
    k_sweep,
    mae,
    rmse,
)
from .svr import KernelSpec, TrainConfig, load_model, predict_many, save_model, train
from .synthline import GeneratorConfig, NoiseStd, SpiNoiseStd, builtin_design, generate, manifest
from .tables import (
    read_aoi,
    read_features,
    read_header,
    read_spi,
    write_aoi,
    write_csv,
    write_features,
    write_spi,
)

log = logging.getLogger("shiftcast")

SEED_ENV = "SHIFTCAST_SEED"


class UsageError(ShiftcastError):
    pass


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        seed = int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None
    if seed < 0:
        raise UsageError(f"{SEED_ENV} must be non-negative")
    return seed


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _echo_config(command: str, args: argparse.Namespace, out_path) -> None:
    payload = {"command": command, "shiftcast_version": __version__, "args": {}}
    for key, value in sorted(vars(args).items()):
        if key in ("func",):
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, tuple):
            value = list(value)
        payload["args"][key] = value
    out_dir = Path(out_path)
    if not out_dir.is_dir():
        out_dir = out_dir.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)
    (out_dir / f"{command}.config.json").write_text(text + "\n")


def _jsonable(obj):
    if isinstance(obj, KernelSpec):
        return obj.to_dict()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _train_config(args, kernel=None) -> TrainConfig:
    kernel = kernel or args.kernel
    if kernel == "linear":
        if args.gamma is not None:
            raise UsageError("--gamma is invalid for the linear kernel")
        spec = KernelSpec.linear()
    else:
        spec = KernelSpec.rbf(1.0 if args.gamma is None else args.gamma)
    return TrainConfig(
        c=args.c,
        epsilon=args.epsilon,
        kernel=spec,
        kkt_tolerance=args.kkt_tol,
        max_epochs=args.max_epochs,
        seed=args.seed,
    )


def _load_rows(args):
    rows = read_features(args.features)
    if args.spec is not None:
        rows = filter_spec(rows, args.spec)
        if not rows:
            raise UsageError(f"no rows for --spec {args.spec}")
        return rows
    kinds = sorted({r.spec_name for r in rows})
    if len(kinds) > 1:
        raise UsageError(
            f"features hold {len(kinds)} component types {kinds}; pass --spec NAME (one type) or --spec all (pooled)"
        )
    return rows


# -- commands ---------------------------------------------------------------


def cmd_generate(args) -> int:
    noise = NoiseStd(args.noise_x, args.noise_y, args.noise_angle)
    spi = SpiNoiseStd(args.spi_offset, args.spi_angle, args.spi_volume)
    if args.noiseless:
        noise, spi = NoiseStd(0.0, 0.0, 0.0), SpiNoiseStd(0.0, 0.0, 0.0)
    config = GeneratorConfig(
        mode=args.mode, noise_std=noise, spi_noise_std=spi, replications=args.replications, seed=args.seed,
    )
    if args.spec:
        unknown = [s for s in args.spec if s not in BUILTIN_SPECS]
        if unknown:
            raise UsageError(f"unknown --spec {unknown}; known: {sorted(BUILTIN_SPECS)}")
        specs = [BUILTIN_SPECS[s] for s in args.spec]
    else:
        specs = list(BUILTIN_SPECS.values())
    design = builtin_design()
    data = generate(config, design, specs)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_spi(out / "spi.csv", data.deposits)
    write_aoi(out / "aoi.csv", data.placements)
    truth_header = [*KEY_FIELDS, *FEATURE_NAMES, "y_x", "y_y", "y_ang", "g_x", "g_y", "g_ang"]
    write_csv(
        out / "truth.csv",
        truth_header,
        ([getattr(r, c) for c in truth_header[:-3]] + list(g) for r, g in zip(data.truth, data.noise_free)),
    )
    counts = {"placements": len(data.placements), "deposits": len(data.deposits), "specs": [s.name for s in specs]}
    (out / "manifest.json").write_text(json.dumps(manifest(config, design, counts), indent=2) + "\n")
    _echo_config("generate", args, out)
    print(f"wrote {len(data.placements)} AOI rows and {len(data.deposits)} SPI rows to {out}", file=sys.stderr)
    return 0


def cmd_featurize(args) -> int:
    deposits = read_spi(args.spi)
    placements = read_aoi(args.aoi, specs=BUILTIN_SPECS)
    if args.spec is not None and args.spec != "all":
        if args.spec not in BUILTIN_SPECS:
            raise UsageError(f"unknown --spec {args.spec!r}; known: {sorted(BUILTIN_SPECS)}")
        keep = {p.key for p in placements if p.spec_name == args.spec}
        placements = [p for p in placements if p.key in keep]
        deposits = [d for d in deposits if d.key in keep]
    rows, diag = join_spi_aoi(deposits, placements, BUILTIN_SPECS)
    write_features(args.out, rows)
    diag_path = Path(str(args.out) + ".join.json")
    diag_path.write_text(
        json.dumps(
            {
                "rows": len(rows),
                "orphan_placements": [list(p) for p in diag.orphan_placements],
                "orphan_deposits": [list(d) for d in diag.orphan_deposits],
            },
            indent=2,
        )
        + "\n"
    )
    _echo_config("featurize", args, args.out)
    if not diag.clean:
        print(
            f"warning: {len(diag.orphan_placements)} orphan placement(s), "
            f"{len(diag.orphan_deposits)} orphan deposit(s); see {diag_path}",
            file=sys.stderr,
        )
    print(f"wrote {len(rows)} feature rows to {args.out}", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    config = _train_config(args)
    rows = _load_rows(args)
    target = resolve_target(args.target)
    xs, ys = feature_matrix(rows), target_vector(rows, target)
    model, stats = train(config, xs, ys, feature_names=FEATURE_NAMES, target_name=target)
    save_model(model, args.out)
    _echo_config("train", args, args.out)
    if not stats.converged:
        print(
            f"warning: solver stopped after {stats.epochs_run} epochs with "
            f"{stats.kkt_violations_remaining} KKT violation(s); model flagged converged=false",
            file=sys.stderr,
        )
    pred = predict_many(model, xs)
    print(f"target={target} n={len(ys)} support_vectors={model.n_support} "
          f"train_mae={mae(ys, pred):.6g} train_rmse={rmse(ys, pred):.6g}")
    return 0


def cmd_tune(args) -> int:
    rows = _load_rows(args)
    target = resolve_target(args.target)
    grid = Grid(cs=args.cs, epsilons=args.epsilons, gammas=args.gammas, kernel=args.kernel)
    template = TrainConfig(c=1.0, epsilon=0.0, kkt_tolerance=args.kkt_tol, max_epochs=args.max_epochs,
                           seed=args.seed)
    best, table = grid_search(grid, rows, target, k=args.k, seed=args.seed, standardize=args.standardize,
                              jobs=args.jobs, template=template)
    write_csv(
        args.out,
        ("kernel", "c", "epsilon", "gamma", "mean_mae", "mean_rmse", "not_converged"),
        ((r.config.kernel.variant, r.config.c, r.config.epsilon, "" if r.gamma is None else r.gamma,
          r.cv.mean_mae, r.cv.mean_rmse, r.cv.not_converged) for r in table),
    )
    best_doc = {"target": target, "k": args.k, "kernel": best.kernel.to_dict(), "c": best.c,
                "epsilon": best.epsilon}
    Path(str(args.out) + ".best.json").write_text(json.dumps(best_doc, indent=2) + "\n")
    _echo_config("tune", args, args.out)
    gamma = f" gamma={best.kernel.gamma:g}" if best.kernel.gamma is not None else ""
    print(f"best: kernel={best.kernel.variant} C={best.c:g} epsilon={best.epsilon:g}{gamma}")
    return 0


def _parse_model(text: str):
    """``NAME=linear,C,EPS`` or ``NAME=rbf,C,EPS,GAMMA``."""
    try:
        name, rest = text.split("=", 1)
        parts = rest.split(",")
        kernel = parts[0]
        if kernel == "linear" and len(parts) == 3:
            return name, float(parts[1]), float(parts[2]), KernelSpec.linear()
        if kernel == "rbf" and len(parts) == 4:
            return name, float(parts[1]), float(parts[2]), KernelSpec.rbf(float(parts[3]))
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"bad --model {text!r}; use NAME=linear,C,EPS or NAME=rbf,C,EPS,GAMMA")


def cmd_evaluate(args) -> int:
    rows = _load_rows(args)
    if args.model:
        configs = [
            (name, TrainConfig(c=c, epsilon=e, kernel=k, kkt_tolerance=args.kkt_tol,
                               max_epochs=args.max_epochs, seed=args.seed))
            for name, c, e, k in args.model
        ]
    else:
        configs = [(name, TrainConfig(c=cfg.c, epsilon=cfg.epsilon, kernel=cfg.kernel,
                                      kkt_tolerance=args.kkt_tol, max_epochs=args.max_epochs, seed=args.seed))
                   for name, cfg in REFERENCE_MODELS]
    targets = [resolve_target(t) for t in args.targets.split(",")] if args.targets else list(TARGET_ORDER)
    report = evaluate_models(rows, configs, targets, k=args.k, seed=args.seed, standardize=args.standardize)
    write_csv(args.out, report.CSV_HEADER, report.csv_rows())
    text = report.to_text()
    if args.text_out:
        Path(args.text_out).write_text(text)
    _echo_config("evaluate", args, args.out)
    sys.stdout.write(text)
    bad = sum(r.not_converged for r in report.rows)
    if bad:
        print(f"warning: {bad} fold fit(s) hit max_epochs before converging", file=sys.stderr)
    return 0


def cmd_sweep_k(args) -> int:
    if args.k_min > args.k_max:
        raise UsageError(f"--k-min {args.k_min} > --k-max {args.k_max}")
    if args.k_min < 2:
        raise UsageError("--k-min must be >= 2")
    rows = _load_rows(args)
    target = resolve_target(args.target)
    config = _train_config(args)
    curve = k_sweep(config, rows, target, list(range(args.k_min, args.k_max + 1)), seed=args.seed,
                    standardize=args.standardize)
    write_csv(args.out, ("k", "rmse"), curve)
    _echo_config("sweep-k", args, args.out)
    return 0


def cmd_summarize(args) -> int:
    rows = read_features(args.features)
    if args.spec not in BUILTIN_SPECS:
        raise UsageError(f"unknown --spec {args.spec!r}; known: {sorted(BUILTIN_SPECS)}")
    spec = BUILTIN_SPECS[args.spec]
    rows = filter_spec(rows, spec.name)
    summary = shift_summary(rows, spec)
    header = ["setting_id", "count"]
    for direction, unit in (("x", "um"), ("y", "um"), ("angle", "deg")):
        header += [f"shift_{direction}_{stat}_{unit}" for stat in ("avg", "std", "min", "max")]

    def line(s):
        out = [s.setting_id, s.count]
        for d in (s.x, s.y, s.angle):
            out += [d.avg, d.std, d.min, d.max]
        return out

    write_csv(args.out, header, (line(s) for s in summary))
    _echo_config("summarize", args, args.out)
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    names = list(model.feature_names) or list(FEATURE_NAMES[: model.dimension])
    if len(names) != model.dimension:
        raise SchemaError(f"model lists {len(names)} feature names for dimension {model.dimension}")
    header = read_header(args.features)
    target_col = f"predicted_{model.target_name or 'y'}"
    if header:
        missing = [n for n in names if n not in header]
        if missing:
            raise SchemaError(
                f"{args.features}: model expects features {names}; missing {missing}", line=1, column=missing[0]
            )
    rows = read_features(args.features, require_targets=False) if header else []
    if rows:
        xs = np.array([[getattr(r, n) for n in names] for r in rows], dtype=float)
        pred = predict_many(model, xs)
    else:
        pred = []
    write_csv(
        args.out,
        (*KEY_FIELDS, target_col),
        ([r.board_id, r.component_id, r.setting_id, r.spec_name, p] for r, p in zip(rows, pred)),
    )
    _echo_config("predict", args, args.out)
    return 0


def cmd_oracle_solve(args) -> int:
    from .oracle import MAX_POINTS, qp_reference_solve

    rows = _load_rows(args)[: args.limit]
    if len(rows) > MAX_POINTS:
        raise UsageError(f"oracle handles at most {MAX_POINTS} rows")
    target = resolve_target(args.target)
    config = _train_config(args)
    sol = qp_reference_solve(config, feature_matrix(rows), target_vector(rows, target))
    json.dump({"betas": list(sol.betas), "dual_objective": sol.dual_objective, "bias": sol.bias,
               "iterations": sol.iterations}, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


# -- parser -----------------------------------------------------------------


def _add_svr_flags(p, kernel_default="rbf", c_default=0.13, eps_default=0.00097):
    p.add_argument("--kernel", choices=("linear", "rbf"), default=kernel_default)
    p.add_argument("--c", type=float, default=c_default, help="box constraint C")
    p.add_argument("--epsilon", type=float, default=eps_default, help="tube half-width")
    p.add_argument("--gamma", type=float, default=None, help="RBF width (rbf only; default 1.0)")


def _add_solver_flags(p):
    p.add_argument("--kkt-tol", type=float, default=1e-3)
    p.add_argument("--max-epochs", type=int, default=10000)


def _add_common(p, seed):
    p.add_argument("--seed", type=int, default=seed, help=f"RNG seed (fallback: ${SEED_ENV}, else 0)")


def build_parser(seed: int = 0) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shiftcast", description="Predict SMT component placement shifts with epsilon-SVR.")
    parser.add_argument("--version", action="version", version=f"shiftcast {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("generate", help="write synthetic SPI/AOI/truth CSVs and a manifest")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--replications", type=int, default=20)
    p.add_argument("--mode", choices=("linear", "nonlinear"), default="nonlinear")
    p.add_argument("--spec", action="append", help="component type to generate (repeatable; default all six)")
    p.add_argument("--noiseless", action="store_true", help="set every noise std to zero")
    d_noise, d_spi = NoiseStd(), SpiNoiseStd()
    p.add_argument("--noise-x", type=float, default=d_noise.x)
    p.add_argument("--noise-y", type=float, default=d_noise.y)
    p.add_argument("--noise-angle", type=float, default=d_noise.angle)
    p.add_argument("--spi-offset", type=float, default=d_spi.offset_um)
    p.add_argument("--spi-angle", type=float, default=d_spi.angle_deg)
    p.add_argument("--spi-volume", type=float, default=d_spi.volume_pct)
    _add_common(p, seed)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("featurize", help="join SPI and AOI files into ratio features")
    p.add_argument("--spi", type=Path, required=True)
    p.add_argument("--aoi", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--spec", default=None, help="keep one component type")
    p.set_defaults(func=cmd_featurize)

    def modeling(name, help_text, func):
        q = sub.add_parser(name, help=help_text)
        q.add_argument("--features", type=Path, required=True)
        q.add_argument("--spec", default=None, help="component type filter, or 'all' to pool types")
        q.add_argument("--out", type=Path, required=True)
        _add_common(q, seed)
        q.set_defaults(func=func)
        return q

    p = modeling("train", "fit one SVR model and save it as JSON", cmd_train)
    p.add_argument("--target", default="x", help="x, y or angle")
    _add_svr_flags(p)
    _add_solver_flags(p)

    p = modeling("tune", "cross-validated grid search", cmd_tune)
    p.add_argument("--target", default="x")
    p.add_argument("--kernel", choices=("linear", "rbf"), default="rbf")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--cs", type=_float_list, default=DEFAULT_CS)
    p.add_argument("--epsilons", type=_float_list, default=DEFAULT_EPSILONS)
    p.add_argument("--gammas", type=_float_list, default=DEFAULT_GAMMAS)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for grid points")
    p.add_argument("--standardize", action="store_true")
    _add_solver_flags(p)

    p = modeling("evaluate", "MAE/RMSE table for named models", cmd_evaluate)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--model", type=_parse_model, action="append",
                   help="NAME=linear,C,EPS or NAME=rbf,C,EPS,GAMMA (repeatable; default: SVR-Linear C=1 eps=0.031 and SVR-RBF C=0.13 eps=0.00097 gamma=1)")
    p.add_argument("--targets", default=None, help="comma list of x,y,angle (default all three)")
    p.add_argument("--text-out", type=Path, default=None)
    p.add_argument("--standardize", action="store_true")
    _add_solver_flags(p)

    p = modeling("sweep-k", "RMSE as a function of the fold count", cmd_sweep_k)
    p.add_argument("--target", default="x")
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=20)
    p.add_argument("--standardize", action="store_true")
    _add_svr_flags(p)
    _add_solver_flags(p)

    p = sub.add_parser("summarize", help="per-setting shift statistics in physical units")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--spec", default="C0402")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("predict", help="apply a saved model to a feature file")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("oracle-solve", help=argparse.SUPPRESS)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--spec", default=None)
    p.add_argument("--target", default="x")
    p.add_argument("--limit", type=int, default=16)
    _add_svr_flags(p)
    _add_solver_flags(p)
    _add_common(p, seed)
    p.set_defaults(func=cmd_oracle_solve)
    # keep the debugging command out of the usage listing
    sub._choices_actions = [a for a in sub._choices_actions if a.dest != "oracle-solve"]
    return parser


def main(argv=None) -> int:
    try:
        seed = _default_seed()
    except UsageError as exc:
        print(f"shiftcast: error: {exc}", file=sys.stderr)
        return 2
    parser = build_parser(seed)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"shiftcast {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (ShiftcastError, ConfigError) as exc:
        print(f"shiftcast {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"shiftcast {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
