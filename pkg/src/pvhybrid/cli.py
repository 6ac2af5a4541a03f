"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data, featsel, metrics, pipeline, pvsynth
from .errors import PvHybridError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(path)
    return p


def _schema(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"--map expects CANONICAL=HEADER, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _load_frame(args):
    res = data.ingest_csv(_existing(args.input), _schema(args.map))
    for r in res.rejects:
        print(f"reject line {r.line}: {r.field}={r.value!r} ({r.reason})", file=sys.stderr)
    return res


def _prepared(args) -> data.TimeSeriesFrame:
    frame = _load_frame(args).frame
    frame, _ = data.clean(frame)
    if args.lag_days:
        frame, _ = data.make_lag_feature(frame, args.lag_days * 86400)
    return frame


def _experiment_config(args) -> pipeline.ExperimentConfig:
    cfg = pipeline.load_config(_existing(args.config)) if args.config else pipeline.ExperimentConfig()
    if getattr(args, "input", None):
        cfg.data = replace(cfg.data, csv=args.input, schema=_schema(args.map) or cfg.data.schema)
    if getattr(args, "lag_days", None) is not None:
        cfg.data = replace(cfg.data, lag_days=args.lag_days)
    if args.seed is not None:
        cfg.gp = {**cfg.gp, "seed": args.seed}
        cfg.mlp = replace(cfg.mlp, seed=args.seed)
        cfg.data = replace(cfg.data, synthetic_seed=args.seed)
    if getattr(args, "jobs", None):
        cfg.n_jobs = args.jobs
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    sim = pvsynth.WeatherSim(seed=args.seed or 0, start=args.start)
    frame = pvsynth.generate(sim, pvsynth.PvPlantParams(), days=args.days, step=args.step)
    data.write_csv(frame, args.out)
    print(f"wrote {len(frame)} rows to {args.out}")


def cmd_ingest(args):
    res = _load_frame(args)
    frame, clog = data.clean(res.frame, plant_rating_kw=args.plant_rating)
    print(f"rows={len(res.frame)} rejects={len(res.rejects)} {clog.summary()}")
    if args.out:
        data.write_csv(frame, args.out)
    if args.rejects:
        Path(args.rejects).write_text(res.rejects_csv(), encoding="utf-8")


def cmd_rank(args):
    frame = _prepared(args)
    names = [c for c in pipeline.CANDIDATES if c in frame.columns]
    rep = featsel.importance_report(
        frame.matrix(names), frame[pipeline.TARGET], names,
        args.lambdas, args.alpha, args.rounds, args.shrinkage,
    )
    sys.stdout.write(rep.to_csv())


def cmd_train(args):
    cfg = _experiment_config(args)
    frame, _ = pipeline.load_frame(cfg.data)
    frame, _, _ = pipeline.prepare_frame(frame, cfg.data)
    train, _ = pipeline.split_frame(frame, cfg.data) if args.holdout else (frame, None)
    names = [c for c in cfg.features.candidates if c in train.columns]
    if cfg.features.selected:
        selected = list(cfg.features.selected)
    else:
        rep = featsel.importance_report(train.matrix(names), train[pipeline.TARGET], names)
        selected = rep.top(cfg.features.n_select)
    scaling = data.fit_scale(train, selected + [pipeline.TARGET])
    Xs = np.column_stack([scaling.scale(n, train[n]) for n in selected])
    ys = scaling.scale(pipeline.TARGET, train[pipeline.TARGET])
    fitted = pipeline.fit_models(cfg, Xs, ys, selected, scaling, cfg.data.lag_days * 86400)
    fitted.model.save(args.model)
    print(f"trained on {len(train)} rows with features {','.join(selected)}; saved to {args.model}")


def cmd_predict(args):
    model = pipeline.HybridModel.load(_existing(args.model))
    frame = _load_frame(args).frame
    frame, preds = pipeline.apply_model(model, frame)
    lines = ["timestamp,sr,mlp,hybrid"]
    for i, t in enumerate(frame.timestamps):
        lines.append(
            f"{data.format_timestamp(t)},{float(preds['sr'][i])!r},"
            f"{float(preds['mlp'][i])!r},{float(preds['hybrid'][i])!r}"
        )
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(frame)} predictions to {args.out}")


def cmd_evaluate(args):
    model = pipeline.HybridModel.load(_existing(args.model))
    frame, _ = data.clean(_load_frame(args).frame)
    frame, preds = pipeline.apply_model(model, frame)
    actual = frame[model.target]
    table = pipeline.ComparisonTable(
        metrics.score(actual, preds["sr"]),
        metrics.score(actual, preds["mlp"]),
        metrics.score(actual, preds["hybrid"]),
    )
    sys.stdout.write(table.to_text())


def cmd_cv(args):
    cfg = _experiment_config(args)
    cfg.eval = replace(cfg.eval, cv_folds=args.k, cv_mode=args.mode)
    frame, _ = pipeline.load_frame(cfg.data)
    frame, _, _ = pipeline.prepare_frame(frame, cfg.data)
    selected = list(cfg.features.selected) or args.features.split(",")
    scaling = data.fit_scale(frame, selected + [pipeline.TARGET])
    Xs = np.column_stack([scaling.scale(n, frame[n]) for n in selected])
    ys = scaling.scale(pipeline.TARGET, frame[pipeline.TARGET])
    rep = pipeline.cross_validate(cfg, Xs, ys, selected, scaling, cfg.data.lag_days * 86400)
    text = rep.to_csv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_experiment(args):
    cfg = _experiment_config(args)
    result = pipeline.run_experiment(cfg, out_dir=args.out)
    sys.stdout.write(result.table.to_text())
    sys.stdout.write("\n")
    sys.stdout.write(result.summary())


# ---------------------------------------------------------------------------
# parser


def _add_input(p, required=True):
    p.add_argument("--in", dest="input", required=required, help="input CSV")
    p.add_argument(
        "--map", action="append", metavar="CANONICAL=HEADER",
        help="map a canonical column name to the file's header (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pvhybrid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("synth", help="write a synthetic PV dataset CSV")
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--step", type=int, default=300)
    p.add_argument("--start", default="2017-01-01T00:00:00Z")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate and clean a CSV")
    _add_input(p)
    p.add_argument("--out", help="write the cleaned CSV here")
    p.add_argument("--rejects", help="write rejected rows here")
    p.add_argument("--plant-rating", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("rank", help="print the feature-importance CSV")
    _add_input(p)
    p.add_argument("--lag-days", type=int, default=365)
    p.add_argument("--lambdas", type=float, nargs="+", default=[0.001, 0.01, 0.1])
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--shrinkage", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("train", help="train a hybrid model and save it")
    _add_input(p, required=False)
    p.add_argument("--config")
    p.add_argument("--model", required=True, help="output model directory")
    p.add_argument("--lag-days", type=int, default=None)
    p.add_argument("--holdout", action="store_true", help="train on the training split only")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="apply a saved hybrid model")
    _add_input(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a saved model on a labelled CSV")
    _add_input(p)
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cv", help="cross-validate the hybrid")
    _add_input(p, required=False)
    p.add_argument("--config")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--mode", choices=["expanding", "contiguous"], default="expanding")
    p.add_argument("--features", default="irradiance,prev_pv_power")
    p.add_argument("--lag-days", type=int, default=None)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("experiment", help="run the full experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="directory for CSV artifacts (nothing is written without it)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: file not found: {e.filename or e.args[0]}", file=sys.stderr)
        return EXIT_DATA
    except (PvHybridError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
