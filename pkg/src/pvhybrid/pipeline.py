"""End-to-end hybrid forecasting experiment.

ingest -> clean -> lag feature -> rank features -> select -> split -> scale
-> train SR and MLP -> average -> score -> write artifacts.
"""

from __future__ import annotations

import dataclasses
import io
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data, expr, featsel, gp, metrics, mlp, pvsynth
from .errors import ConfigError, InputShapeError, PvHybridError, StageError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

TARGET = "pv_power"
CANDIDATES = ("irradiance", "temperature", "humidity", "wind_speed", "wind_direction", data.LAG_COLUMN)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class DataConfig:
    csv: str | None = None
    schema: dict = field(default_factory=dict)
    synthetic_days: int = 60
    synthetic_seed: int = 0
    step: int = 300
    lag_days: int = 365
    start: str | None = None
    end: str | None = None
    test_start: str | None = None
    train_ratio: float = 0.8
    plant_rating_kw: float | None = None


@dataclass
class FeatureConfig:
    n_select: int = 2
    candidates: list = field(default_factory=lambda: list(CANDIDATES))
    selected: list = field(default_factory=list)
    en_lambdas: list = field(default_factory=lambda: [0.001, 0.01, 0.1])
    en_alpha: float = 0.5
    boost_rounds: int = 50
    boost_shrinkage: float = 0.1


@dataclass
class MlpSection:
    hidden: list = field(default_factory=lambda: [50])
    activation: str = "tanh"
    learning_rate: float = 0.1
    iterations: int = 3000
    batch_size: int | None = None
    init_scale: float = 0.5
    seed: int = 0
    search_budget: int = 0
    search_space: dict = field(default_factory=dict)


@dataclass
class EvalConfig:
    cv_folds: int = 5
    cv_mode: str = "expanding"
    # reserved for a weighted combiner; only the equal average is implemented
    sr_weight: float = 0.5


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    gp: dict = field(default_factory=dict)
    mlp: MlpSection = field(default_factory=MlpSection)
    eval: EvalConfig = field(default_factory=EvalConfig)
    n_jobs: int = 1

    def gp_config(self) -> gp.GpConfig:
        kw = dict(self.gp)
        if "init_depth_range" in kw:
            kw["init_depth_range"] = tuple(kw["init_depth_range"])
        kw.setdefault("n_jobs", self.n_jobs)
        return gp.GpConfig(**kw)


def _section(cls, values: dict, name: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    return cls(**values)


def config_from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    known = {"data", "features", "gp", "mlp", "eval", "n_jobs"}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    gp_fields = {f.name for f in dataclasses.fields(gp.GpConfig)}
    bad = sorted(set(d.get("gp", {})) - gp_fields)
    if bad:
        raise ConfigError(f"unknown key(s) in [gp]: {', '.join(bad)}")
    cfg = ExperimentConfig(
        data=_section(DataConfig, d.get("data", {}), "data"),
        features=_section(FeatureConfig, d.get("features", {}), "features"),
        gp=dict(d.get("gp", {})),
        mlp=_section(MlpSection, d.get("mlp", {}), "mlp"),
        eval=_section(EvalConfig, d.get("eval", {}), "eval"),
        n_jobs=int(d.get("n_jobs", 1)),
    )
    if cfg.eval.sr_weight != 0.5:
        raise ConfigError("only the equal-weight average (sr_weight = 0.5) is supported")
    try:
        cfg.gp_config()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[gp]: {e}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# hybrid model


@dataclass
class HybridModel:
    tree: expr.ExprTree
    params: mlp.NetworkParams
    mlp_config: mlp.MlpConfig
    scaling: data.ScalingParams
    features: list
    target: str = TARGET
    lag_seconds: int = data.YEAR_SECONDS
    combine: str = "equal"

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.features):
            raise InputShapeError(
                f"model expects {len(self.features)} features {self.features}, got shape {X.shape}"
            )
        return X

    def scale_features(self, X) -> np.ndarray:
        X = self._check(X)
        return np.column_stack([self.scaling.scale(n, X[:, i]) for i, n in enumerate(self.features)])

    def predict_components(self, X) -> dict:
        """Raw-unit predictions of both sub-models and the clamped hybrid."""
        Xs = self.scale_features(X)
        sr_s = gp.predict(self.tree, Xs)
        nn_s = mlp.predict(self.params, self.mlp_config, Xs)
        return {
            "sr": self.scaling.unscale(self.target, sr_s),
            "mlp": self.scaling.unscale(self.target, nn_s),
            "hybrid": np.maximum(self.scaling.unscale(self.target, 0.5 * (sr_s + nn_s)), 0.0),
        }

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "sr.sexpr").write_text(expr.print_sexpr(self.tree) + "\n", encoding="utf-8")
        (d / "mlp.txt").write_text(mlp.dumps(self.params, self.mlp_config), encoding="utf-8")
        (d / "scaling.csv").write_text(self.scaling.to_csv(), encoding="utf-8")
        meta = [
            "format = hybrid-model v1",
            f"features = {','.join(self.features)}",
            f"target = {self.target}",
            f"lag_seconds = {self.lag_seconds}",
            f"combine = {self.combine}",
        ]
        (d / "model.txt").write_text("\n".join(meta) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory) -> "HybridModel":
        d = Path(directory)
        meta = _read_kv((d / "model.txt").read_text(encoding="utf-8"))
        if meta.get("format") != "hybrid-model v1":
            raise PvHybridError(f"{d}: not a hybrid-model v1 directory")
        features = meta["features"].split(",")
        tree = expr.parse_sexpr((d / "sr.sexpr").read_text(encoding="utf-8"), len(features))
        params, cfg = mlp.loads((d / "mlp.txt").read_text(encoding="utf-8"))
        scaling = data.ScalingParams.from_csv((d / "scaling.csv").read_text(encoding="utf-8"))
        return cls(tree, params, cfg, scaling, features, meta["target"], int(meta["lag_seconds"]), meta["combine"])


def _read_kv(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def predict_hybrid(m: HybridModel, row) -> float:
    """Hybrid forecast in kW for one raw feature row."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise InputShapeError("predict_hybrid takes a single row")
    return float(m.predict_components(row[None, :])["hybrid"][0])


# ---------------------------------------------------------------------------
# comparison table


MODEL_NAMES = ("SymbolicRegressor", "MLP", "Hybrid")


@dataclass(frozen=True)
class ComparisonTable:
    sr: metrics.MetricsReport
    mlp: metrics.MetricsReport
    hybrid: metrics.MetricsReport

    def rows(self):
        return list(zip(MODEL_NAMES, (self.sr, self.mlp, self.hybrid)))

    def convexity_holds(self) -> bool:
        return (
            self.hybrid.rmse <= (self.sr.rmse + self.mlp.rmse) / 2
            and self.hybrid.mae <= (self.sr.mae + self.mlp.mae) / 2
        )

    def to_csv(self) -> str:
        lines = ["model,rmse,mae,r2,n"]
        lines += [f"{name},{m.rmse!r},{m.mae!r},{m.r2!r},{m.n}" for name, m in self.rows()]
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        out = [f"{'':10s}{'SR':>12s}{'MLP':>12s}{'Hybrid':>12s}"]
        for label, attr in (("RMSE", "rmse"), ("MAE", "mae"), ("R2", "r2")):
            vals = [getattr(m, attr) for _, m in self.rows()]
            out.append(f"{label:10s}" + "".join(f"{v:12.4f}" for v in vals))
        return "\n".join(out) + "\n"


def improvement_report(table: ComparisonTable) -> dict:
    """Signed % improvement of the hybrid over each individual model (NaN = zero baseline)."""
    h = table.hybrid
    return {
        "rmse_vs_sr": metrics.improvement(table.sr.rmse, h.rmse),
        "rmse_vs_mlp": metrics.improvement(table.mlp.rmse, h.rmse),
        "mae_vs_sr": metrics.improvement(table.sr.mae, h.mae),
        "mae_vs_mlp": metrics.improvement(table.mlp.mae, h.mae),
    }


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainedModels:
    model: HybridModel
    gp_report: gp.GpRunReport
    mlp_trace: list
    mlp_search: mlp.SearchResult | None = None


def _mlp_config(cfg: ExperimentConfig, n_inputs: int) -> mlp.MlpConfig:
    s = cfg.mlp
    return mlp.MlpConfig(
        layer_widths=mlp.widths_for(n_inputs, s.hidden),
        hidden_activation=s.activation,
        learning_rate=s.learning_rate,
        max_iterations=s.iterations,
        batch_size=s.batch_size,
        seed=s.seed,
        init_scale=s.init_scale,
    )


def _search_space(space: dict) -> dict:
    # TOML arrays of two numbers are ranges; other arrays are choice lists
    out = {}
    for k, v in space.items():
        if isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
            out[k] = tuple(v)
        else:
            out[k] = v
    return out


def fit_models(
    cfg: ExperimentConfig, Xs: np.ndarray, ys: np.ndarray, features: list, scaling: data.ScalingParams, lag: int
) -> TrainedModels:
    """Train SR and MLP on already-scaled arrays (concurrently when n_jobs > 1)."""
    gcfg = cfg.gp_config()
    mcfg = _mlp_config(cfg, Xs.shape[1])
    search = None
    if cfg.mlp.search_budget > 0:
        cut = data.split_point(len(ys), 0.8)
        space = _search_space(cfg.mlp.search_space)
        if "layer_widths" in space:
            space["layer_widths"] = [mlp.widths_for(Xs.shape[1], [w]) for w in space["layer_widths"]]
        search = mlp.random_search(
            mcfg, space, cfg.mlp.search_budget, Xs[:cut], ys[:cut], Xs[cut:], ys[cut:],
            seed=cfg.mlp.seed, n_jobs=cfg.n_jobs,
        )
        mcfg = search.best

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(2) as pool:
            f_gp = pool.submit(gp.evolve, gcfg, Xs, ys)
            f_nn = pool.submit(mlp.train, mcfg, Xs, ys)
            report, trained = f_gp.result(), f_nn.result()
    else:
        report = gp.evolve(gcfg, Xs, ys)
        trained = mlp.train(mcfg, Xs, ys)
    model = HybridModel(report.best.tree, trained.params, mcfg, scaling, list(features), TARGET, lag)
    return TrainedModels(model, report, trained.loss_trace, search)


# ---------------------------------------------------------------------------
# experiment


@dataclass
class ExperimentResult:
    table: ComparisonTable
    improvements: dict
    importance: featsel.ImportanceReport
    selected: list
    models: TrainedModels
    cv: metrics.CvReport | None
    test_timestamps: np.ndarray
    test_actual: np.ndarray
    test_predictions: dict
    n_train: int
    n_test: int
    cleaning: data.CleaningLog
    lag_log: data.LagLog
    rejects: tuple = ()

    def predictions_csv(self) -> str:
        buf = io.StringIO()
        buf.write("timestamp,actual,sr,mlp,hybrid\n")
        p = self.test_predictions
        for i, t in enumerate(self.test_timestamps):
            buf.write(
                f"{data.format_timestamp(t)},{self.test_actual[i]!r},"
                f"{float(p['sr'][i])!r},{float(p['mlp'][i])!r},{float(p['hybrid'][i])!r}\n"
            )
        return buf.getvalue()

    def summary(self) -> str:
        lines = [
            "[experiment]",
            f"selected_features = {','.join(self.selected)}",
            f"n_train = {self.n_train}",
            f"n_test = {self.n_test}",
            f"rejected_rows = {len(self.rejects)}",
            f"cleaning = {self.cleaning.summary()}",
            f"lag_dropped = leading {self.lag_log.leading}, gaps {self.lag_log.gaps}",
            f"sr_expression = {expr.print_sexpr(self.models.model.tree)}",
            f"gp_generations = {self.models.gp_report.generations_executed}",
            f"gp_stop_reason = {self.models.gp_report.stop_reason.value}",
            f"mlp_widths = {','.join(map(str, self.models.model.mlp_config.layer_widths))}",
            f"mlp_final_loss = {self.models.mlp_trace[-1]!r}" if self.models.mlp_trace else "mlp_final_loss = n/a",
            "",
            "[test scores]",
        ]
        for name, m in self.table.rows():
            lines.append(f"{name}: rmse={m.rmse:.6f} mae={m.mae:.6f} r2={m.r2:.6f} n={m.n}")
        lines.append(f"convexity_bounds_hold = {self.table.convexity_holds()}")
        lines += ["", "[improvement %]"]
        lines += [f"{k} = {v:.3f}" for k, v in self.improvements.items()]
        if self.cv is not None:
            lines += [
                "",
                "[cross-validation hybrid]",
                f"mode = {self.cv.plan.mode.value}",
                f"folds = {len(self.cv.folds)}",
                f"mean_rmse = {self.cv.mean_rmse:.6f}",
                f"std_rmse = {self.cv.std_rmse:.6f}",
                f"mean_mae = {self.cv.mean_mae:.6f}",
                f"mean_r2 = {self.cv.mean_r2:.6f}",
            ]
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        files = {
            "summary.txt": self.summary(),
            "comparison.csv": self.table.to_csv(),
            "importance.csv": self.importance.to_csv(),
            "predictions.csv": self.predictions_csv(),
            "gp_report.txt": self.models.gp_report.to_text(),
            "gp_trace.csv": self.models.gp_report.trace_csv(),
            "mlp_loss.csv": "iteration,half_mse\n"
            + "".join(f"{i},{v!r}\n" for i, v in enumerate(self.models.mlp_trace)),
        }
        if self.cv is not None:
            files["cv_report.csv"] = self.cv.to_csv()
        for name, text in files.items():
            (d / name).write_text(text, encoding="utf-8")
        self.models.model.save(d / "model")


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, (PvHybridError, ValueError)):
            raise StageError(self.name, exc) from exc
        return False


def load_frame(dcfg: DataConfig) -> tuple[data.TimeSeriesFrame, tuple]:
    """Dataset named by the config: a CSV file or a synthetic plant spanning ``days + lag``."""
    if dcfg.csv:
        res = data.ingest_csv(dcfg.csv, dcfg.schema, step=dcfg.step)
        return res.frame, res.rejects
    days = dcfg.synthetic_days + (dcfg.lag_days if dcfg.lag_days else 0)
    frame = pvsynth.generate(pvsynth.WeatherSim(seed=dcfg.synthetic_seed), days=days, step=dcfg.step)
    return frame, ()


def prepare_frame(frame: data.TimeSeriesFrame, dcfg: DataConfig):
    """Clean, append the lag column (if ``lag_days``) and restrict to the date range."""
    cleaned, clog = data.clean(frame, plant_rating_kw=dcfg.plant_rating_kw)
    if dcfg.lag_days:
        cleaned, llog = data.make_lag_feature(cleaned, dcfg.lag_days * 86400)
    else:
        llog = data.LagLog(0, 0)
    cleaned = data.select_range(cleaned, dcfg.start, dcfg.end)
    return cleaned, clog, llog


def split_frame(frame: data.TimeSeriesFrame, dcfg: DataConfig):
    if dcfg.test_start:
        cut = data.parse_timestamp(dcfg.test_start)
        k = int(np.searchsorted(frame.timestamps, cut))
        if k == 0 or k == len(frame):
            raise data.SplitError(f"test_start {dcfg.test_start} leaves an empty side")
        return frame.take(slice(0, k)), frame.take(slice(k, len(frame)))
    return data.split_train_test(frame, dcfg.train_ratio)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentResult:
    with _Stage("ingest"):
        frame, rejects = load_frame(cfg.data)
    with _Stage("clean+lag"):
        frame, clog, llog = prepare_frame(frame, cfg.data)
    with _Stage("split"):
        train, test = split_frame(frame, cfg.data)

    fc = cfg.features
    candidates = [c for c in fc.candidates if c in train.columns]
    with _Stage("feature-rank"):
        importance = featsel.importance_report(
            train.matrix(candidates), train[TARGET], candidates,
            fc.en_lambdas, fc.en_alpha, fc.boost_rounds, fc.boost_shrinkage,
        )
        selected = list(fc.selected) if fc.selected else importance.top(fc.n_select)
        missing = [s for s in selected if s not in train.columns]
        if missing:
            raise InputShapeError(f"selected feature(s) not in data: {missing}")

    with _Stage("scale"):
        scaling = data.fit_scale(train, selected + [TARGET])
        Xs = np.column_stack([scaling.scale(n, train[n]) for n in selected])
        ys = scaling.scale(TARGET, train[TARGET])

    lag = cfg.data.lag_days * 86400
    with _Stage("train"):
        models = fit_models(cfg, Xs, ys, selected, scaling, lag)

    with _Stage("evaluate"):
        preds = models.model.predict_components(test.matrix(selected))
        actual = test[TARGET]
        table = ComparisonTable(
            metrics.score(actual, preds["sr"]),
            metrics.score(actual, preds["mlp"]),
            metrics.score(actual, preds["hybrid"]),
        )
        if not table.convexity_holds():
            log.warning("hybrid violates the averaging bound: %s", table)

    cv = None
    if cfg.eval.cv_folds and cfg.eval.cv_folds >= 2:
        with _Stage("cross-validation"):
            cv = cross_validate(cfg, Xs, ys, selected, scaling, lag)

    result = ExperimentResult(
        table, improvement_report(table), importance, selected, models, cv,
        test.timestamps, actual, preds, len(train), len(test), clog, llog, rejects,
    )
    if out_dir is not None:
        with _Stage("write"):
            result.write(out_dir)
    return result


def cross_validate(cfg, Xs, ys, selected, scaling, lag) -> metrics.CvReport:
    """Hybrid CV over the training split, scored in kW."""
    plan = metrics.FoldPlan.make(len(ys), cfg.eval.cv_folds, cfg.eval.cv_mode)
    # unscale inside the trainer so fold scores are in kW
    y_kw = scaling.unscale(TARGET, ys)

    def trainer(X_tr, y_tr_kw):
        fitted = fit_models(cfg, X_tr, scaling.scale(TARGET, y_tr_kw), selected, scaling, lag)
        m = fitted.model

        def predict(X_eval):
            sr_s = gp.predict(m.tree, X_eval)
            nn_s = mlp.predict(m.params, m.mlp_config, X_eval)
            return np.maximum(scaling.unscale(TARGET, 0.5 * (sr_s + nn_s)), 0.0)

        return predict

    return metrics.k_fold_cv(plan, trainer, Xs, y_kw)


def apply_model(m: HybridModel, frame: data.TimeSeriesFrame) -> tuple[data.TimeSeriesFrame, dict]:
    """Predict every row of ``frame``; builds the lag column first if the model needs it."""
    if data.LAG_COLUMN in m.features and data.LAG_COLUMN not in frame.columns:
        frame, _ = data.make_lag_feature(frame, m.lag_seconds)
    missing = [f for f in m.features if f not in frame.columns]
    if missing:
        raise InputShapeError(f"input lacks model feature(s): {missing}")
    return frame, m.predict_components(frame.matrix(m.features))

