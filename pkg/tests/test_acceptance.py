"""Acceptance criteria; each test prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from pvhybrid import cli, featsel, gp, metrics, mlp, pipeline, pvsynth
from pvhybrid.featsel import ElasticNetConfig
from pvhybrid.mlp import MlpConfig

from test_featsel import closed_form
from test_mlp import fd_gradient, max_rel_error


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {n}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        assert ok, detail

    return emit


def _benchmark_config(seed):
    return pipeline.config_from_dict({
        "data": {"synthetic_days": 60, "step": 300, "synthetic_seed": seed},
        "gp": {"population_size": 300, "generations": 15, "seed": seed},
        # 1x50 hidden layer, mini-batches of 1024 rows to fit the time budget
        "mlp": {"hidden": [50], "iterations": 3000, "batch_size": 1024, "seed": seed},
        "eval": {"cv_folds": 0},
        "n_jobs": 2,
    })


@pytest.fixture(scope="module")
def benchmark_runs():
    t0 = time.perf_counter()
    tables = [pipeline.run_experiment(_benchmark_config(s)).table for s in range(20)]
    return tables, time.perf_counter() - t0


def test_gradient_oracle(report):
    t0 = time.perf_counter()
    worst = 0.0
    acts = ["tanh", "sigmoid", "relu"]
    for seed in range(50):
        rng = np.random.default_rng(seed)
        hidden = tuple(int(w) for w in rng.integers(1, 6, size=int(rng.integers(1, 3))))
        cfg = MlpConfig(
            layer_widths=(int(rng.integers(1, 5)), *hidden, 1), hidden_activation=acts[seed % 3], seed=seed
        )
        p = mlp.init_params(cfg)
        x = rng.normal(size=cfg.layer_widths[0])
        t = rng.normal(size=1)
        worst = max(worst, max_rel_error(mlp.backprop_gradients(p, cfg, x, t), fd_gradient(p, cfg, x, t)))
    dt = time.perf_counter() - t0
    report(1, "gradient oracle", worst < 1e-4 and dt < 10, f"max rel err {worst:.2e} over 50 nets, {dt:.2f}s")


def test_metric_oracle(report):
    rng = np.random.default_rng(2024)
    worst, ordered = 0.0, True
    for _ in range(100):
        n = int(rng.integers(2, 200))
        y, yhat = rng.normal(size=n) * 50, rng.normal(size=n) * 50
        r = metrics.score(y, yhat)
        sse = sum((b - a) ** 2 for a, b in zip(y, yhat))
        mae = sum(abs(b - a) for a, b in zip(y, yhat)) / n
        m = sum(y) / n
        r2 = 1 - sse / sum((a - m) ** 2 for a in y)
        worst = max(worst, abs(r.rmse - math.sqrt(sse / n)), abs(r.mae - mae), abs(r.r2 - r2))
        ordered &= r.mae <= r.rmse
    rep = lambda rmse, mae: metrics.MetricsReport(rmse, mae, 0.99, 1)  # noqa: E731
    imp = pipeline.improvement_report(pipeline.ComparisonTable(rep(7.21, 4.92), rep(6.48, 3.81), rep(5.58, 3.30)))
    reference = round(imp["rmse_vs_sr"], 1) == 22.6 and round(imp["mae_vs_mlp"], 1) == 13.4
    report(
        2, "metric oracle", worst < 1e-10 and ordered and reference,
        f"max abs diff {worst:.1e}, mae<=rmse {ordered}, "
        f"rmse vs SR {imp['rmse_vs_sr']:.2f}%, mae vs MLP {imp['mae_vs_mlp']:.2f}%",
    )


def test_gp_recovery(report):
    def target(X):
        return np.sin(X[:, 0] + math.pi + 0.5 * X[:, 1])

    scores, slowest = [], 0.0
    for seed in range(5):
        rng = np.random.default_rng(1000 + seed)
        X, Xt = rng.uniform(-2, 2, (500, 2)), rng.uniform(-2, 2, (500, 2))
        t0 = time.perf_counter()
        rep = gp.evolve(gp.GpConfig(population_size=500, generations=30, seed=seed), X, target(X))
        slowest = max(slowest, time.perf_counter() - t0)
        scores.append(metrics.score(target(Xt), gp.predict(rep.best.tree, Xt)).rmse)
    hits = sum(s < 0.05 for s in scores)
    report(
        3, "GP recovery", hits >= 3 and slowest < 60,
        f"{hits}/5 seeds under 0.05 test RMSE ({', '.join(f'{s:.3g}' for s in scores)}), slowest {slowest:.1f}s",
    )


def test_convexity_bounds(report, benchmark_runs):
    tables, _ = benchmark_runs
    small = pipeline.config_from_dict({
        "data": {"synthetic_days": 10, "lag_days": 1, "synthetic_seed": 9},
        "gp": {"population_size": 50, "generations": 5},
        "mlp": {"hidden": [8], "iterations": 200},
        "eval": {"cv_folds": 0},
    })
    tables = list(tables) + [pipeline.run_experiment(small).table]
    bad = [i for i, t in enumerate(tables) if not t.convexity_holds()]
    report(4, "convexity bounds", not bad, f"{len(tables) - len(bad)}/{len(tables)} runs satisfy both bounds")


def test_benchmark_experiment(report, benchmark_runs):
    tables, elapsed = benchmark_runs
    beats = sum(t.hybrid.rmse <= max(t.sr.rmse, t.mlp.rmse) for t in tables)
    r2 = sum(t.hybrid.r2 > 0.95 for t in tables)
    mean = np.mean([[t.sr.rmse, t.mlp.rmse, t.hybrid.rmse] for t in tables], axis=0)
    report(
        5, "benchmark experiment", beats >= 16 and r2 >= 16 and elapsed < 900,
        f"hybrid <= worse model on {beats}/20, R2 > 0.95 on {r2}/20, "
        f"mean RMSE SR {mean[0]:.3f} MLP {mean[1]:.3f} hybrid {mean[2]:.3f} kW, {elapsed:.0f}s",
    )


def test_feature_selection(report):
    t0 = time.perf_counter()
    hits = 0
    names = list(pipeline.CANDIDATES)
    for seed in range(20):
        dc = pipeline.DataConfig(synthetic_seed=seed)
        frame, _, _ = pipeline.prepare_frame(pipeline.load_frame(dc)[0], dc)
        en = featsel.elastic_net_scores(frame.matrix(names), frame["pv_power"])
        boost = featsel.boosted_stump_importance(frame.matrix(names), frame["pv_power"]).gains
        top = featsel.rank_features(en, boost, names).top(2)
        hits += set(top) == {"irradiance", "prev_pv_power"}
    dt = time.perf_counter() - t0
    report(6, "feature selection", hits >= 18 and dt < 120, f"top-2 correct on {hits}/20 seeds, {dt:.1f}s")


def test_elastic_net_oracle(report):
    worst = 0.0
    rng = np.random.default_rng(7)
    x = rng.normal(size=120)
    x = (x - x.mean()) / x.std()
    y = 0.8 * x + rng.normal(size=120) * 0.5
    y -= y.mean()
    for lam in (0.0, 0.001, 0.01, 0.1, 0.3, 1.0, 10.0):
        for alpha in (0.0, 0.1, 0.5, 0.9, 1.0):
            coef = featsel.elastic_net_fit(x[:, None], y, ElasticNetConfig(lam=lam, alpha=alpha)).coef[0]
            worst = max(worst, abs(coef - closed_form(x, y, lam, alpha)))
    monotone, rise = True, 0.0
    for seed in range(20):
        r = np.random.default_rng(seed)
        X = featsel.standardize(r.normal(size=(80, 5)) @ r.normal(size=(5, 5)))
        yy = X @ r.normal(size=5) + r.normal(size=80)
        yy -= yy.mean()
        tr = featsel.elastic_net_fit(X, yy, ElasticNetConfig(lam=0.02, alpha=0.5)).objective_trace
        # non-increasing up to rounding in evaluating the objective
        monotone &= all(b <= a + 8 * np.finfo(float).eps * abs(a) for a, b in zip(tr, tr[1:]))
        rise = max(rise, float(np.max(np.diff(tr))))
    report(
        7, "elastic net oracle", worst < 1e-8 and monotone,
        f"max closed-form diff {worst:.1e} over 35 (lambda, alpha), objective non-increasing on 20 problems: "
        f"{monotone} (largest rise {rise:.1e}, rounding level)",
    )


def test_determinism(report, tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        "n_jobs = 4\n"
        "[data]\nsynthetic_days = 20\nlag_days = 1\nsynthetic_seed = 5\n"
        "[gp]\npopulation_size = 120\ngenerations = 6\nseed = 5\n"
        "[mlp]\nhidden = [20]\niterations = 400\nbatch_size = 512\nseed = 5\n"
        "search_budget = 3\n[mlp.search_space]\nlearning_rate = [0.05, 0.3]\n"
        "[eval]\ncv_folds = 3\n"
    )
    for name in ("a", "b"):
        assert cli.main(["experiment", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    other = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    same = files == other and all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files
    )
    report(8, "determinism", same, f"{len(files)} output files byte-identical across two runs with n_jobs=4")


def test_power_formula_examples(report):
    hand = dict(v_pv=30.0, n_p=100.0, i_sc=8.0, k_i=0.0, t_ref=25.0, g_ref=1000.0, i_d=0.0, i_sh=0.0)
    got = (
        pvsynth.pv_power(pvsynth.PvPlantParams(**hand), 0.0, 25.0),
        pvsynth.pv_power(pvsynth.PvPlantParams(**hand), 1000.0, 25.0),
        pvsynth.pv_power(pvsynth.PvPlantParams(**{**hand, "k_i": -0.005}), 1000.0, 45.0),
    )
    ok = all(abs(g - e) < 1e-12 for g, e in zip(got, (0.0, 24.0, 23.7)))
    report(9, "power formula spot checks", ok, f"got {got}")
