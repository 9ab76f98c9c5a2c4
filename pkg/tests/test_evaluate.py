"""Config parsing and the evaluation pipeline with injected predictions."""

import math

import numpy as np
import pytest

from binreg.binning import DiracMixture, encode_mixture, gaussian_smooth
from binreg.experiment import (
    ConfigError,
    EvalConfig,
    aggregate_csv,
    aggregate_rows,
    curve_csv,
    evaluate_model,
    evaluate_predictions,
    grad_demo_rows,
    parse_config,
    parse_gamma,
    results_csv,
    RESULTS_HEADER,
)
from binreg.net import NetworkSpec
from binreg.training import TrainConfig, build_grids, train

EVAL_SPEC = NetworkSpec(height=32, width=32, conv_channels=(4, 8), bins=16)


def inject(dataset, make_hist, alpha_grid, rho_grid):
    """Build per-split (alpha, rho) probability arrays from a sample rule."""
    preds = {}
    for split in ("test_clear", "test_ambiguous"):
        samples = dataset.samples[split]
        pa = np.stack([make_hist(s, "alpha", alpha_grid) for s in samples])
        pr = np.stack([make_hist(s, "rho", rho_grid) for s in samples])
        preds[split] = (pa, pr)
    return preds


def mixture_probs(sample, head, grid):
    values = [ln.alpha if head == "alpha" else ln.rho for ln in sample.lines]
    return encode_mixture(grid, DiracMixture.equal_weight(values)).probs


def uniform_probs(sample, head, grid):
    return np.full(grid.K, 1.0 / grid.K)


class TestParseGamma:
    def test_forms(self):
        assert parse_gamma("0.25", 64) == 0.25
        assert parse_gamma("1/K", 64) == pytest.approx(1 / 64)
        assert parse_gamma("1.5/k", 10) == pytest.approx(0.15)
        with pytest.raises(ValueError):
            parse_gamma("x/K", 64)


class TestParseConfig:
    def test_full_round_trip(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text(
            "[dataset]\n"
            "width = 32\nheight = 32\n"
            "train_one_line = 8\ntrain_two_line = 8\n"
            "test_clear = 4\ntest_ambiguous = 4\n"
            "seed = 9\n"
            "[model]\n"
            "conv_channels = 4,8\nbins = 16\nhead = softplus\n"
            "[train]\n"
            "loss = hinge_w1\ngamma = 1/K\nepochs = 2\nseed = 3\n"
            "[eval]\n"
            "measure = variance\nauc_cutoff = 0.3\n"
            "[sweep]\n"
            "losses = w1,hinge_w1\ngammas = 0.5/K,1/K\nseeds = 0,1\n"
        )
        cfg = parse_config(path)
        assert cfg.dataset.width == 32
        assert cfg.dataset_seed == 9
        assert cfg.spec.bins == 16
        assert cfg.spec.conv_channels == (4, 8)
        assert cfg.train.gamma == pytest.approx(1 / 16)
        assert cfg.train.seed == 3
        assert cfg.eval.measure == "variance"
        assert cfg.sweep.gammas == pytest.approx((0.5 / 16, 1 / 16))
        assert cfg.sweep.seeds == (0, 1)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "nope.ini")

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[train]\nwarp_speed = 9\n")
        with pytest.raises(ConfigError, match="warp_speed"):
            parse_config(path)

    def test_defaults_without_sections(self, tmp_path):
        path = tmp_path / "empty.ini"
        path.write_text("")
        cfg = parse_config(path)
        assert cfg.dataset.width == 64
        assert cfg.spec.bins == 64
        assert cfg.sweep is None

    def test_bad_measure_rejected(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[eval]\nmeasure = vibes\n")
        with pytest.raises(ConfigError):
            parse_config(path)


class TestEvaluatePredictions:
    def test_oracle_mixture_predictor(self, smoke_dataset):
        ga, gr = build_grids(smoke_dataset, 16)
        oracle = inject(smoke_dataset, mixture_probs, ga, gr)
        uniform = inject(smoke_dataset, uniform_probs, ga, gr)
        cfg = EvalConfig(sparsification_steps=8)
        r_oracle = evaluate_predictions(smoke_dataset, oracle, ga, gr, cfg)
        r_uniform = evaluate_predictions(smoke_dataset, uniform, ga, gr, cfg)
        # the true mixture scores a perfect CRPS ...
        assert r_oracle.row["alpha_crps"] == 0.0
        assert r_oracle.row["rho_crps"] == 0.0
        assert r_uniform.row["alpha_crps"] > 0.0
        # ... and its uncertainty sorts errors no worse than an uninformative one
        assert r_oracle.row["alpha_ause"] <= r_uniform.row["alpha_ause"]

    def test_uniform_predictor_flat_curve_and_poor_auc(self, smoke_dataset):
        ga, gr = build_grids(smoke_dataset, 16)
        uniform = inject(smoke_dataset, uniform_probs, ga, gr)
        cfg = EvalConfig(sparsification_steps=8)
        report = evaluate_predictions(smoke_dataset, uniform, ga, gr, cfg)
        # constant ln K entropy everywhere: index-order removal, curve near 1
        curve = report.curves["alpha"].sparsification_curve
        assert abs(curve[0] - 1.0) == 0.0
        assert np.abs(curve[:4] - 1.0).max() < 0.6
        assert report.row["auc"] < 0.5
        k = 16
        for split in ("test_clear", "test_ambiguous"):
            assert report.entropy_medians[("alpha", split)] == pytest.approx(
                math.log(k)
            )

    def test_pooled_ause_uses_both_splits(self, smoke_dataset):
        ga, gr = build_grids(smoke_dataset, 16)
        preds = inject(smoke_dataset, mixture_probs, ga, gr)
        pooled = evaluate_predictions(
            smoke_dataset, preds, ga, gr, EvalConfig(ause_split="pooled", sparsification_steps=8)
        )
        ambiguous = evaluate_predictions(
            smoke_dataset, preds, ga, gr, EvalConfig(sparsification_steps=8)
        )
        assert pooled.row["alpha_ause"] != ambiguous.row["alpha_ause"]

    def test_auc_split_selection(self, smoke_dataset):
        ga, gr = build_grids(smoke_dataset, 16)
        preds = inject(smoke_dataset, mixture_probs, ga, gr)
        r_amb = evaluate_predictions(smoke_dataset, preds, ga, gr, EvalConfig(sparsification_steps=8))
        r_clear = evaluate_predictions(
            smoke_dataset, preds, ga, gr, EvalConfig(auc_split="clear", sparsification_steps=8)
        )
        assert r_amb.row["auc"] == r_amb.ambiguous_auc
        assert r_clear.row["auc"] == r_clear.clear_auc

    def test_crps_can_be_disabled(self, smoke_dataset):
        ga, gr = build_grids(smoke_dataset, 16)
        preds = inject(smoke_dataset, mixture_probs, ga, gr)
        report = evaluate_predictions(
            smoke_dataset, preds, ga, gr, EvalConfig(crps=False, sparsification_steps=8)
        )
        assert math.isnan(report.row["alpha_crps"])


class TestEvaluateModel:
    def test_wiring_and_artifacts(self, smoke_dataset, tmp_path):
        cfg = TrainConfig(loss="w1", epochs=1, batch_size=16, seed=0)
        model, _ = train(smoke_dataset, EVAL_SPEC, cfg)
        report = evaluate_model(model, smoke_dataset, EvalConfig(sparsification_steps=8))
        for key in ("auc", "alpha_ause", "rho_ause", "alpha_crps", "rho_crps"):
            assert np.isfinite(report.row[key])
        assert len(report.curves["alpha"].fractions) == 8
        assert set(report.kde_xs) == {"alpha", "rho"}
        from binreg.experiment import write_eval_outputs

        write_eval_outputs(report, tmp_path)
        for name in (
            "sparsification_alpha.csv",
            "sparsification_rho.csv",
            "entropy_kde_alpha.csv",
            "entropy_kde_rho.csv",
            "metrics.csv",
        ):
            assert (tmp_path / name).exists()
        header = (tmp_path / "sparsification_alpha.csv").read_text().splitlines()[0]
        assert header == "fraction,sparsification,oracle,sparsification_error"


class TestCsvFormats:
    def row(self, seed=0, loss="w1"):
        return {
            "loss": loss, "gamma": 0.015625, "target_mode": "unimodal", "seed": seed,
            "auc": 0.512345678, "alpha_ause": 0.1, "rho_ause": 0.2,
            "alpha_crps": 1.25, "rho_crps": 2.5,
        }

    def test_results_header_and_precision(self):
        text = results_csv([self.row()])
        lines = text.splitlines()
        assert lines[0] == RESULTS_HEADER
        assert lines[1] == "w1,0.015625,unimodal,0,0.512346,0.1,0.2,1.25,2.5"

    def test_aggregate_single_seed_has_no_stderr(self):
        aggs = aggregate_rows([self.row()])
        assert aggs[0]["auc_se"] is None
        text = aggregate_csv(aggs)
        assert ",,," not in text.splitlines()[0]
        assert text.splitlines()[1].split(",")[5] == ""  # empty auc_se cell

    def test_aggregate_three_seeds(self):
        rows = [self.row(seed=s) for s in range(3)]
        rows[1]["auc"] = 0.6
        rows[2]["auc"] = 0.7
        aggs = aggregate_rows(rows)
        vals = np.array([r["auc"] for r in rows])
        assert aggs[0]["auc_mean"] == pytest.approx(vals.mean())
        assert aggs[0]["auc_se"] == pytest.approx(vals.std(ddof=1) / math.sqrt(3))

    def test_curve_csv_shape(self, smoke_dataset):
        from binreg.metrics import EvalRecord, sparsification

        rng = np.random.default_rng(0)
        recs = [EvalRecord(float(e), float(u)) for e, u in
                zip(rng.uniform(0.1, 1, 30), rng.normal(size=30))]
        text = curve_csv(sparsification(recs, steps=10))
        assert len(text.splitlines()) == 11


class TestGradDemoRows:
    def test_case_scores_and_head_comparison(self):
        rows = grad_demo_rows(64, masses=(1e-6,))
        by = {(r["case"], r["head"]): r for r in rows}
        assert by[("case1", "softmax")]["grad_at_target"] < 1e-4
        assert by[("case2", "softmax")]["max_abs_grad"] < 1e-3
        assert (
            by[("case1", "softplus")]["grad_at_target"]
            > by[("case1", "softmax")]["grad_at_target"]
        )
        assert (
            by[("case2", "softplus")]["max_abs_grad"]
            > by[("case2", "softmax")]["max_abs_grad"]
        )

    def test_case1_mass_is_exact(self):
        import binreg.binning as bb

        k = 64
        mass = 1e-6
        z = np.zeros(k)
        z[k // 2] = math.log(mass * (k - 1) / (1 - mass))
        probs = bb._softmax_probs(z)
        assert probs[k // 2] == pytest.approx(mass, rel=1e-9)
