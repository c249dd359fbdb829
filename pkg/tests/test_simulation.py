import json

import numpy as np
import pytest

from edgeci.bootstrap import BBM, PERC, BootstrapConfig
from edgeci.detectors import detect_kw
from edgeci.simulation import (
    ExperimentConfig,
    SyntheticImageSpec,
    cost_benchmark,
    generate_image,
    image_to_strip,
    rows_to_csv,
    run_experiment,
    run_grid,
    summarize,
)

SMALL = BootstrapConfig(B=49, B_prime=10, B_x=20, clamp=False)


class TestImage:
    def test_shape_and_regions(self):
        spec = SyntheticImageSpec(height=20, width=100, edge_j=30, alpha_left=-2, alpha_right=-15)
        img = generate_image(spec, np.random.default_rng(0))
        assert img.shape == (20, 100) and np.all(img > 0)
        # rough side has the heavier tail
        assert img[:, :30].max() > img[:, 30:].max()

    def test_no_edge(self):
        spec = SyntheticImageSpec(edge_j=None, alpha_left=-5)
        assert spec.params()[0] == spec.params()[1]
        assert generate_image(spec, np.random.default_rng(1)).shape == (20, 100)

    def test_unit_mean_default_and_explicit_gamma(self):
        left, right = SyntheticImageSpec(gamma_right=3.0).params()
        assert left.gamma == pytest.approx(1.0) and right.gamma == 3.0

    def test_invalid_edge(self):
        with pytest.raises(ValueError):
            SyntheticImageSpec(width=10, edge_j=10)

    def test_kw_recovers_edge(self):
        # calibration: 149/200 on these seeds; the bound sits about 1.5 SE lower
        hits = 0
        for s in range(200):
            img = generate_image(SyntheticImageSpec(), np.random.default_rng(s))
            hits += abs(detect_kw(image_to_strip(img)).j_hat - 50) <= 2
        assert hits >= 140

    @pytest.mark.xfail(strict=True, reason="unit-mean regions have equal column means, so "
                       "the column mean hides the edge (about 11% within 2 pixels)")
    def test_kw_recovers_edge_from_column_means(self):
        hits = 0
        for s in range(200):
            img = generate_image(SyntheticImageSpec(), np.random.default_rng(s))
            hits += abs(detect_kw(image_to_strip(img, "mean")).j_hat - 50) <= 2
        assert hits >= 190


class TestAggregation:
    def test_variants(self):
        img = np.arange(1, 13, dtype=float).reshape(3, 4)
        assert image_to_strip(img, "window").values.shape == (4, 3)
        np.testing.assert_allclose(image_to_strip(img, "mean").values, img.mean(axis=0))
        np.testing.assert_allclose(image_to_strip(img, "median").values, img[1])
        np.testing.assert_allclose(image_to_strip(img, "center").values, img[1])

    def test_single_row_window_is_flat(self):
        assert image_to_strip(np.ones((1, 6)), "window").values.shape == (6,)

    def test_unknown(self):
        with pytest.raises(ValueError):
            image_to_strip(np.ones((2, 6)), "max")


class TestExperiment:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(R=0)
        with pytest.raises(ValueError):
            ExperimentConfig(methods=("perc", "bca"))

    def test_report_schema(self):
        cfg = ExperimentConfig(R=6, bootstrap=SMALL, methods=(PERC, BBM), master_seed=1)
        rep = run_experiment(cfg)
        assert set(rep.methods) == {PERC, BBM}
        assert rep.methods[PERC].delta == 0.0
        for s in rep.methods.values():
            assert s.n_ok + s.n_failed == 6
            assert s.distance == pytest.approx(abs(s.coverage - 0.95) * 100)
        doc = json.loads(rep.to_json(trace=True))
        assert doc["master_seed"] == 1 and len(doc["replications"]) == 12
        assert "coverage" in rows_to_csv(rep.rows()).splitlines()[0]

    def test_no_edge_rows_have_no_coverage(self):
        spec = SyntheticImageSpec(edge_j=None, alpha_left=-5)
        rep = run_experiment(ExperimentConfig(spec=spec, R=3, bootstrap=SMALL, methods=(PERC,)))
        header = rows_to_csv(rep.rows()).splitlines()[0]
        assert "coverage" not in header and "mean_length" in header
        assert rep.methods[PERC].coverage is None

    def test_method_subset_does_not_change_streams(self):
        cfg = ExperimentConfig(R=4, bootstrap=SMALL, master_seed=9)
        full = run_experiment(cfg)
        only = run_experiment(ExperimentConfig(R=4, bootstrap=SMALL, master_seed=9, methods=(BBM,)))
        pick = lambda rep: [(r["lower"], r["upper"]) for r in rep.replications if r["method"] == BBM]
        assert pick(full) == pick(only)

    def test_seed_changes_results(self):
        a = run_experiment(ExperimentConfig(R=5, bootstrap=SMALL, master_seed=1, methods=(PERC,)))
        b = run_experiment(ExperimentConfig(R=5, bootstrap=SMALL, master_seed=2, methods=(PERC,)))
        assert [r["lower"] for r in a.replications] != [r["lower"] for r in b.replications]

    def test_workers_identical(self):
        cfg = ExperimentConfig(R=5, bootstrap=SMALL, master_seed=3)
        strip = lambda rep: [{k: v for k, v in r.items() if k != "runtime"} for r in rep.replications]
        assert strip(run_experiment(cfg, 1)) == strip(run_experiment(cfg, 2))

    def test_failures_are_recorded(self):
        cfg = ExperimentConfig(R=2, bootstrap=SMALL, methods=(PERC,))
        records = [{"r": 0, "method": PERC, "ok": False, "error": "boom", "runtime": 0.1},
                   {"r": 1, "method": PERC, "ok": True, "lower": 48, "upper": 52, "length": 4,
                    "covered": True, "runtime": 0.1}]
        s = summarize(cfg, records).methods[PERC]
        assert (s.n_ok, s.n_failed, s.coverage) == (1, 1, 1.0)

    def test_grid(self):
        base = ExperimentConfig(R=2, bootstrap=SMALL, methods=(PERC,))
        reps = run_grid(base, [-2, -5], [-5])
        assert [r.has_edge for r in reps] == [True, False]


def test_cost_benchmark_shape():
    cfg = ExperimentConfig(bootstrap=BootstrapConfig(B=50, B_prime=5, B_x=10))
    table = cost_benchmark(cfg, repeats=1)
    assert table["full-t"]["percent_of_full_t"] == pytest.approx(100)
    assert all(v["seconds"] > 0 for v in table.values())
