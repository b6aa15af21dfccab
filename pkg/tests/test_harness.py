import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iesc.harness import (
    POLICIES,
    RESULT_HEADER,
    WORKERS_ENV,
    ExperimentConfig,
    expected_abs_error,
    gap_priors,
    impossibility_demo,
    run_experiment,
    run_single,
    run_sweep,
    sim_overlap_fixture,
    size_policy,
)
from iesc.policy_two import InfeasibleError, read_replay_log

SMALL = dict(n_units=60, runs=1)


def _cfg(**kw):
    return ExperimentConfig(**{**SMALL, **kw})


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert (cfg.r, cfg.gap, cfg.n_units, cfg.runs, cfg.pcr_rank) == (4, 0.4, 500, 10, 4)

    def test_roundtrip(self):
        cfg = _cfg(r_values=(2, 4), gap=0.2)
        assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            ExperimentConfig.from_dict({"units": 3})

    @pytest.mark.parametrize("kw", [dict(runs=0), dict(n_units=1), dict(gap=0.0),
                                    dict(sizing="loose"), dict(agent_mode="greedy"),
                                    dict(policy="ucb"), dict(agent_mode="rational", policy="racing"),
                                    dict(delta=1.0), dict(C=0.0), dict(r=3)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            _cfg(**kw)


class TestSizing:
    def test_gap_priors(self):
        priors = gap_priors(0.4)
        np.testing.assert_allclose(priors[1].means, [0.25, 0.65])
        np.testing.assert_allclose(priors[0].means, [0.5, 0.0])

    @pytest.mark.parametrize("policy, expected", [("alg1", 17), ("alg2", 17), ("noiseless", 7),
                                                  ("racing", 0), ("none", 0)])
    def test_default_values(self, policy, expected):
        assert size_policy(_cfg(policy=policy)).value == expected

    def test_alg1_closed_form(self):
        res = size_policy(_cfg())
        prob = (0.25 - 0.125 + 0.25) / (1.0 + 0.8)
        assert res.terms["probability"] == pytest.approx(prob)
        assert res.terms["bound"] == pytest.approx(1 + 0.4 / (0.125 * prob))

    def test_theory_needs_donors(self):
        with pytest.raises(ValueError):
            size_policy(_cfg(sizing="theory"))

    def test_theory_infeasible_at_desk_scale(self):
        with pytest.raises(InfeasibleError) as info:
            run_experiment(_cfg(sizing="theory"))
        assert "sigma_r" in info.value.terms


class TestRunSingle:
    @pytest.mark.parametrize("policy", POLICIES)
    def test_every_policy_runs(self, policy):
        out = run_single(_cfg(policy=policy), 0)
        assert out.errors.shape == (2, 60)
        assert np.all(np.isfinite(out.errors))
        assert set(out.logs) == {"ie", "baseline"}
        assert len(out.logs["ie"]) == len(out.logs["baseline"]) == 60

    def test_rational_agents(self):
        out = run_single(_cfg(agent_mode="rational"), 0)
        assert np.all(np.isfinite(out.errors))

    def test_none_policy_matches_baseline(self):
        out = run_single(_cfg(policy="none"), 3)
        np.testing.assert_array_equal(out.errors[0], out.errors[1])

    def test_first_stage_has_no_recommendations(self):
        out = run_single(_cfg(), 0)
        first = out.logs["ie"][: out.N0]
        assert all(e["d_hat"] is None and e["stage"] == "first" for e in first)
        assert out.N0 == 24

    def test_runs_are_independent_of_order(self):
        a = run_single(_cfg(), 2)
        run_single(_cfg(), 0)
        b = run_single(_cfg(), 2)
        np.testing.assert_array_equal(a.errors, b.errors)


class TestOutputs:
    def test_byte_identical(self, tmp_path):
        run_experiment(_cfg(seed=5), tmp_path / "a")
        run_experiment(_cfg(seed=5), tmp_path / "b")
        for name in ("results.csv", "summary.csv", "sizing.txt", "config.json", "logs/run0_ie.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_layout(self, tmp_path):
        res = run_experiment(_cfg(runs=2), tmp_path)
        lines = (tmp_path / "results.csv").read_text().splitlines()
        assert lines[0] == ",".join(RESULT_HEADER)
        assert lines[1].startswith("0,0,ie,")
        assert len(lines) == 1 + 2 * 2 * 60
        assert (tmp_path / "summary.csv").read_text().splitlines()[0] == "method,unit,mean,std"
        assert (tmp_path / "timing.csv").read_text().startswith("run,seconds\n")
        sizing = (tmp_path / "sizing.txt").read_text()
        assert "run=0 policy=alg1 sizing=idealized N0=24 L=17" in sizing
        assert json.loads((tmp_path / "config.json").read_text())["n_units"] == 60
        log = read_replay_log(tmp_path / "logs" / "run1_ie.jsonl")
        assert log == json.loads(json.dumps(res.runs[1].logs["ie"]))
        assert (tmp_path / "plot_results.py").exists()

    def test_config_out_used(self, tmp_path):
        run_experiment(_cfg(out=str(tmp_path / "o")))
        assert (tmp_path / "o" / "results.csv").exists()

    def test_workers_do_not_change_results(self, monkeypatch):
        serial = run_experiment(_cfg(runs=2))
        monkeypatch.setenv(WORKERS_ENV, "2")
        parallel = run_experiment(_cfg(runs=2))
        np.testing.assert_array_equal(serial.errors, parallel.errors)

    @pytest.mark.parametrize("raw", ["0", "two"])
    def test_bad_worker_count(self, monkeypatch, raw):
        monkeypatch.setenv(WORKERS_ENV, raw)
        with pytest.raises(ValueError):
            run_experiment(_cfg())

    def test_sweep_dirs(self, tmp_path):
        res = run_sweep(_cfg(n_units=30, r_values=(2,), gap_values=(0.2, 0.4)), tmp_path)
        assert set(res) == {(2, 0.2), (2, 0.4)}
        assert (tmp_path / "r2_gap0.2" / "results.csv").exists()
        assert (tmp_path / "r2_gap0.4" / "results.csv").exists()

    def test_tail_statistics(self):
        res = run_experiment(_cfg(runs=2))
        assert res.errors.shape == (2, 2, 60)
        assert res.tail_mean("ie", 10) == pytest.approx(res.errors[:, 0, -10:].mean())
        assert res.tail_ratio(10) == pytest.approx(res.tail_mean("ie", 10) / res.tail_mean("baseline", 10))
        np.testing.assert_allclose(res.mean_curve("baseline"), res.errors[:, 1].mean(axis=0))


class TestImpossibility:
    @pytest.mark.parametrize("e, c, expected", [(0, 1, 0.5), (1, 1, 1.0), (-1, 1, 1.0),
                                                (0.5, 1, 0.625), (3, 2, 3.0), (0, 2, 1.0)])
    def test_expected_error(self, e, c, expected):
        assert expected_abs_error(e, c) == pytest.approx(expected)

    @given(st.floats(-3, 3), st.floats(0.1, 3))
    def test_lower_bound(self, e, c):
        assert expected_abs_error(e, c) >= c / 2 - 1e-12

    def test_demo(self):
        table = impossibility_demo(1.0, grid=21, draws=100_000)
        assert table.min_analytic == 0.5
        assert table.estimates[table.argmin] == 0.0
        assert abs(table.min_monte_carlo - 0.5) <= 0.01
        assert np.max(np.abs(table.monte_carlo - table.analytic)) <= 0.01
        assert table.pcr_estimate == pytest.approx(0.0, abs=1e-12)
        assert table.pcr_error == pytest.approx(0.5)
        assert table.lines()[0] == "estimate,analytic,monte_carlo"

    def test_even_grid_includes_zero(self):
        table = impossibility_demo(2.0, grid=4, draws=1000)
        assert 0.0 in table.estimates
        assert table.min_analytic == 1.0

    @pytest.mark.parametrize("kw", [dict(c=0.0), dict(grid=2), dict(draws=0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            impossibility_demo(**kw)


class TestOverlapFixture:
    def test_shapes(self):
        donors, test = sim_overlap_fixture(seed=1, n_units=40)
        assert donors.shape == (20, 100)
        assert test.shape == (100,)

    def test_deterministic(self):
        a = sim_overlap_fixture(seed=3, n_units=20)
        b = sim_overlap_fixture(seed=3, n_units=20)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
