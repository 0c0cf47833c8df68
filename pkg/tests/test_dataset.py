from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plcensemble.dataset import (
    FEATURE_NAMES,
    SIGNAL_CONSTRAINTS,
    SIGNAL_MIX,
    TIMING_CONSTRAINTS,
    TIMING_MIX,
    FeatureMatrix,
    LabeledSet,
    SimConfig,
    _apportion,
    constraint_violations,
    load_csv,
    standard_test_configs,
    simulate_tlight,
    write_csv,
)
from plcensemble.errors import EmptyFile, InvalidConfig, MalformedCsv
from plcensemble.seeding import derive_seed


def one_scenario_mix(s: int) -> tuple[float, ...]:
    return tuple(1.0 if i == s else 0.0 for i in range(1, 8))


class TestSimConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(n_records=0),
            dict(n_records=10, anomaly_fraction=1.5),
            dict(n_records=10, anomaly_fraction=-0.1),
            dict(n_records=10, scenario_mix=(0.5, 0.5)),
            dict(n_records=10, scenario_mix=(0.5,) * 7),
            dict(n_records=10, scenario_mix=(-0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2)),
            dict(n_records=10, cycle_length_ticks=5),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidConfig):
            SimConfig(**kwargs)

    def test_from_file(self, tmp_path):
        p = tmp_path / "sim.cfg"
        p.write_text("# comment\nn_records = 120\nanomaly_fraction = 0.25\nscenario_mix = 0,0,0,0,0,0.5,0.5\nrng_seed = 9\n")
        cfg = SimConfig.from_file(p)
        assert cfg == SimConfig(120, 0.25, (0, 0, 0, 0, 0, 0.5, 0.5), rng_seed=9)

    def test_from_file_errors(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("n_records = 10\ncolour = blue\n")
        with pytest.raises(InvalidConfig):
            SimConfig.from_file(p)
        p.write_text("anomaly_fraction = 0.1\n")
        with pytest.raises(InvalidConfig):
            SimConfig.from_file(p)
        with pytest.raises(InvalidConfig):
            SimConfig.from_file(tmp_path / "missing.cfg")


class TestSimulate:
    def test_shape_and_counts(self):
        data = simulate_tlight(SimConfig(2000, 0.3, rng_seed=4))
        assert data.X.shape == (2000, len(FEATURE_NAMES))
        assert data.n_anomalies == 600
        assert data.features.feature_names == FEATURE_NAMES
        assert np.all((data.X >= 0) & (data.X <= 1))
        counts = np.bincount(data.scenario_tags[data.labels == 1], minlength=8)[1:]
        np.testing.assert_array_equal(counts, [120, 120, 120, 120, 120, 0, 0])

    def test_deterministic(self):
        a = simulate_tlight(SimConfig(500, 0.2, rng_seed=3))
        b = simulate_tlight(SimConfig(500, 0.2, rng_seed=3))
        c = simulate_tlight(SimConfig(500, 0.2, rng_seed=4))
        assert a.X.tobytes() == b.X.tobytes() and np.array_equal(a.labels, b.labels)
        assert a.X.tobytes() != c.X.tobytes()

    def test_normal_rows_satisfy_every_constraint(self):
        data = simulate_tlight(SimConfig(5000, 0.0, rng_seed=1))
        for name, mask in constraint_violations(data.X).items():
            assert not mask.any(), name

    @pytest.mark.parametrize("scenario", [1, 2, 3, 4, 5])
    def test_signal_scenarios_break_signal_constraints(self, scenario):
        data = simulate_tlight(SimConfig(400, 1.0, one_scenario_mix(scenario), rng_seed=scenario))
        v = constraint_violations(data.X)
        broken = np.zeros(400, dtype=bool)
        for name in SIGNAL_CONSTRAINTS + ("lamp_timer",):
            broken |= v[name]
        assert broken.all()

    @pytest.mark.parametrize("scenario", [6, 7])
    def test_timing_scenarios_only_break_timing(self, scenario):
        data = simulate_tlight(SimConfig(400, 1.0, one_scenario_mix(scenario), rng_seed=scenario))
        v = constraint_violations(data.X)
        for name in SIGNAL_CONSTRAINTS:
            assert not v[name].any(), name
        timing = np.zeros(400, dtype=bool)
        for name in TIMING_CONSTRAINTS:
            timing |= v[name]
        assert timing.all()

    def test_other_cycle_length(self):
        data = simulate_tlight(SimConfig(600, 0.0, cycle_length_ticks=90, rng_seed=2))
        assert not any(m.any() for m in constraint_violations(data.X, 90).values())

    def test_standard_test_configs(self):
        cfgs = standard_test_configs(5)
        assert [(c.n_records, c.anomaly_fraction) for c in cfgs] == [
            (5000, 0.1), (7000, 0.1), (13130, 0.2), (15000, 0.3), (18270, 0.5)
        ]
        assert [c.scenario_mix for c in cfgs] == [SIGNAL_MIX] * 3 + [TIMING_MIX] * 2
        assert cfgs[0].rng_seed == derive_seed(5, "test1")


@given(st.integers(0, 100_000), st.lists(st.integers(0, 50), min_size=7, max_size=7).filter(lambda w: sum(w) > 0))
def test_apportion_sums_to_total(total, raw):
    w = tuple(x / sum(raw) for x in raw)
    counts = _apportion(total, w)
    assert counts.sum() == total
    assert np.all(np.abs(counts - np.asarray(w) * total) < 1.0 + 1e-9)
    assert np.all(counts[np.asarray(w) == 0] == 0)


class TestCsv:
    def test_round_trip_identity(self, tmp_path):
        data = simulate_tlight(SimConfig(300, 0.4, TIMING_MIX, rng_seed=8))
        p = tmp_path / "d.csv"
        write_csv(p, data)
        back = load_csv(p)
        assert back.X.tobytes() == data.X.tobytes()
        np.testing.assert_array_equal(back.labels, data.labels)
        np.testing.assert_array_equal(back.scenario_tags, data.scenario_tags)
        assert back.features.feature_names == FEATURE_NAMES
        assert p.read_bytes().count(b"\r") == 0

    def test_unlabeled_file_is_all_normal(self, tmp_path):
        p = tmp_path / "u.csv"
        p.write_text("a,b\n1,0\n0.5,true\nFALSE,2\n")
        data = load_csv(p)
        np.testing.assert_array_equal(data.X, [[1, 0], [0.5, 1], [0, 2]])
        assert data.n_anomalies == 0

    @pytest.mark.parametrize(
        "text, exc",
        [
            ("", EmptyFile),
            ("a,b,label\n", EmptyFile),
            ("a,b\n1,x\n", MalformedCsv),
            ("a,b\n1\n", MalformedCsv),
            ("a,b,label\n1,2,3\n", MalformedCsv),
            ("a,b\n1,nan\n", MalformedCsv),
            ("label\n0\n", MalformedCsv),
        ],
    )
    def test_malformed(self, tmp_path, text, exc):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        with pytest.raises(exc):
            load_csv(p)


class TestTypes:
    def test_feature_matrix_validation(self):
        with pytest.raises(ValueError):
            FeatureMatrix(np.zeros((2, 2)), ("a",))
        with pytest.raises(ValueError):
            FeatureMatrix(np.array([[np.inf, 0.0]]), ("a", "b"))
        with pytest.raises(ValueError):
            FeatureMatrix(np.zeros(3), ("a",))

    def test_labeled_set_validation(self):
        fm = FeatureMatrix(np.zeros((3, 1)), ("a",))
        with pytest.raises(ValueError):
            LabeledSet(fm, [0, 1], [0, 0])
        with pytest.raises(ValueError):
            LabeledSet(fm, [0, 2, 0], [0, 0, 0])
        with pytest.raises(ValueError):
            LabeledSet(fm, [0, 0, 0], [0, 3, 0])  # tagged but labeled normal


def test_derive_seed_stable_and_distinct():
    assert derive_seed(1, "ocnn") == derive_seed(1, "ocnn")
    seeds = {derive_seed(s, c) for s in range(5) for c in ("ocnn", "iforest", "train", "test1")}
    assert len(seeds) == 20
    assert all(0 <= s < 2**63 for s in seeds)


@pytest.mark.parametrize("cycle", [20, 60, 90])
@pytest.mark.parametrize("scenario", range(1, 8))
def test_every_injected_row_is_detectable_in_principle(scenario, cycle):
    data = simulate_tlight(SimConfig(1500, 1.0, one_scenario_mix(scenario), cycle_length_ticks=cycle, rng_seed=scenario * cycle))
    broken = np.zeros(1500, dtype=bool)
    for mask in constraint_violations(data.X, cycle).values():
        broken |= mask
    assert broken.all()
