import numpy as np
import pytest

from andersonlab import (
    ModelSpec,
    ProcessEnsemble,
    ProcessSample,
    SiteDistribution,
    limit_conditions_check,
    local_process,
    poisson_counts_test,
    restricted_process,
    spacing_test,
    superposition_box_side,
    superposition_process,
)
from andersonlab.errors import InsufficientDataError, ParameterError


def _strong_chain(side):
    return ModelSpec.lattice(1, side, SiteDistribution.uniform(1.0, 8.0))


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def test_superposition_box_side_values():
    assert superposition_box_side(128, 0.5) == 8
    assert superposition_box_side(256, 0.5) == 16
    assert superposition_box_side(512, 0.5) == 16
    assert superposition_box_side(64, 1.0) == 64
    with pytest.raises(ParameterError):
        superposition_box_side(128, 0.05)  # no even divisor that small
    with pytest.raises(ParameterError):
        superposition_box_side(128, 0.0)
    with pytest.raises(ParameterError):
        superposition_box_side(128, 1.5)


def test_full_exponent_superposition_equals_local():
    model = _strong_chain(16)
    loc = local_process(model, 4.0, 5.0, 6, 42)
    sup = superposition_process(model, 4.0, 5.0, 6, 42, a=1.0)
    assert sup.params["box_side"] == 16
    for a, b in zip(loc.samples, sup.samples):
        assert np.array_equal(a.points, b.points)


def test_local_process_points_sorted_and_inside(lattice_small):
    ens = local_process(lattice_small, 2.0, 8.0, 5, 3)
    assert ens.scale_volume == 16.0
    for s in ens.samples:
        assert np.all(np.diff(s.points) >= 0.0)
        assert np.all(np.abs(s.points) <= 8.0)
    with pytest.raises(ParameterError):
        local_process(lattice_small, 2.0, -1.0, 5, 3)


def test_counts_on_interval_unions():
    pts = np.array([-3.0, -1.0, 0.5, 0.5, 2.0])
    ens = ProcessEnsemble(
        samples=[ProcessSample(0, pts)], energy=0.0, window=4.0, scale_volume=1.0
    )
    assert ens.counts((-4.0, 4.0))[0] == 5
    # half-open cells: the point at -1.0 belongs to (-2, -1], not (-1, 0]
    assert ens.counts([(-2.0, -1.0)])[0] == 1
    assert ens.counts([(-1.0, 0.0)])[0] == 0
    assert ens.counts([(-2.0, -1.0), (0.0, 1.0)])[0] == 3
    with pytest.raises(ParameterError):
        ens.counts([(-2.0, 0.0), (-1.0, 1.0)])  # overlap
    with pytest.raises(ParameterError):
        ens.counts([(3.0, 5.0)])  # leaks outside the window
    with pytest.raises(ParameterError):
        ens.counts([(1.0, 1.0)])  # degenerate


def test_pooled_gaps_and_csv():
    ens = ProcessEnsemble(
        samples=[
            ProcessSample(0, np.array([0.0, 1.0, 3.0])),
            ProcessSample(1, np.array([2.0])),
            ProcessSample(2, np.array([])),
        ],
        energy=0.0,
        window=4.0,
        scale_volume=1.0,
    )
    # circular pooling: [0,1,3] on a circumference-8 circle contributes
    # 1, 2 and the wrap gap 8-3=5; a single point wraps to itself
    assert np.array_equal(ens.pooled_gaps(), [1.0, 2.0, 5.0, 8.0])
    pts_lines = ens.points_csv_bytes().decode().splitlines()
    assert pts_lines[0] == "trial,point"
    assert len(pts_lines) == 5
    gap_lines = ens.gaps_csv_bytes().decode().splitlines()
    assert gap_lines == ["gap", "1.0", "2.0", "5.0", "8.0"]


def test_restricted_weights_partition_inner_mass():
    model = _strong_chain(8)
    # window wide enough to keep the whole rescaled spectrum
    ens = restricted_process(model, 2.0, 200.0, 4, 9, kappa=2)
    assert ens.weighted
    for s in ens.samples:
        assert s.points.size == 16  # full spectrum of the doubled torus
        assert np.all(s.weights >= -1e-12)
        assert np.all(s.weights <= 1.0 + 1e-12)
        # eigenfunction masses over the inner box tile the identity
        assert float(np.sum(s.weights)) == pytest.approx(8.0, abs=1e-9)
    with pytest.raises(ParameterError):
        restricted_process(model, 2.0, 10.0, 2, 9, kappa=1)


# ---------------------------------------------------------------------------
# statistical tests, calibrated on synthetic null data
# ---------------------------------------------------------------------------


def _poisson_ensemble(rng, trials, window, intensity):
    samples = []
    for t in range(trials):
        n = rng.poisson(intensity * 2.0 * window)
        pts = np.sort(rng.uniform(-window, window, size=n))
        samples.append(ProcessSample(t, pts))
    return ProcessEnsemble(
        samples=samples, energy=0.0, window=window, scale_volume=1.0
    )


def test_counts_test_null_calibration():
    rng = np.random.default_rng(2024)
    rejections = 0
    replicas = 200
    for _ in range(replicas):
        ens = _poisson_ensemble(rng, 150, 3.0, 1.0)
        res = poisson_counts_test(ens, (-2.0, 2.0), 1.0)
        rejections += int(res.reject)
    rate = rejections / replicas
    # 3-sigma binomial band around the nominal 5% level
    assert 0.004 <= rate <= 0.096
    sample = poisson_counts_test(_poisson_ensemble(rng, 200, 3.0, 1.0), (-2.0, 2.0), 1.0)
    assert 0.0 <= sample.tv_distance <= 1.0
    assert sample.chi2_dof >= 1
    payload = sample.to_json_dict()
    assert {"tv_distance", "chi2_stat", "chi2_pvalue", "reject"} <= set(payload)


def test_counts_test_rejects_periodic_points():
    # a rigid lattice of points is as far from Poisson as it gets
    samples = [
        ProcessSample(t, np.linspace(-2.9, 2.9, 6)) for t in range(300)
    ]
    ens = ProcessEnsemble(samples=samples, energy=0.0, window=3.0, scale_volume=1.0)
    res = poisson_counts_test(ens, (-2.0, 2.0), 1.0)
    assert res.reject
    assert res.tv_distance > 0.3


def test_spacing_test_null_calibration():
    # the wrap-around pooling makes the null exact, so the rejection
    # rate must track the nominal 5% level even with many pooled gaps
    rng = np.random.default_rng(77)
    rejections = 0
    replicas = 150
    for _ in range(replicas):
        ens = _poisson_ensemble(rng, 200, 3.0, 1.0)
        res = spacing_test(ens, 1.0)
        rejections += int(res.reject)
    rate = rejections / replicas
    assert rate <= 0.12  # nominal 5% with binomial headroom


def test_spacing_test_rejects_rigid_spectrum():
    samples = [ProcessSample(t, np.linspace(-2.75, 2.75, 12)) for t in range(100)]
    ens = ProcessEnsemble(samples=samples, energy=0.0, window=3.0, scale_volume=1.0)
    res = spacing_test(ens, 2.0)
    assert res.reject
    assert res.ks_stat > 5.0 * res.ks_critical


def test_spacing_test_needs_enough_gaps():
    rng = np.random.default_rng(5)
    ens = _poisson_ensemble(rng, 10, 3.0, 1.0)
    with pytest.raises(InsufficientDataError):
        spacing_test(ens, 1.0)
    res = spacing_test(ens, 1.0, min_gaps=10)
    assert res.n_gaps >= 10
    assert res.ks_critical == pytest.approx(1.358 / np.sqrt(res.n_gaps))


def test_weighted_ensembles_are_rejected():
    s = ProcessSample(0, np.array([0.0, 1.0]), weights=np.array([0.5, 0.5]))
    ens = ProcessEnsemble(samples=[s], energy=0.0, window=2.0, scale_volume=1.0)
    with pytest.raises(ParameterError):
        poisson_counts_test(ens, (-1.0, 1.0), 1.0)
    with pytest.raises(ParameterError):
        spacing_test(ens, 1.0)


def test_counts_test_parameter_validation():
    rng = np.random.default_rng(1)
    ens = _poisson_ensemble(rng, 20, 3.0, 1.0)
    with pytest.raises(ParameterError):
        poisson_counts_test(ens, (-2.0, 2.0), 0.0)
    with pytest.raises(ParameterError):
        spacing_test(ens, -1.0)


# ---------------------------------------------------------------------------
# limit conditions
# ---------------------------------------------------------------------------


def test_limit_conditions_report_shape():
    model = _strong_chain(64)
    rep = limit_conditions_check(
        model, 6.0, (-2.0, 2.0), [32, 64], 0.12, [30, 30], 11
    )
    assert len(rep.rows) == 2
    for row in rep.rows:
        assert 0.0 <= row["p1"] <= 1.0
        assert 0.0 <= row["p2"] <= row["p1"] + 1e-12
        assert row["boxes"] * row["box_side"] == row["side"]
    assert set(rep.verdicts) == {
        "single_box_rare",
        "mean_matches_limit",
        "pairs_negligible",
    }
    assert rep.passed == all(rep.verdicts.values())
    csv_lines = rep.csv_bytes().decode().splitlines()
    assert csv_lines[0].startswith("side,box_side,boxes,")
    with pytest.raises(ParameterError):
        limit_conditions_check(model, 6.0, (2.0, 2.0), [32], 0.12, 5, 1)
    with pytest.raises(ParameterError):
        limit_conditions_check(model, 6.0, (-2.0, 2.0), [32], 0.12, [5, 5], 1)
