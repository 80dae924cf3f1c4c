import json
import math

import numpy as np
import pytest

from andersonlab import (
    Interval,
    count_in,
    eigen_full,
    fixed_site_wegner,
    mean_and_stderr,
    minami_experiment,
    run_trials,
    simplicity_experiment,
    smooth_switch,
    spectral_averaging_check,
    spectral_shift_experiment,
    wegner_experiment,
)
from andersonlab.errors import ParameterError


# ---------------------------------------------------------------------------
# reduction helpers
# ---------------------------------------------------------------------------


def test_mean_and_stderr_hand_values():
    m, s = mean_and_stderr([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5
    assert s == pytest.approx(math.sqrt((5.0 / 3.0) / 4.0))
    m1, s1 = mean_and_stderr([7.0])
    assert (m1, s1) == (7.0, 0.0)
    with pytest.raises(ParameterError):
        mean_and_stderr([])


def test_run_trials_order_and_workers():
    got1 = run_trials(lambda t: t * t, 9, workers=1)
    got3 = run_trials(_square, 9, workers=3)
    assert got1 == [t * t for t in range(9)]
    assert got3 == got1
    with pytest.raises(ParameterError):
        run_trials(_square, 0)
    with pytest.raises(ParameterError):
        run_trials(_square, 4, workers=0)


def _square(t):
    return t * t


def test_smooth_switch_shape():
    assert smooth_switch(-1.0, 0.5) == 1.0
    assert smooth_switch(0.0, 0.5) == 1.0
    assert smooth_switch(0.5, 0.5) == 0.0
    assert smooth_switch(2.0, 0.5) == 0.0
    t = np.linspace(-0.2, 0.7, 301)
    h = smooth_switch(t, 0.5)
    assert np.all(np.diff(h) <= 1e-15)  # nonincreasing
    slopes = np.diff(h) / np.diff(t)
    assert np.min(slopes) >= -2.0 / 0.5  # steeper than -2/delta never
    assert np.min(slopes) == pytest.approx(-1.875 / 0.5, rel=1e-3)
    with pytest.raises(ParameterError):
        smooth_switch(0.1, 0.0)


def test_switch_sandwiches_indicator():
    # 1{x <= b} <= h(x - b) <= 1{x <= b + delta}
    delta, b = 0.3, 1.2
    x = np.linspace(0.0, 2.5, 400)
    h = smooth_switch(x - b, delta)
    assert np.all(h >= (x <= b) - 1e-15)
    assert np.all(h <= (x <= b + delta) + 1e-15)


# ---------------------------------------------------------------------------
# counting experiments against direct reduction
# ---------------------------------------------------------------------------


def test_wegner_matches_direct_reduction(lattice_small):
    ivs = [(1.0, 1.2), (2.0, 2.5)]
    rep = wegner_experiment(lattice_small, ivs, 7, 99)
    for i, iv in enumerate(ivs):
        counts = [
            count_in(lattice_small.build(99, t), iv) for t in range(7)
        ]
        m, s = mean_and_stderr(counts)
        assert rep.cells[i].estimate == m
        assert rep.cells[i].stderr == s
        assert rep.cells[i].bound == pytest.approx(
            lattice_small.distribution.density_sup * (iv[1] - iv[0]) * 16.0
        )


def test_minami_statistic_is_second_factorial_moment(lattice_small):
    iv = (0.0, 4.0)
    rep = minami_experiment(lattice_small, iv, 5, 33)
    counts = np.array(
        [count_in(lattice_small.build(33, t), iv) for t in range(5)], dtype=float
    )
    m, _ = mean_and_stderr(counts * (counts - 1.0))
    assert rep.cells[0].estimate == m
    assert rep.extras["pair_probability"][0] == pytest.approx(
        float(np.mean(counts >= 2))
    )


def test_wegner_monotone_in_interval(lattice_small):
    # |I| -> 0 shrinks the mean count monotonically
    rep = wegner_experiment(
        lattice_small, [(2.0, 2.01), (2.0, 2.05), (2.0, 2.1)], 60, 5
    )
    ests = [c.estimate for c in rep.cells]
    assert ests[0] <= ests[1] <= ests[2]


def test_report_serialization_round_trip(lattice_small):
    rep = wegner_experiment(lattice_small, (1.0, 1.5), 4, 11)
    payload = json.loads(rep.to_json())
    assert payload["kind"] == "wegner"
    cell = payload["per_cell"][0]
    assert set(cell) == {"interval", "volume", "trials", "estimate", "stderr", "bound", "pass"}
    header = rep.csv_bytes().decode().splitlines()[0]
    assert header == "kind,interval_lo,interval_hi,volume,trials,estimate,stderr,bound,pass"


def test_spectral_averaging_diagonal_mass(lattice_small):
    rep = spectral_averaging_check(lattice_small, (1.0, 1.4), 6, 3, site=2)
    # direct reduction
    vals = []
    for t in range(6):
        op = lattice_small.build(3, t)
        spec = eigen_full(op, vectors=True)
        mask = Interval(1.0, 1.4).contains(spec.values)
        vals.append(float(np.sum(spec.vectors[2, mask] ** 2)))
    m, _ = mean_and_stderr(vals)
    assert rep.cells[0].estimate == pytest.approx(m, abs=1e-15)
    assert rep.cells[0].bound == pytest.approx(0.4)


def test_site_mass_sums_to_interval_count(lattice_small):
    # summing the diagonal projection mass over all sites recovers the
    # eigenvalue count:  sum_j <d_j, P d_j> = tr P(I) = N(I)
    op = lattice_small.build(13, 0)
    spec = eigen_full(op, vectors=True)
    iv = Interval(0.5, 3.0)
    mask = iv.contains(spec.values)
    total = float(np.sum(spec.vectors[:, mask] ** 2))
    assert total == pytest.approx(count_in(op, iv), abs=1e-10)


def test_fixed_site_translation_covariance(lattice_small):
    # pinning site 0 or site 5 must give statistically identical counts
    iv = (1.0, 2.0)
    rep_a = fixed_site_wegner(lattice_small, iv, 80, 17, site=0, value=0.5)
    rep_b = fixed_site_wegner(lattice_small, iv, 80, 17, site=5, value=0.5)
    ca, cb = rep_a.cells[0], rep_b.cells[0]
    gap = abs(ca.estimate - cb.estimate)
    sigma = math.hypot(ca.stderr, cb.stderr)
    assert gap <= 3.0 * max(sigma, 1e-12)


def test_spectral_shift_pathwise_bounds(lattice_small):
    rep = spectral_shift_experiment(
        lattice_small, [0.5, 1.5, 3.0], 40, 7, delta=0.05, tau=1.0
    )
    assert rep.extras["range_violations"] == 0
    for c in rep.cells:
        assert -1e-10 <= c.estimate <= 1.0 + 1e-10
        assert c.bound == 1.0
    assert rep.extras["max_switch_slope"] == pytest.approx(1.875 / 0.05)


def test_simplicity_validation_and_threshold(lattice_small):
    with pytest.raises(ParameterError):
        simplicity_experiment(lattice_small, (0.0, 1.0), 2.0, [8, 16], 5, 1)
    rep = simplicity_experiment(lattice_small, (0.0, 5.0), 3.0, [8, 16], 30, 1)
    assert rep.extras["thresholds"] == [8.0**-3, 16.0**-3]
    assert [c.volume for c in rep.cells] == [8.0, 16.0]
    # bound: 2 rho^2 (|I|+1) L^{2d-q}
    assert rep.cells[0].bound == pytest.approx(2.0 * 1.0 * 6.0 * 8.0 ** (-1.0))


def test_per_side_trial_list_mismatch(lattice_small):
    with pytest.raises(ParameterError):
        wegner_experiment(lattice_small, (0.0, 1.0), [5, 5], 1, sides=[8, 16, 32])
