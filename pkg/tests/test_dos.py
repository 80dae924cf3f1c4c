import numpy as np
import pytest

from andersonlab import (
    ModelSpec,
    SiteDistribution,
    estimate_density,
    estimate_ids,
    lebesgue_point_scan,
    mc_resolution,
)
from andersonlab.errors import ParameterError

from conftest import free_lattice_eigs


def _free_ids(d, side, energy):
    eigs = free_lattice_eigs(d, side)
    return float(np.sum(eigs <= energy)) / side**d


def test_free_chain_ids_matches_fourier(free_chain):
    grid = np.linspace(-0.5, 4.5, 20)
    curve = estimate_ids(free_chain, grid, trials=3, master_seed=0)
    expected = [_free_ids(1, free_chain.side, e) for e in grid]
    assert np.allclose(curve.values, expected, atol=1e-12)
    assert np.all(curve.stderrs == 0.0)


def test_free_ids_half_filling():
    # on a ring with side = 2 mod 4 the spectrum is symmetric about 2
    # with no eigenvalue pinned at 2 from above, so N(2) = 1/2 exactly
    model = ModelSpec.lattice(1, 50, SiteDistribution.uniform(1.0, 0.0))
    curve = estimate_ids(model, [2.0], trials=1, master_seed=0)
    assert curve.values[0] == pytest.approx(0.5, abs=1e-15)


def test_ids_monotone_and_csv(lattice_small):
    grid = [0.0, 1.0, 2.0, 3.0, 5.0]
    curve = estimate_ids(lattice_small, grid, trials=10, master_seed=4)
    assert np.all(np.diff(curve.values) >= 0.0)
    lines = curve.csv_bytes().decode().splitlines()
    assert lines[0] == "energy,ids,stderr"
    assert len(lines) == 6
    with pytest.raises(ParameterError):
        estimate_ids(lattice_small, [], trials=2, master_seed=0)


def test_mc_resolution_scaling():
    assert mc_resolution(400, 100.0) == pytest.approx(4.0 / 200.0)
    assert mc_resolution(100, 0.5) == pytest.approx(4.0 / 10.0)  # volume floored at 1


def test_density_difference_quotient(lattice_small):
    est = estimate_density(lattice_small, 2.0, trials=40, master_seed=9, bandwidth=1.0)
    curve = estimate_ids(lattice_small, [1.5, 2.5], trials=40, master_seed=9)
    manual = (curve.values[1] - curve.values[0]) / 1.0
    assert est.value == pytest.approx(manual, abs=1e-12)
    assert est.notice is None
    assert est.bandwidth == 1.0


def test_density_bandwidth_widening(lattice_small):
    est = estimate_density(lattice_small, 2.0, trials=10, master_seed=9, bandwidth=1e-6)
    assert est.bandwidth > 1e-6
    assert est.notice is not None and "widened" in est.notice


def test_density_nonnegative(lattice_small):
    for e in (0.5, 2.0, 4.0):
        est = estimate_density(lattice_small, e, trials=20, master_seed=2)
        assert est.value >= -1e-12


def test_lebesgue_scan_flags_flat_region():
    # strong uniform disorder: the bulk density is flat and positive, so
    # mid-spectrum candidates come back admissible
    model = ModelSpec.lattice(1, 64, SiteDistribution.uniform(8.0))
    points = lebesgue_point_scan(
        model, (4.0, 8.0), trials=60, master_seed=21, candidates=5, bandwidth=0.4
    )
    assert len(points) == 5
    assert points[0].admissible
    assert points[0].density >= 0.05
    assert points[0].spread <= 0.10
    # ordering: admissible block first, then by spread
    flags = [p.admissible for p in points]
    assert flags == sorted(flags, reverse=True)


def test_lebesgue_scan_rejects_gap():
    # free chain near the band edge: density ~ 0 below the spectrum
    model = ModelSpec.lattice(1, 64, SiteDistribution.uniform(1.0, 0.0))
    points = lebesgue_point_scan(
        model, (-2.0, -1.0), trials=4, master_seed=3, candidates=3, bandwidth=0.2
    )
    assert all(not p.admissible for p in points)
    with pytest.raises(ParameterError):
        lebesgue_point_scan(model, (3.0, 1.0), trials=4, master_seed=0)
