import numpy as np
import pytest

from andersonlab import (
    Interval,
    count_at_most,
    count_in,
    eigen_full,
    local_projection_trace,
    resolvent_block_norm,
    resolvent_columns,
    trace_function,
)
from andersonlab.errors import DomainError, ParameterError, SizeError, StateError
from andersonlab.spectral import Spectrum

from conftest import free_lattice_eigs


def test_interval_semantics():
    iv = Interval(1.0, 2.0)
    assert iv.width == 1.0
    assert not iv.contains(1.0)  # half-open: lo excluded
    assert iv.contains(2.0)  # hi included
    with pytest.raises(ParameterError):
        Interval(2.0, 2.0)
    with pytest.raises(ParameterError):
        Interval(0.0, np.inf)


def test_eigen_full_matches_numpy(lattice_small):
    op = lattice_small.build(17, 2)
    spec = eigen_full(op, vectors=True)
    vals = np.linalg.eigvalsh(op.dense())
    assert np.allclose(spec.values, vals, atol=1e-12)
    # vectors diagonalize
    recon = spec.vectors @ np.diag(spec.values) @ spec.vectors.T
    assert np.allclose(recon, op.dense(), atol=1e-10)


def test_eigen_full_size_guard(lattice_small):
    with pytest.raises(SizeError):
        eigen_full(lattice_small.build(0, 0), dense_limit=8)


def test_count_matches_oracle_dense_and_cyclic(lattice_small, lattice_2d):
    for model, trials in [(lattice_small, 6), (lattice_2d, 4)]:
        for t in range(trials):
            op = model.build(23, t)
            vals = eigen_full(op).values
            for e in np.linspace(-0.5, float(vals.max()) + 0.5, 17):
                expect = int(np.searchsorted(vals, e, side="right"))
                assert count_at_most(op, e) == expect


def test_count_at_exact_eigenvalue_counts_it():
    # free chain L=4 has eigenvalues {0, 2, 2, 4}; counting at an exact
    # eigenvalue must include it (<= convention, zero-pivot retry)
    import andersonlab as al

    model = al.ModelSpec.lattice(1, 4, al.SiteDistribution.uniform(1.0, 0.0))
    op = model.build(0, 0)
    assert count_at_most(op, 0.0) == 1
    assert count_at_most(op, 2.0) == 3
    assert count_at_most(op, 4.0) == 4
    assert count_at_most(op, -1e-9) == 0


def test_count_in_additive(lattice_small):
    op = lattice_small.build(29, 1)
    a, b, c = 0.5, 2.0, 3.5
    assert count_in(op, (a, c)) == count_in(op, (a, b)) + count_in(op, (b, c))


def test_count_accepts_plain_matrices():
    rng = np.random.default_rng(5)
    m = rng.normal(size=(12, 12))
    m = (m + m.T) / 2
    vals = np.linalg.eigvalsh(m)
    for e in [-2.0, 0.0, 1.5]:
        assert count_at_most(m, e) == int(np.searchsorted(vals, e, side="right"))
    with pytest.raises(ParameterError):
        count_at_most(np.ones((2, 3)), 0.0)


def test_spectrum_helpers():
    spec = Spectrum(values=np.array([0.0, 1.0, 1.0, 3.0]))
    assert spec.count_in((0.0, 1.0)) == 2
    assert spec.count_in((-1.0, 0.0)) == 1
    vals, vecs = spec.select((0.5, 3.0))
    assert list(vals) == [1.0, 1.0, 3.0] and vecs is None
    assert spec.csv_bytes().decode().splitlines()[0] == "eigenvalue"


def test_trace_function_matches_exp(lattice_small):
    op = lattice_small.build(31, 0)
    got = trace_function(op, lambda x: np.exp(-x))
    expect = float(np.sum(np.exp(-np.linalg.eigvalsh(op.dense()))))
    assert got == pytest.approx(expect, rel=1e-12)


def test_local_projection_trace_matches_projector(lattice_small):
    op = lattice_small.build(37, 0)
    spec = eigen_full(op, vectors=True)
    iv = Interval(1.0, 3.0)
    sites = [0, 3, 7]
    got = local_projection_trace(op, iv, sites)
    mask = iv.contains(spec.values)
    P = spec.vectors[:, mask] @ spec.vectors[:, mask].T
    assert got == pytest.approx(float(np.trace(P[np.ix_(sites, sites)])), abs=1e-12)
    # full-box trace equals the interval count
    full = local_projection_trace(op, iv, list(range(op.n)))
    assert full == pytest.approx(count_in(op, iv), abs=1e-10)
    with pytest.raises(StateError):
        local_projection_trace(op, iv, sites, spectrum=Spectrum(values=spec.values))


def test_resolvent_columns_residual_and_domain(lattice_small):
    op = lattice_small.build(41, 0)
    z = 1.0 + 1e-3j
    cols = [0, 5]
    sol = resolvent_columns(op, z, cols)
    dense = op.dense().astype(complex) - z * np.eye(op.n)
    rhs = np.zeros((op.n, 2), dtype=complex)
    rhs[0, 0] = rhs[5, 1] = 1.0
    assert np.allclose(dense @ sol, rhs, atol=1e-10)
    with pytest.raises(DomainError):
        resolvent_columns(op, 1.0 + 0.0j, cols)


def test_resolvent_block_norm_is_svd(lattice_small):
    op = lattice_small.build(43, 0)
    z = 2.0 + 1e-2j
    got = resolvent_block_norm(op, z, 2, 9)
    inv = np.linalg.inv(op.dense().astype(complex) - z * np.eye(op.n))
    assert got == pytest.approx(abs(inv[2, 9]), rel=1e-9)


def test_free_ids_half_at_two():
    # d=1, L = 2 mod 4: exactly half the Fourier eigenvalues sit below 2
    import andersonlab as al

    model = al.ModelSpec.lattice(1, 50, al.SiteDistribution.uniform(1.0, 0.0))
    op = model.build(0, 0)
    assert count_at_most(op, 2.0) == 25
    vals = free_lattice_eigs(1, 50)
    assert int(np.searchsorted(vals, 2.0, side="right")) == 25
