"""Spectral computations on assembled operators.

Two routes to eigenvalue counts are kept deliberately independent:

* :func:`eigen_full` -- dense symmetric eigendecomposition (LAPACK).
  This is the correctness oracle and the only place eigenvectors come
  from.
* :func:`count_at_most` -- inertia counting via triangular
  factorisation of H - E*I, without ever forming eigenvalues.  For
  one-dimensional operators (periodic tridiagonal matrices) a dedicated
  O(n) bordered factorisation is used; anything else goes through a
  dense Bunch-Kaufman LDL^T.  This is the fast path the ensemble
  drivers run millions of times.

Counting convention: ``count_at_most(H, E)`` is the number of
eigenvalues <= E.  A zero pivot means E collided with an eigenvalue; the
energy is then nudged up by 1e-12 * |H| once and zero pivots on the
retry are counted as negative (i.e. the eigenvalue counts as <= E).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    DomainError,
    NumericError,
    ParameterError,
    SizeError,
    StateError,
)
from .operators import AssembledOperator

__all__ = [
    "Interval",
    "Spectrum",
    "eigen_full",
    "count_at_most",
    "count_in",
    "trace_function",
    "local_projection_trace",
    "resolvent_block_norm",
    "resolvent_columns",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 4096

_NUDGE = 1e-12
_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class Interval:
    """Half-open energy interval (lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ParameterError("interval endpoints must be finite")
        if not self.lo < self.hi:
            raise ParameterError(f"need lo < hi, got ({self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: np.ndarray | float) -> np.ndarray:
        x = np.asarray(x)
        return (x > self.lo) & (x <= self.hi)

    def as_tuple(self) -> tuple[float, float]:
        return (self.lo, self.hi)


def _as_interval(interval) -> Interval:
    if isinstance(interval, Interval):
        return interval
    lo, hi = interval
    return Interval(float(lo), float(hi))


@dataclass
class Spectrum:
    """Eigenvalues in ascending order, optionally with the matching
    orthonormal eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray | None = None
    source_hash: str | None = None

    @property
    def n(self) -> int:
        return self.values.size

    def count_in(self, interval) -> int:
        iv = _as_interval(interval)
        lo = np.searchsorted(self.values, iv.lo, side="right")
        hi = np.searchsorted(self.values, iv.hi, side="right")
        return int(hi - lo)

    def select(self, interval) -> tuple[np.ndarray, np.ndarray | None]:
        iv = _as_interval(interval)
        mask = iv.contains(self.values)
        vecs = self.vectors[:, mask] if self.vectors is not None else None
        return self.values[mask], vecs

    def csv_bytes(self) -> bytes:
        lines = ["eigenvalue"] + [repr(float(v)) for v in self.values]
        return ("\n".join(lines) + "\n").encode()


# ---------------------------------------------------------------------------
# dense eigendecomposition (oracle path)
# ---------------------------------------------------------------------------


def _as_dense(H) -> tuple[np.ndarray, str]:
    if isinstance(H, AssembledOperator):
        return H.dense(), H.content_hash()
    if sp.issparse(H):
        arr = H.toarray()
    else:
        arr = np.asarray(H, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {arr.shape}")
    return arr, hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def eigen_full(H, vectors: bool = False, dense_limit: int = DENSE_LIMIT) -> Spectrum:
    """Full symmetric eigensolve (ascending).  Refuses matrices above
    ``dense_limit`` rows; the counting path is the tool for those."""
    mat, source = _as_dense(H)
    if mat.shape[0] > dense_limit:
        raise SizeError(
            f"dense eigensolve limited to {dense_limit} rows, got {mat.shape[0]}"
        )
    if not np.all(np.isfinite(mat)):
        raise NumericError("matrix has non-finite entries")
    if vectors:
        vals, vecs = np.linalg.eigh(mat)
        return Spectrum(values=vals, vectors=vecs, source_hash=source)
    vals = np.linalg.eigvalsh(mat)
    return Spectrum(values=vals, vectors=None, source_hash=source)


# ---------------------------------------------------------------------------
# inertia counting (fast path)
# ---------------------------------------------------------------------------


def _operator_norm_bound(H) -> float:
    """Row-sum (infinity-norm) bound, cheap on sparse storage."""
    if isinstance(H, AssembledOperator):
        mat = H.matrix
        return float(np.max(np.abs(mat).sum(axis=1))) if mat.nnz else 0.0
    if sp.issparse(H):
        return float(np.max(np.abs(H).sum(axis=1))) if H.nnz else 0.0
    arr = np.asarray(H, dtype=float)
    return float(np.max(np.sum(np.abs(arr), axis=1))) if arr.size else 0.0


def _cyclic_negative_count(
    diag: np.ndarray,
    off: np.ndarray,
    corner: float,
    energy: float,
    pivmin: float,
    zero_is_negative: bool,
) -> int | None:
    """Negative-pivot count of the bordered LDL^T of a periodic
    tridiagonal matrix shifted by ``energy``.  Returns None when a zero
    pivot is met and ``zero_is_negative`` is False (caller retries)."""
    n = diag.size
    a = diag - energy
    neg = 0
    d_prev = a[0]
    border = 0.0  # running sum f_k^2 d_k for the last pivot
    f_prev = 0.0

    def classify(d: float) -> tuple[float, int] | None:
        nonlocal neg
        if not np.isfinite(d):
            raise NumericError("non-finite pivot in periodic tridiagonal factorisation")
        if abs(d) <= pivmin:
            if not zero_is_negative:
                return None
            neg += 1
            return (-pivmin, 1)
        if d < 0.0:
            neg += 1
        return (d, 0)

    res = classify(d_prev)
    if res is None:
        return None
    d_prev = res[0]
    f_prev = corner / d_prev
    border = f_prev * f_prev * d_prev

    for i in range(1, n - 1):
        ell = off[i - 1] / d_prev
        d_i = a[i] - ell * ell * d_prev
        if i < n - 2:
            f_i = -f_prev * ell * d_prev
        else:
            f_i = off[n - 2] - f_prev * ell * d_prev
        res = classify(d_i)
        if res is None:
            return None
        d_i = res[0]
        f_i = f_i / d_i
        border += f_i * f_i * d_i
        d_prev, f_prev = d_i, f_i

    d_last = a[n - 1] - border
    res = classify(d_last)
    if res is None:
        return None
    return neg


def _dense_negative_count(
    mat: np.ndarray, energy: float, pivmin: float, zero_is_negative: bool
) -> int | None:
    """Inertia via Bunch-Kaufman LDL^T of the shifted dense matrix."""
    n = mat.shape[0]
    shifted = mat - energy * np.eye(n)
    try:
        _, d, _ = scipy.linalg.ldl(shifted, lower=True)
    except Exception as exc:  # LAPACK failure surfaces as a numeric error
        raise NumericError(f"dense LDL^T factorisation failed: {exc}") from exc
    neg = 0
    i = 0
    while i < n:
        two_by_two = i + 1 < n and (d[i + 1, i] != 0.0 or d[i, i + 1] != 0.0)
        if two_by_two:
            block = np.array(
                [
                    [d[i, i], d[i, i + 1] if d[i, i + 1] != 0.0 else d[i + 1, i]],
                    [d[i + 1, i] if d[i + 1, i] != 0.0 else d[i, i + 1], d[i + 1, i + 1]],
                ]
            )
            pivots = np.linalg.eigvalsh(block)
            i += 2
        else:
            pivots = (d[i, i],)
            i += 1
        for p in pivots:
            if not np.isfinite(p):
                raise NumericError("non-finite pivot in dense LDL^T")
            if abs(p) <= pivmin:
                if not zero_is_negative:
                    return None
                neg += 1
            elif p < 0.0:
                neg += 1
    return neg


def count_at_most(H, energy: float) -> int:
    """Number of eigenvalues <= energy, via inertia of H - E*I.

    One-dimensional operators take the O(n) periodic-tridiagonal route;
    everything else is factored densely.  A zero pivot triggers a single
    retry at E + 1e-12*|H| where zero pivots count as negative.
    """
    if not np.isfinite(energy):
        raise DomainError("energy must be finite")
    scale = _operator_norm_bound(H)
    cyclic = H.cyclic_tridiagonal() if isinstance(H, AssembledOperator) else None

    if cyclic is not None:
        diag, off, corner = cyclic
        maxsq = max(1.0, float(np.max(off * off, initial=0.0)), corner * corner)
        pivmin = maxsq * 1e-290

        def attempt(e: float, zero_is_negative: bool) -> int | None:
            return _cyclic_negative_count(diag, off, corner, e, pivmin, zero_is_negative)

    else:
        if isinstance(H, AssembledOperator):
            mat = H.dense()
        elif sp.issparse(H):
            mat = H.toarray()
        else:
            mat = np.asarray(H, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ParameterError(f"expected a square matrix, got shape {mat.shape}")
        if mat.shape[0] > DENSE_LIMIT:
            raise SizeError(
                f"dense counting limited to {DENSE_LIMIT} rows, got {mat.shape[0]}; "
                "only 1-d operators have a large-volume counting path"
            )
        if not np.all(np.isfinite(mat)):
            raise NumericError("matrix has non-finite entries")
        pivmin = max(scale, 1.0) * 1e-290

        def attempt(e: float, zero_is_negative: bool) -> int | None:
            return _dense_negative_count(mat, e, pivmin, zero_is_negative)

    result = attempt(float(energy), False)
    if result is None:
        result = attempt(float(energy) + _NUDGE * max(scale, 1.0), True)
    if result is None:  # pragma: no cover - second pass never returns None
        raise NumericError("persistent zero pivot after energy nudge")
    return int(result)


def count_in(H, interval) -> int:
    """Number of eigenvalues in the half-open interval (lo, hi]."""
    iv = _as_interval(interval)
    hi = count_at_most(H, iv.hi)
    lo = count_at_most(H, iv.lo)
    return int(hi - lo)


# ---------------------------------------------------------------------------
# spectral functions
# ---------------------------------------------------------------------------


def trace_function(H, fn: Callable[[np.ndarray], np.ndarray], spectrum: Spectrum | None = None) -> float:
    """tr fn(H) through the eigenvalues (dense path)."""
    spec = spectrum if spectrum is not None else eigen_full(H, vectors=False)
    out = np.asarray(fn(spec.values), dtype=float)
    if out.shape != spec.values.shape:
        raise ParameterError("fn must map the eigenvalue array elementwise")
    return float(np.sum(out))


def local_projection_trace(
    H, interval, sites: Sequence[int] | np.ndarray, spectrum: Spectrum | None = None
) -> float:
    """tr [chi_S P_(lo,hi](H) chi_S]: the mass the spectral projection
    puts on a set of sites.  Needs eigenvectors."""
    iv = _as_interval(interval)
    if spectrum is None:
        spectrum = eigen_full(H, vectors=True)
    if spectrum.vectors is None:
        raise StateError("local projection trace needs a spectrum with eigenvectors")
    sites = np.asarray(sites)
    if sites.dtype == bool:
        sites = np.nonzero(sites)[0]
    mask = iv.contains(spectrum.values)
    if not np.any(mask):
        return 0.0
    block = spectrum.vectors[np.ix_(sites, np.nonzero(mask)[0])]
    return float(np.sum(block * block))


# ---------------------------------------------------------------------------
# resolvent blocks
# ---------------------------------------------------------------------------


def resolvent_columns(H: AssembledOperator, z: complex, columns: np.ndarray) -> np.ndarray:
    """Columns of (H - z)^{-1} with a residual check, via sparse LU."""
    if not isinstance(H, AssembledOperator):
        raise ParameterError("resolvent solves need an assembled operator")
    z = complex(z)
    if z.imag == 0.0:
        raise DomainError("resolvent energy must have a nonzero imaginary part")
    columns = np.asarray(columns, dtype=np.int64)
    n = H.n
    A = (H.matrix.astype(complex) - z * sp.identity(n, dtype=complex, format="csr")).tocsc()
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise NumericError(f"sparse LU of the shifted operator failed: {exc}") from exc
    rhs = np.zeros((n, columns.size), dtype=complex)
    rhs[columns, np.arange(columns.size)] = 1.0
    sol = lu.solve(rhs)
    residual = np.linalg.norm(A @ sol - rhs)
    if not np.isfinite(residual) or residual > _RESIDUAL_TOL * max(1.0, np.linalg.norm(rhs)):
        raise NumericError(f"resolvent solve residual {residual:.3e} exceeds tolerance")
    return sol


def _block_indices(H: AssembledOperator, site, block_side: float) -> np.ndarray:
    geom = H.geometry
    if np.ndim(site) == 0:
        coords = np.unravel_index(int(site), (geom.side,) * geom.dimension)
        center = np.asarray(coords, dtype=float)
    else:
        center = np.asarray(site, dtype=float)
    return geom.box_sites(center, block_side)


def resolvent_block_norm(
    H: AssembledOperator, z: complex, x, y, block_side: float = 1.0
) -> float:
    """Operator norm of the (x, y) unit-box block of (H - z)^{-1}.

    ``x`` and ``y`` are integer points of the torus (flat index into the
    integer lattice, or a coordinate tuple).  On the lattice the blocks
    are single sites and this is just |G(x, y; z)|.
    """
    bx = _block_indices(H, x, block_side)
    by = _block_indices(H, y, block_side)
    sol = resolvent_columns(H, z, by)
    block = sol[bx, :]
    return float(np.linalg.svd(block, compute_uv=False)[0])
