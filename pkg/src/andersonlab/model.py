"""Torus geometry, single-site disorder distributions, and sampling.

The random model lives on a d-dimensional torus of even side L.  In
lattice mode the sites are the integer points; in continuum mode the
operator is discretised on a grid of spacing h but the disorder is still
attached to the integer points.  Disorder values are a pure function of
(master seed, trial index, site index) through a counter-based
generator, so ensembles can be re-partitioned across workers without
changing a single sample.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DomainError,
    GeometryError,
    MeshError,
    ParameterError,
)

__all__ = [
    "TorusGeometry",
    "SiteDistribution",
    "DisorderRealization",
    "sample_disorder",
    "quantile_transform",
    "pin_site",
]


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusGeometry:
    """Finite box with periodic wrap on every axis.

    Parameters
    ----------
    dimension : spatial dimension d >= 1.
    side : side length L; must be a positive even integer so the box can
        be halved and subdivided consistently.
    mode : "lattice" (sites = integer points) or "continuum"
        (finite-difference grid of spacing ``mesh``).
    mesh : grid spacing h in continuum mode.  1/h must be an integer so
        grid points resolve the unit cell and the integer disorder sites
        are themselves grid points.  Ignored (fixed to 1.0) on the lattice.
    """

    dimension: int
    side: int
    mode: str = "lattice"
    mesh: float = 1.0

    def __post_init__(self) -> None:
        if not isinstance(self.dimension, (int, np.integer)) or self.dimension < 1:
            raise GeometryError(f"dimension must be a positive integer, got {self.dimension!r}")
        if not isinstance(self.side, (int, np.integer)) or self.side <= 0 or self.side % 2:
            raise GeometryError(f"side must be a positive even integer, got {self.side!r}")
        if self.mode not in ("lattice", "continuum"):
            raise GeometryError(f"mode must be 'lattice' or 'continuum', got {self.mode!r}")
        if self.mode == "lattice":
            if self.mesh != 1.0:
                raise MeshError("lattice mode fixes mesh = 1.0")
        else:
            if not (0.0 < self.mesh <= 1.0):
                raise MeshError(f"continuum mesh must lie in (0, 1], got {self.mesh}")
            ppu = 1.0 / self.mesh
            if abs(ppu - round(ppu)) > 1e-9:
                raise MeshError(
                    f"1/mesh must be an integer number of points per unit length, got {ppu}"
                )

    # -- derived sizes ----------------------------------------------------

    @property
    def points_per_unit(self) -> int:
        return 1 if self.mode == "lattice" else int(round(1.0 / self.mesh))

    @property
    def grid_side(self) -> int:
        """Number of grid points along one axis."""
        return self.side * self.points_per_unit

    @property
    def n_sites(self) -> int:
        """Total number of grid points (matrix dimension)."""
        return self.grid_side**self.dimension

    @property
    def n_disorder_sites(self) -> int:
        """Number of integer points carrying a random coupling."""
        return self.side**self.dimension

    @property
    def volume(self) -> float:
        """Geometric volume |box| = L^d (not the grid-point count)."""
        return float(self.side**self.dimension)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.grid_side,) * self.dimension

    # -- index helpers -----------------------------------------------------

    def site_coords(self, index: int | np.ndarray) -> np.ndarray:
        """Grid multi-index (row-major) for a flat site index."""
        return np.stack(np.unravel_index(index, self.shape), axis=-1)

    def site_index(self, coords: Sequence[int] | np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.int64)
        wrapped = np.mod(coords, self.grid_side)
        return np.ravel_multi_index(tuple(np.moveaxis(wrapped, -1, 0)), self.shape)

    def positions(self, index: int | np.ndarray) -> np.ndarray:
        """Physical coordinates in [0, L)^d of grid points."""
        return self.site_coords(index) * self.mesh if self.mode == "continuum" else self.site_coords(index).astype(float)

    def torus_distance(self, a: int, b: int) -> float:
        """Max-norm distance on the torus between two grid points."""
        delta = np.abs(self.positions(a) - self.positions(b))
        delta = np.minimum(delta, self.side - delta)
        return float(np.max(delta))

    def box_sites(self, center: Sequence[float], side: float) -> np.ndarray:
        """Flat indices of grid points in the half-open box of given side
        centred at ``center``, wrapped around the torus."""
        if side <= 0 or side > self.side:
            raise GeometryError(f"box side must lie in (0, L], got {side}")
        center = np.asarray(center, dtype=float)
        if center.shape != (self.dimension,):
            raise GeometryError("box center must have one coordinate per axis")
        axes = []
        n, L = self.grid_side, float(self.side)
        for c in center:
            x = np.arange(n) * self.mesh
            delta = np.mod(x - (c - side / 2.0), L)
            axes.append(np.nonzero(delta < side - 1e-12)[0])
        grids = np.meshgrid(*axes, indexing="ij")
        return np.ravel_multi_index(tuple(g.ravel() for g in grids), self.shape)

    def neighbor_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """All ordered nearest-neighbour pairs (i, j) with wrap, each
        undirected edge appearing twice (once per direction)."""
        idx = np.arange(self.n_sites).reshape(self.shape)
        rows, cols = [], []
        for axis in range(self.dimension):
            nxt = np.roll(idx, -1, axis=axis)
            rows.append(idx.ravel())
            cols.append(nxt.ravel())
            rows.append(nxt.ravel())
            cols.append(idx.ravel())
        return np.concatenate(rows), np.concatenate(cols)

    def describe(self) -> dict:
        return {
            "mode": self.mode,
            "dimension": int(self.dimension),
            "side": int(self.side),
            "mesh": float(self.mesh),
        }


# ---------------------------------------------------------------------------
# single-site distribution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SiteDistribution:
    """Law of a single random coupling, as ``coupling * X`` where X has an
    atomless density on [0, support_max].

    Two kinds are supported:

    * ``"uniform_like"`` -- piecewise-constant density on [0, support_max]
      with values in [density_floor, density_ceiling], floor > 0.  The
      plain uniform law is the single-piece special case.
    * ``"quantile_table"`` -- general atomless law given by a strictly
      increasing piecewise-linear quantile function with q(0) = 0 and
      q(1) = support_max.

    The left endpoint of the support is pinned at zero in both kinds, so
    the bottom of the spectrum of the unperturbed operator is not shifted.
    """

    kind: str
    support_max: float
    coupling: float = 1.0
    breaks: tuple[float, ...] = field(default=())
    densities: tuple[float, ...] = field(default=())
    quantile_u: tuple[float, ...] = field(default=())
    quantile_q: tuple[float, ...] = field(default=())

    # -- constructors -------------------------------------------------------

    @staticmethod
    def uniform(support_max: float = 1.0, coupling: float = 1.0) -> "SiteDistribution":
        return SiteDistribution.uniform_like(
            breaks=(0.0, float(support_max)),
            densities=(1.0 / float(support_max),),
            coupling=coupling,
        )

    @staticmethod
    def uniform_like(
        breaks: Iterable[float], densities: Iterable[float], coupling: float = 1.0
    ) -> "SiteDistribution":
        breaks = tuple(float(b) for b in breaks)
        densities = tuple(float(r) for r in densities)
        return SiteDistribution(
            kind="uniform_like",
            support_max=breaks[-1] if breaks else 0.0,
            coupling=float(coupling),
            breaks=breaks,
            densities=densities,
        )

    @staticmethod
    def from_quantile_table(
        u: Iterable[float], q: Iterable[float], coupling: float = 1.0
    ) -> "SiteDistribution":
        u = tuple(float(x) for x in u)
        q = tuple(float(x) for x in q)
        return SiteDistribution(
            kind="quantile_table",
            support_max=q[-1] if q else 0.0,
            coupling=float(coupling),
            quantile_u=u,
            quantile_q=q,
        )

    # -- validation ----------------------------------------------------------

    def __post_init__(self) -> None:
        if self.kind not in ("uniform_like", "quantile_table"):
            raise ParameterError(f"unknown distribution kind {self.kind!r}")
        if not np.isfinite(self.coupling) or self.coupling < 0.0:
            raise ParameterError(f"coupling must be finite and >= 0, got {self.coupling}")
        if self.support_max <= 0.0:
            raise ParameterError("support_max must be positive")
        if self.kind == "uniform_like":
            b = np.asarray(self.breaks, dtype=float)
            r = np.asarray(self.densities, dtype=float)
            if b.size < 2 or r.size != b.size - 1:
                raise ParameterError("need k+1 breakpoints for k density pieces")
            if b[0] != 0.0:
                raise ParameterError("density support must start at 0")
            if np.any(np.diff(b) <= 0):
                raise ParameterError("breakpoints must be strictly increasing")
            if np.any(r <= 0.0):
                raise ParameterError("uniform-like density must have a positive floor")
            mass = float(np.sum(r * np.diff(b)))
            if abs(mass - 1.0) > 1e-9:
                raise ParameterError(f"density must integrate to 1, got {mass}")
        else:
            u = np.asarray(self.quantile_u, dtype=float)
            q = np.asarray(self.quantile_q, dtype=float)
            if u.size < 2 or u.size != q.size:
                raise ParameterError("quantile table needs matching u and q grids")
            if u[0] != 0.0 or u[-1] != 1.0 or np.any(np.diff(u) <= 0):
                raise ParameterError("u grid must increase strictly from 0 to 1")
            if q[0] != 0.0 or np.any(np.diff(q) <= 0):
                raise ParameterError(
                    "quantile values must increase strictly from 0 (atomless law)"
                )

    # -- density bounds -----------------------------------------------------

    @property
    def density_floor(self) -> float:
        """ess-inf of the density of X (before coupling)."""
        if self.kind == "uniform_like":
            return float(min(self.densities))
        du = np.diff(np.asarray(self.quantile_u))
        dq = np.diff(np.asarray(self.quantile_q))
        return float(np.min(du / dq))

    @property
    def density_ceiling(self) -> float:
        """ess-sup of the density of X (before coupling)."""
        if self.kind == "uniform_like":
            return float(max(self.densities))
        du = np.diff(np.asarray(self.quantile_u))
        dq = np.diff(np.asarray(self.quantile_q))
        return float(np.max(du / dq))

    @property
    def density_sup(self) -> float:
        """ess-sup of the density of the actual coupling * X law."""
        if self.coupling == 0.0:
            raise DomainError("degenerate law (coupling 0) has no density bound")
        return self.density_ceiling / self.coupling

    @property
    def density_inf(self) -> float:
        if self.coupling == 0.0:
            raise DomainError("degenerate law (coupling 0) has no density bound")
        return self.density_floor / self.coupling

    @property
    def sample_max(self) -> float:
        """Largest attainable coupling value."""
        return self.coupling * self.support_max

    def concentration(self, width: float) -> float:
        """Upper bound on sup_a P{coupling*X in (a, a+width]}.

        For a law with bounded density this is density_sup * width, the
        quantity entering the one-site averaging and counting bounds.
        """
        if width < 0:
            raise ParameterError("width must be nonnegative")
        return self.density_sup * float(width)

    # -- sampling -------------------------------------------------------------

    def quantile(self, u: np.ndarray | float) -> np.ndarray:
        """Quantile (inverse distribution) function of X, before coupling."""
        u_arr = np.asarray(u, dtype=float)
        if np.any(u_arr < 0.0) or np.any(u_arr > 1.0):
            raise DomainError("quantile argument must lie in [0, 1]")
        if self.kind == "uniform_like":
            b = np.asarray(self.breaks)
            r = np.asarray(self.densities)
            cdf = np.concatenate(([0.0], np.cumsum(r * np.diff(b))))
            cdf[-1] = 1.0  # guard the last knot against round-off
            out = np.interp(u_arr, cdf, b)
        else:
            out = np.interp(u_arr, np.asarray(self.quantile_u), np.asarray(self.quantile_q))
        return out

    def describe(self) -> dict:
        d = {"kind": self.kind, "support_max": self.support_max, "coupling": self.coupling}
        if self.kind == "uniform_like":
            d["breaks"] = list(self.breaks)
            d["densities"] = list(self.densities)
        else:
            d["quantile_u"] = list(self.quantile_u)
            d["quantile_q"] = list(self.quantile_q)
        return d


def quantile_transform(dist: SiteDistribution, u: np.ndarray | float) -> np.ndarray:
    """Map uniform variates through the law, including the coupling factor."""
    return dist.coupling * dist.quantile(u)


# ---------------------------------------------------------------------------
# disorder sampling
# ---------------------------------------------------------------------------

_MASK32 = (1 << 32) - 1
_MASK64 = (1 << 64) - 1


def _philox_key(master_seed: int, trial: int, stream: int) -> np.ndarray:
    """128-bit counter-generator key: (seed | trial | stream) packed into
    two 64-bit words.  Distinct (trial, stream) pairs get distinct keys,
    which is what makes sub-ensembles independent and embarrassingly
    parallel."""
    if not 0 <= master_seed <= _MASK64:
        raise ParameterError("master_seed must fit in 64 bits")
    if not 0 <= trial <= _MASK32:
        raise ParameterError("trial index must fit in 32 bits")
    if not 0 <= stream <= _MASK32:
        raise ParameterError("stream index must fit in 32 bits")
    return np.array([master_seed, (trial << 32) | stream], dtype=np.uint64)


@dataclass(frozen=True)
class DisorderRealization:
    """One sampled coupling field on the integer points of the torus.

    ``values`` is flat, row-major over the integer lattice [0, L)^d,
    regardless of mode; in continuum mode the grid is finer but the
    couplings still sit at integer points.
    """

    geometry: TorusGeometry
    values: np.ndarray
    master_seed: int
    trial: int
    stream: int = 0
    pinned: tuple[tuple[int, float], ...] = ()
    # largest realizable coupling (None for hand-built fields)
    distribution_max: float | None = None

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.geometry.n_disorder_sites,):
            raise GeometryError(
                f"expected {self.geometry.n_disorder_sites} couplings, got shape {vals.shape}"
            )
        object.__setattr__(self, "values", vals)
        self.values.setflags(write=False)

    @property
    def lattice_shape(self) -> tuple[int, ...]:
        return (self.geometry.side,) * self.geometry.dimension

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.geometry.describe()).encode())
        h.update(np.ascontiguousarray(self.values).tobytes())
        return h.hexdigest()

    def restrict(self, corner: Sequence[int], side: int) -> "DisorderRealization":
        """Couplings of the sub-box [corner, corner+side)^d (with wrap) as a
        realization on the smaller torus.  Disjoint sub-boxes carry disjoint
        subsets of the per-site samples, hence independent fields."""
        if side <= 0 or side % 2 or side > self.geometry.side:
            raise GeometryError(f"sub-box side must be even and <= L, got {side}")
        sub_geom = TorusGeometry(
            self.geometry.dimension, side, self.geometry.mode, self.geometry.mesh
        )
        corner = np.asarray(corner, dtype=np.int64)
        big = self.values.reshape(self.lattice_shape)
        slices_idx = np.ix_(
            *[
                np.mod(corner[axis] + np.arange(side), self.geometry.side)
                for axis in range(self.geometry.dimension)
            ]
        )
        return DisorderRealization(
            geometry=sub_geom,
            values=big[slices_idx].ravel(),
            master_seed=self.master_seed,
            trial=self.trial,
            stream=self.stream,
            pinned=self.pinned,
            distribution_max=self.distribution_max,
        )


def sample_disorder(
    dist: SiteDistribution,
    geometry: TorusGeometry,
    master_seed: int,
    trial: int,
    stream: int = 0,
) -> DisorderRealization:
    """Draw the coupling field for one trial.

    The value at site index j is a pure function of
    (master_seed, trial, stream, j): a Philox generator keyed by the
    first three produces the uniform variates in site order, and the
    quantile map sends them through the law.
    """
    key = _philox_key(master_seed, trial, stream)
    gen = np.random.Generator(np.random.Philox(key=key))
    u = gen.random(geometry.n_disorder_sites)
    values = dist.coupling * dist.quantile(u)
    return DisorderRealization(
        geometry=geometry,
        values=values,
        master_seed=master_seed,
        trial=trial,
        stream=stream,
        distribution_max=dist.sample_max,
    )


def pin_site(
    realization: DisorderRealization, site: int | Sequence[int], value: float
) -> DisorderRealization:
    """Return a copy of the field with one coupling replaced by ``value``.

    ``site`` is either a flat index into the integer lattice or a
    coordinate tuple.  Used for the conditioned (one coupling frozen)
    ensembles and for spectral-shift pairs.  The pinned value must be a
    realizable coupling, i.e. lie in [0, coupling * support_max].
    """
    if not np.isfinite(value):
        raise ParameterError("pinned value must be finite")
    top = realization.distribution_max
    if value < 0.0 or (top is not None and value > top + 1e-12):
        raise ParameterError(
            f"pinned value {value} outside the coupling range [0, {top}]"
        )
    geom = realization.geometry
    if np.ndim(site) == 0:
        flat = int(site)
        if not 0 <= flat < geom.n_disorder_sites:
            raise ParameterError(f"site index {flat} out of range")
    else:
        coords = np.mod(np.asarray(site, dtype=np.int64), geom.side)
        flat = int(np.ravel_multi_index(tuple(coords), (geom.side,) * geom.dimension))
    values = realization.values.copy()
    values[flat] = value
    return DisorderRealization(
        geometry=geom,
        values=values,
        master_seed=realization.master_seed,
        trial=realization.trial,
        stream=realization.stream,
        pinned=realization.pinned + ((flat, float(value)),),
        distribution_max=realization.distribution_max,
    )
