"""Assembly of finite-volume random Schroedinger operators.

Both flavours share the torus geometry from :mod:`andersonlab.model`:

* lattice: H = (discrete Laplacian) + diag(couplings), i.e. diagonal
  2d + omega_i and -1 on nearest-neighbour pairs with periodic wrap, so
  the unperturbed spectrum starts at 0.
* continuum (finite differences): diagonal 2d/h^2 + V_per(x) + disorder,
  off-diagonal -1/h^2, where the disorder is a sum of scaled copies of a
  normalised single-site bump placed at the integer points and wrapped
  around the torus.

Operators are immutable once assembled; the rank-one and bump helpers
return new instances.
"""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, GeometryError, ParameterError
from .model import DisorderRealization, SiteDistribution, TorusGeometry, sample_disorder

__all__ = [
    "SingleSiteProfile",
    "AssembledOperator",
    "ModelSpec",
    "build_lattice",
    "build_continuum",
    "add_rank_one",
    "add_scaled_profile",
    "write_coordinate_file",
]


# ---------------------------------------------------------------------------
# single-site profile
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SingleSiteProfile:
    """Normalised bump 0 <= u <= 1 supported in the half-open box of side
    delta_plus around the origin, with u >= floor on the inner box of side
    delta_minus and sup u = 1.

    Shapes:

    * "plateau": the indicator of the support box (floor attained with
      value 1 everywhere on it).
    * "tent": 1 at the origin, decaying linearly in the max-norm to 0 at
      the support boundary.  Requires floor <= 1 - delta_minus/delta_plus
      so the inner-box guarantee actually holds.
    """

    delta_minus: float
    delta_plus: float
    floor: float = 1.0
    shape: str = "plateau"

    def __post_init__(self) -> None:
        if not (0.0 < self.delta_minus <= self.delta_plus):
            raise ParameterError("need 0 < delta_minus <= delta_plus")
        if not (0.0 < self.floor <= 1.0):
            raise ParameterError("floor must lie in (0, 1]")
        if self.shape not in ("plateau", "tent"):
            raise ParameterError(f"unknown profile shape {self.shape!r}")
        if self.shape == "tent" and self.floor > 1.0 - self.delta_minus / self.delta_plus + 1e-12:
            raise ParameterError(
                "tent cannot reach the floor on the inner box; "
                "need floor <= 1 - delta_minus/delta_plus"
            )

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Profile values at offsets from the bump centre, shape (n, d)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        half = self.delta_plus / 2.0
        inside = np.all((pts >= -half) & (pts < half), axis=1)
        if self.shape == "plateau":
            return inside.astype(float)
        radial = np.max(np.abs(pts), axis=1)
        return np.where(inside, np.maximum(1.0 - radial / half, 0.0), 0.0)

    def overlap_bound(self, dimension: int) -> float:
        """Closed-form bound on the sup of the summed translates."""
        return max(1.0, self.delta_plus**dimension)

    def describe(self) -> dict:
        return {
            "delta_minus": self.delta_minus,
            "delta_plus": self.delta_plus,
            "floor": self.floor,
            "shape": self.shape,
        }


# ---------------------------------------------------------------------------
# assembled operator
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class AssembledOperator:
    """Sparse symmetric finite-volume Hamiltonian plus its provenance."""

    geometry: TorusGeometry
    matrix: sp.csr_matrix
    kind: str
    realization_hash: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def content_hash(self) -> str:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        h = hashlib.sha256()
        h.update(np.asarray(self.matrix.shape, dtype=np.int64).tobytes())
        h.update(coo.row[order].astype(np.int64).tobytes())
        h.update(coo.col[order].astype(np.int64).tobytes())
        h.update(coo.data[order].astype(np.float64).tobytes())
        return h.hexdigest()

    def cyclic_tridiagonal(self) -> tuple[np.ndarray, np.ndarray, float] | None:
        """(diagonal, sub-diagonal, corner) if the matrix is 1-d periodic
        tridiagonal with n >= 4, else None.  This is the O(n) counting path."""
        if self.geometry.dimension != 1 or self.n < 4:
            return None
        m = self.matrix.tocoo()
        n = self.n
        diag = np.zeros(n)
        off = np.zeros(n - 1)
        corner = 0.0
        for i, j, v in zip(m.row, m.col, m.data):
            if i == j:
                diag[i] = v
            elif j == i + 1:
                off[i] = v
            elif i == j + 1:
                off[j] = v
            elif (i, j) in ((0, n - 1), (n - 1, 0)):
                corner = v
            elif v != 0.0:
                return None
        return diag, off, corner


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def _check_realization(geometry: TorusGeometry, realization: DisorderRealization) -> None:
    g = realization.geometry
    if (g.dimension, g.side, g.mode) != (geometry.dimension, geometry.side, geometry.mode):
        raise AssemblyError(
            f"realization geometry {g.describe()} does not match target {geometry.describe()}"
        )
    if not np.all(np.isfinite(realization.values)):
        raise AssemblyError("couplings must be finite")


def build_lattice(geometry: TorusGeometry, realization: DisorderRealization) -> AssembledOperator:
    """Lattice Hamiltonian: kinetic part with inf spec = 0 plus the
    diagonal coupling field."""
    if geometry.mode != "lattice":
        raise AssemblyError("build_lattice requires a lattice-mode geometry")
    _check_realization(geometry, realization)
    n = geometry.n_sites
    rows, cols = geometry.neighbor_pairs()
    data = np.full(rows.shape, -1.0)
    drow = np.arange(n)
    diag = 2.0 * geometry.dimension + realization.values
    mat = sp.coo_matrix(
        (
            np.concatenate([data, diag]),
            (np.concatenate([rows, drow]), np.concatenate([cols, drow])),
        ),
        shape=(n, n),
    ).tocsr()
    mat.sum_duplicates()
    return AssembledOperator(
        geometry=geometry,
        matrix=mat,
        kind="lattice",
        realization_hash=realization.content_hash(),
        meta={"coupling_max": float(np.max(realization.values, initial=0.0))},
    )


def _profile_stencil(
    profile: SingleSiteProfile, geometry: TorusGeometry
) -> tuple[np.ndarray, np.ndarray]:
    """Offsets (grid steps) and values of the bump around its centre."""
    ppu = geometry.points_per_unit
    half = profile.delta_plus / 2.0
    lo = int(np.ceil(-half * ppu - 1e-12))
    hi = int(np.ceil(half * ppu - 1e-12))  # exclusive, half-open on the right
    steps = np.arange(lo, hi)
    offsets = np.array(list(itertools.product(steps, repeat=geometry.dimension)), dtype=np.int64)
    values = profile.evaluate(offsets * geometry.mesh)
    keep = values > 0.0
    return offsets[keep], values[keep]


def _disorder_field(
    geometry: TorusGeometry,
    profile: SingleSiteProfile,
    weights: np.ndarray,
) -> np.ndarray:
    """Sum of weighted bump translates centred at the integer points,
    evaluated on the grid (flat, row-major)."""
    ppu = geometry.points_per_unit
    ngrid = geometry.grid_side
    offsets, values = _profile_stencil(profile, geometry)
    centers = np.array(
        list(itertools.product(range(geometry.side), repeat=geometry.dimension)),
        dtype=np.int64,
    )
    out = np.zeros(geometry.shape)
    flat = out.ravel()
    for off, val in zip(offsets, values):
        pts = np.mod(centers * ppu + off, ngrid)
        idx = np.ravel_multi_index(tuple(pts.T), geometry.shape)
        np.add.at(flat, idx, weights * val)
    return flat


def build_continuum(
    geometry: TorusGeometry,
    realization: DisorderRealization,
    profile: SingleSiteProfile,
    periodic_potential: np.ndarray | None = None,
) -> AssembledOperator:
    """Finite-difference continuum Hamiltonian.

    ``periodic_potential`` is a table over one unit cell with
    ``points_per_unit`` entries per axis; it tiles the torus exactly.
    The bump supports wrap around the torus, so the support side must be
    smaller than the box.
    """
    if geometry.mode != "continuum":
        raise AssemblyError("build_continuum requires a continuum-mode geometry")
    _check_realization(geometry, realization)
    if profile.delta_plus >= geometry.side:
        raise AssemblyError("bump support must be smaller than the box side")
    n = geometry.n_sites
    h = geometry.mesh
    rows, cols = geometry.neighbor_pairs()
    data = np.full(rows.shape, -1.0 / h**2)
    diag = np.full(n, 2.0 * geometry.dimension / h**2)

    if periodic_potential is not None:
        ppu = geometry.points_per_unit
        table = np.asarray(periodic_potential, dtype=float)
        if table.shape != (ppu,) * geometry.dimension:
            raise AssemblyError(
                f"periodic potential table must have shape {(ppu,) * geometry.dimension}, "
                f"got {table.shape}"
            )
        if not np.all(np.isfinite(table)):
            raise AssemblyError("periodic potential must be finite")
        reps = (geometry.side,) * geometry.dimension
        diag = diag + np.tile(table, reps).ravel()

    disorder = _disorder_field(geometry, profile, realization.values)
    diag = diag + disorder

    # sup of the summed translates with unit weights: the constant that
    # scales the one-site shift bounds for this discretisation
    overlap = _disorder_field(geometry, profile, np.ones(geometry.n_disorder_sites))
    drow = np.arange(n)
    mat = sp.coo_matrix(
        (
            np.concatenate([data, diag]),
            (np.concatenate([rows, drow]), np.concatenate([cols, drow])),
        ),
        shape=(n, n),
    ).tocsr()
    mat.sum_duplicates()
    return AssembledOperator(
        geometry=geometry,
        matrix=mat,
        kind="continuum",
        realization_hash=realization.content_hash(),
        meta={
            "profile": profile.describe(),
            "overlap_sup": float(np.max(overlap)),
            "overlap_bound": profile.overlap_bound(geometry.dimension),
            "has_periodic_potential": periodic_potential is not None,
        },
    )


# ---------------------------------------------------------------------------
# perturbations
# ---------------------------------------------------------------------------


def _with_diagonal_shift(op: AssembledOperator, shift: np.ndarray, note: dict) -> AssembledOperator:
    mat = (op.matrix + sp.diags(shift)).tocsr()
    meta = dict(op.meta)
    meta.setdefault("perturbations", [])
    meta["perturbations"] = list(meta["perturbations"]) + [note]
    return AssembledOperator(
        geometry=op.geometry,
        matrix=mat,
        kind=op.kind,
        realization_hash=op.realization_hash,
        meta=meta,
    )


def add_rank_one(op: AssembledOperator, site: int, t: float) -> AssembledOperator:
    """New operator H + t * (projector onto the site delta function)."""
    if not np.isfinite(t):
        raise ParameterError("rank-one coupling must be finite")
    if not 0 <= site < op.n:
        raise ParameterError(f"site {site} out of range for n={op.n}")
    shift = np.zeros(op.n)
    shift[site] = t
    return _with_diagonal_shift(op, shift, {"kind": "rank_one", "site": int(site), "t": float(t)})


def add_scaled_profile(
    op: AssembledOperator, profile: SingleSiteProfile, center: Sequence[int], t: float
) -> AssembledOperator:
    """New operator H + t * u(. - center) for a bump centred at an integer
    point of the continuum torus (multi-dimensional diagonal update)."""
    if op.kind != "continuum":
        raise AssemblyError("scaled-profile perturbations apply to continuum operators")
    if not np.isfinite(t):
        raise ParameterError("bump coupling must be finite")
    geom = op.geometry
    center = np.mod(np.atleast_1d(np.asarray(center, dtype=np.int64)), geom.side)
    if center.shape != (geom.dimension,):
        raise ParameterError("center must have one integer coordinate per axis")
    weights = np.zeros(geom.n_disorder_sites)
    flat = int(np.ravel_multi_index(tuple(center), (geom.side,) * geom.dimension))
    weights[flat] = t
    shift = _disorder_field(geom, profile, weights)
    return _with_diagonal_shift(
        op, shift, {"kind": "scaled_profile", "center": center.tolist(), "t": float(t)}
    )


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def write_coordinate_file(op: AssembledOperator, fh: IO[str]) -> None:
    """Plain (row, col, value) text dump, sorted by (row, col); stable
    shortest round-trip float formatting so identical operators produce
    identical bytes."""
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for i in order:
        fh.write(f"{coo.row[i]} {coo.col[i]} {coo.data[i]!r}\n")


# ---------------------------------------------------------------------------
# model spec: geometry + law + profile bundled for the experiment drivers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to draw one finite-volume operator.

    This is the unit the ensemble drivers pass around (and pickle to
    worker processes): mode, dimension, side, law of the couplings, and
    for continuum mode the mesh, the bump, and an optional periodic
    background table (stored flattened with its shape so instances stay
    hashable).
    """

    mode: str
    dimension: int
    side: int
    distribution: SiteDistribution
    mesh: float = 1.0
    profile: SingleSiteProfile | None = None
    periodic_values: tuple[float, ...] | None = None
    periodic_shape: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.mode == "continuum" and self.profile is None:
            raise ParameterError("continuum models need a single-site profile")
        if (self.periodic_values is None) != (self.periodic_shape is None):
            raise ParameterError("periodic table needs both values and shape")
        # fail fast on bad geometry
        self.geometry()

    @staticmethod
    def lattice(dimension: int, side: int, distribution: SiteDistribution) -> "ModelSpec":
        return ModelSpec(mode="lattice", dimension=dimension, side=side, distribution=distribution)

    @staticmethod
    def continuum(
        dimension: int,
        side: int,
        mesh: float,
        distribution: SiteDistribution,
        profile: SingleSiteProfile,
        periodic_potential: np.ndarray | None = None,
    ) -> "ModelSpec":
        values = shape = None
        if periodic_potential is not None:
            arr = np.asarray(periodic_potential, dtype=float)
            values = tuple(arr.ravel().tolist())
            shape = arr.shape
        return ModelSpec(
            mode="continuum",
            dimension=dimension,
            side=side,
            mesh=mesh,
            distribution=distribution,
            profile=profile,
            periodic_values=values,
            periodic_shape=shape,
        )

    def geometry(self, side: int | None = None) -> TorusGeometry:
        return TorusGeometry(self.dimension, side or self.side, self.mode, self.mesh)

    def with_side(self, side: int) -> "ModelSpec":
        if side == self.side:
            return self
        return ModelSpec(
            mode=self.mode,
            dimension=self.dimension,
            side=int(side),
            distribution=self.distribution,
            mesh=self.mesh,
            profile=self.profile,
            periodic_values=self.periodic_values,
            periodic_shape=self.periodic_shape,
        )

    def periodic_table(self) -> np.ndarray | None:
        if self.periodic_values is None:
            return None
        return np.asarray(self.periodic_values, dtype=float).reshape(self.periodic_shape)

    def realization(
        self, master_seed: int, trial: int, stream: int = 0, side: int | None = None
    ) -> DisorderRealization:
        return sample_disorder(self.distribution, self.geometry(side), master_seed, trial, stream)

    def build(
        self,
        master_seed: int,
        trial: int,
        stream: int = 0,
        side: int | None = None,
    ) -> AssembledOperator:
        realization = self.realization(master_seed, trial, stream, side)
        return self.assemble(realization)

    def assemble(self, realization: DisorderRealization) -> AssembledOperator:
        if self.mode == "lattice":
            return build_lattice(realization.geometry, realization)
        return build_continuum(
            realization.geometry, realization, self.profile, self.periodic_table()
        )

    def describe(self) -> dict:
        d = {
            "mode": self.mode,
            "dimension": self.dimension,
            "side": self.side,
            "mesh": self.mesh,
            "distribution": self.distribution.describe(),
        }
        if self.profile is not None:
            d["profile"] = self.profile.describe()
        if self.periodic_shape is not None:
            d["periodic_shape"] = list(self.periodic_shape)
        return d
