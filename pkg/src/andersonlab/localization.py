"""Localization diagnostics: resolvent-moment decay and eigenfunction
statistics.

The primary tool is the fractional moment of resolvent blocks,
E |chi_x (H-z)^{-1} chi_y|^s for small s, whose exponential decay in the
separation |x-y| is the standard numerical certificate of localization.
The secondary tool looks at eigenvectors directly (inverse
participation ratios and envelope decay).  The gate combines the two:
downstream limit-statistics runs refuse to label their output unless the
gate passes.

The exponential fits are deliberately simple (straight line in log
scale).  In weak-disorder regimes the truth may be closer to a
stretched exponential; the R^2 column is reported so such misfits are
visible rather than silently absorbed.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .errors import DomainError, ParameterError
from .estimates import mean_and_stderr, run_trials
from .operators import ModelSpec
from .spectral import eigen_full, resolvent_columns

__all__ = [
    "DecayCurve",
    "EigenfunctionReport",
    "GateReport",
    "fractional_moment_decay",
    "eigenfunction_decay",
    "localization_gate",
]


# ---------------------------------------------------------------------------
# exponential fit helper
# ---------------------------------------------------------------------------


def _fit_log_linear(
    x: np.ndarray, means: np.ndarray, stderrs: np.ndarray
) -> tuple[float, float, float]:
    """Fit log(mean) = a - rate * x.

    Returns (rate, rate_stderr, r_squared).  The slope uncertainty is the
    larger of the residual-based least-squares value and the Monte Carlo
    uncertainty propagated through the fit weights, so a deterministic
    ensemble (zero stderr) still gets an honest error bar from scatter.
    """
    y = np.log(means)
    n = x.size
    if n < 3:
        raise ParameterError("need at least three separations for a decay fit")
    xbar = x.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    slope = float(np.sum((x - xbar) * (y - y.mean())) / sxx)
    resid = y - (y.mean() + slope * (x - xbar))
    resid_var = float(np.sum(resid**2)) / (n - 2)
    se_resid = math.sqrt(resid_var / sxx)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_sig = np.where(means > 0, stderrs / means, 0.0)
    weights = (x - xbar) / sxx
    se_mc = math.sqrt(float(np.sum((weights * log_sig) ** 2)))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return -slope, max(se_resid, se_mc), r2


@dataclass
class DecayCurve:
    separations: np.ndarray
    moments: np.ndarray
    stderrs: np.ndarray
    rate: float
    rate_stderr: float
    r_squared: float
    localized: bool
    params: dict = field(default_factory=dict)

    def csv_bytes(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["separation", "moment", "stderr"])
        for r, m, s in zip(self.separations, self.moments, self.stderrs):
            writer.writerow([int(r), repr(float(m)), repr(float(s))])
        return buf.getvalue().encode()

    def to_json_dict(self) -> dict:
        return {
            "separations": [int(r) for r in self.separations],
            "moments": [float(m) for m in self.moments],
            "stderrs": [float(s) for s in self.stderrs],
            "rate": self.rate,
            "rate_stderr": self.rate_stderr,
            "r_squared": self.r_squared,
            "localized": self.localized,
            "params": self.params,
        }


# ---------------------------------------------------------------------------
# fractional moments of resolvent blocks
# ---------------------------------------------------------------------------


def _moment_trial(
    trial: int,
    model: ModelSpec,
    side: int,
    energy: float,
    eta: float,
    s: float,
    separations: tuple,
    bases: tuple,
    axis: int,
    seed: int,
) -> list[float]:
    op = model.build(seed, trial, side=side)
    geom = op.geometry
    lat_shape = (geom.side,) * geom.dimension

    def block(point_coords):
        return geom.box_sites(np.asarray(point_coords, dtype=float), 1.0)

    pairs = []
    targets = []
    for base in bases:
        base_coords = np.unravel_index(base, lat_shape)
        for r in separations:
            tgt = list(base_coords)
            tgt[axis] = (tgt[axis] + r) % geom.side
            pairs.append((block(base_coords), len(targets)))
            targets.append(block(tgt))
    cols = np.concatenate(targets)
    col_offsets = np.cumsum([0] + [t.size for t in targets])
    sol = resolvent_columns(op, complex(energy, eta), cols)

    values = np.empty((len(bases), len(separations)))
    k = 0
    for b_idx in range(len(bases)):
        for r_idx in range(len(separations)):
            rows_idx, t_idx = pairs[k]
            blockmat = sol[rows_idx, col_offsets[t_idx] : col_offsets[t_idx + 1]]
            norm = float(np.linalg.svd(blockmat, compute_uv=False)[0])
            values[b_idx, r_idx] = norm**s
            k += 1
    return values.mean(axis=0).tolist()


def fractional_moment_decay(
    model: ModelSpec,
    energy: float,
    separations,
    trials: int,
    master_seed: int,
    s: float = 0.2,
    eta: float = 1e-3,
    offsets: int = 4,
    base_offset: int = 0,
    axis: int = 0,
    side: int | None = None,
    workers: int = 1,
    rate_sigmas: float = 3.0,
    min_r_squared: float = 0.9,
    min_rate: float | None = None,
) -> DecayCurve:
    """Translation-averaged fractional moments of unit-box resolvent
    blocks at increasing separations, with an exponential fit.

    The exponent must stay in (0, 1/4): that is the range in which the
    moment of the resolvent block is a priori finite uniformly in the
    disorder, so the ensemble average is meaningful.

    The ``localized`` flag requires a statistically significant rate, a
    good fit, and a rate large enough to matter on this box (default
    floor 3/side, i.e. a few e-foldings across the torus): a clean
    band-interior free model can otherwise exhibit a tiny, formally
    significant slope that no one should call localization.
    """
    if not 0.0 < s < 0.25:
        raise DomainError(f"fractional exponent must lie in (0, 1/4), got {s}")
    if eta <= 0.0:
        raise DomainError("imaginary part eta must be positive")
    side = int(side or model.side)
    seps = tuple(int(r) for r in separations)
    if len(seps) < 3:
        raise ParameterError("need at least three separations to fit a rate")
    if any(r <= 0 for r in seps) or max(seps) > side // 2:
        raise ParameterError("separations must be positive and at most half the box side")
    if not 0 <= axis < model.dimension:
        raise ParameterError("separation axis outside the model dimension")
    if offsets < 1:
        raise ParameterError("need at least one base point")
    lat_n = side**model.dimension
    bases = tuple(
        int((base_offset + (k * lat_n) // offsets) % lat_n) for k in range(offsets)
    )
    worker = partial(
        _moment_trial,
        model=model,
        side=side,
        energy=float(energy),
        eta=float(eta),
        s=float(s),
        separations=seps,
        bases=bases,
        axis=axis,
        seed=master_seed,
    )
    rows = run_trials(worker, int(trials), workers)
    moments, errs = [], []
    for i in range(len(seps)):
        m, e = mean_and_stderr([r[i] for r in rows])
        moments.append(m)
        errs.append(e)
    moments_arr = np.asarray(moments)
    errs_arr = np.asarray(errs)
    rate, rate_err, r2 = _fit_log_linear(
        np.asarray(seps, dtype=float), moments_arr, errs_arr
    )
    rate_floor = 3.0 / side if min_rate is None else float(min_rate)
    localized = (
        (rate > rate_sigmas * rate_err) and (r2 >= min_r_squared) and (rate >= rate_floor)
    )
    return DecayCurve(
        separations=np.asarray(seps),
        moments=moments_arr,
        stderrs=errs_arr,
        rate=rate,
        rate_stderr=rate_err,
        r_squared=r2,
        localized=localized,
        params={
            "model": model.describe(),
            "energy": float(energy),
            "eta": float(eta),
            "s": float(s),
            "side": side,
            "trials": int(trials),
            "offsets": offsets,
            "base_offset": base_offset,
            "seed": master_seed,
            "rate_sigmas": rate_sigmas,
            "min_r_squared": min_r_squared,
            "min_rate": rate_floor,
        },
    )


# ---------------------------------------------------------------------------
# eigenfunction statistics
# ---------------------------------------------------------------------------


def _shell_distances(geom_side: int, dimension: int, center: np.ndarray) -> np.ndarray:
    axes = []
    for c in center:
        d = np.abs(np.arange(geom_side) - c)
        axes.append(np.minimum(d, geom_side - d))
    grids = np.meshgrid(*axes, indexing="ij")
    return np.maximum.reduce([g for g in grids]).ravel()


def _eigenfunction_trial(
    trial: int, model: ModelSpec, side: int, energy: float, halfwidth: float, fit_radius: int, seed: int
) -> tuple[list[float], list[float]]:
    op = model.build(seed, trial, side=side)
    spec = eigen_full(op, vectors=True)
    mask = np.abs(spec.values - energy) <= halfwidth
    iprs: list[float] = []
    rates: list[float] = []
    n_axis = op.geometry.grid_side
    for idx in np.nonzero(mask)[0]:
        v = spec.vectors[:, idx]
        iprs.append(float(np.sum(v**4)))
        center = np.asarray(np.unravel_index(int(np.argmax(np.abs(v))), op.geometry.shape))
        dist = _shell_distances(n_axis, op.geometry.dimension, center)
        radii = np.arange(1, fit_radius + 1)
        env = np.array(
            [np.max(np.abs(v)[dist == r], initial=0.0) for r in radii]
        )
        good = env > 0
        if np.count_nonzero(good) >= 3:
            slope = np.polyfit(radii[good], np.log(env[good]), 1)[0]
            rates.append(float(-slope))
    return iprs, rates


@dataclass
class EigenfunctionReport:
    ipr_values: np.ndarray
    decay_rates: np.ndarray
    n_states: int
    median_ipr: float
    median_rate: float
    params: dict = field(default_factory=dict)


def eigenfunction_decay(
    model: ModelSpec,
    energy: float,
    trials: int,
    master_seed: int,
    halfwidth: float = 0.1,
    fit_radius: int | None = None,
    side: int | None = None,
    workers: int = 1,
) -> EigenfunctionReport:
    """Inverse participation ratios and envelope decay rates of the
    eigenvectors with eigenvalue within ``halfwidth`` of ``energy``."""
    if halfwidth <= 0:
        raise ParameterError("halfwidth must be positive")
    side = int(side or model.side)
    grid_side = model.geometry(side).grid_side
    radius = int(fit_radius) if fit_radius is not None else min(grid_side // 4, 64)
    if radius < 3:
        raise ParameterError("box too small for an envelope fit")
    worker = partial(
        _eigenfunction_trial,
        model=model,
        side=side,
        energy=float(energy),
        halfwidth=float(halfwidth),
        fit_radius=radius,
        seed=master_seed,
    )
    rows = run_trials(worker, int(trials), workers)
    iprs = np.array([x for r in rows for x in r[0]], dtype=float)
    rates = np.array([x for r in rows for x in r[1]], dtype=float)
    return EigenfunctionReport(
        ipr_values=iprs,
        decay_rates=rates,
        n_states=int(iprs.size),
        median_ipr=float(np.median(iprs)) if iprs.size else math.nan,
        median_rate=float(np.median(rates)) if rates.size else math.nan,
        params={
            "model": model.describe(),
            "energy": float(energy),
            "halfwidth": float(halfwidth),
            "side": side,
            "trials": int(trials),
            "fit_radius": radius,
            "seed": master_seed,
        },
    )


# ---------------------------------------------------------------------------
# gate
# ---------------------------------------------------------------------------


@dataclass
class GateReport:
    passed: bool
    energy: float
    moment_curve: DecayCurve
    median_ipr: float
    ipr_threshold: float
    n_states: int

    def to_json_dict(self) -> dict:
        return {
            "passed": self.passed,
            "energy": self.energy,
            "moment_curve": self.moment_curve.to_json_dict(),
            "median_ipr": self.median_ipr,
            "ipr_threshold": self.ipr_threshold,
            "n_states": self.n_states,
        }


def localization_gate(
    model: ModelSpec,
    energy: float,
    master_seed: int,
    s: float = 0.2,
    eta: float = 1e-3,
    separations=(4, 8, 16, 32),
    moment_trials: int = 200,
    ipr_trials: int = 60,
    ipr_halfwidth: float = 0.1,
    ipr_threshold: float = 0.1,
    side: int | None = None,
    workers: int = 1,
) -> GateReport:
    """Combined verdict: exponential moment decay (rate positive at three
    sigma with a good fit) and concentrated eigenfunctions (median IPR
    above threshold).  Both must hold."""
    curve = fractional_moment_decay(
        model,
        energy,
        separations,
        moment_trials,
        master_seed,
        s=s,
        eta=eta,
        side=side,
        workers=workers,
    )
    efr = eigenfunction_decay(
        model,
        energy,
        ipr_trials,
        master_seed + 1,
        halfwidth=ipr_halfwidth,
        side=side,
        workers=workers,
    )
    passed = bool(curve.localized and efr.median_ipr >= ipr_threshold)
    return GateReport(
        passed=passed,
        energy=float(energy),
        moment_curve=curve,
        median_ipr=efr.median_ipr,
        ipr_threshold=float(ipr_threshold),
        n_states=efr.n_states,
    )
