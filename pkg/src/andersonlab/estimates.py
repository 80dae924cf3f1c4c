"""Monte Carlo drivers for the finite-volume counting bounds.

Every experiment here follows the same pattern: a picklable per-trial
worker derives its randomness purely from (master seed, trial index,
stream), results are gathered in trial order no matter how many worker
processes ran, and the reduction uses compensated summation — so a
report is a deterministic function of (model, parameters, seed).

The bounds being probed (per unit checks of the rigorous inequalities):

* one-interval counting:   E[N_I]        <= density_sup * |I| * |box|
* pair counting:           E[N_I(N_I-1)] <= (density_sup * |I| * |box|)^2
* one-site averaging:      E<delta_j, P_I delta_j> <= density_sup * |I|
* frozen-site counting:    same scale with one coupling pinned
* spectral shift:          E[tr h_b(H_0) - tr h_b(H_tau)] <= 1 on the
  lattice (rank-one pinning), and <= 2 * K * overlap * rho+ / rho- with
  the empirical K for bump perturbations
* near-degeneracy events:  P{two eigenvalues closer than L^-q inside I}
  <= 2 * density_sup^2 * (|I|+1) * L^(2d-q)
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Iterable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ParameterError
from .model import pin_site
from .operators import ModelSpec
from .spectral import Interval, count_in, eigen_full

__all__ = [
    "Cell",
    "EstimateReport",
    "run_trials",
    "smooth_switch",
    "wegner_experiment",
    "minami_experiment",
    "spectral_averaging_check",
    "fixed_site_wegner",
    "spectral_shift_experiment",
    "simplicity_experiment",
    "mean_and_stderr",
    "log_log_slope",
]


# ---------------------------------------------------------------------------
# reduction helpers
# ---------------------------------------------------------------------------


def mean_and_stderr(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and standard error with compensated summation, so the
    result does not depend on how trials were chunked across workers."""
    xs = [float(v) for v in values]
    n = len(xs)
    if n == 0:
        raise ParameterError("cannot reduce an empty sample")
    mean = math.fsum(xs) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, math.sqrt(var / n)


def log_log_slope(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Least-squares slope of log y against log x (None if fewer than
    two usable points)."""
    pairs = [(math.log(a), math.log(b)) for a, b in zip(x, y) if a > 0 and b > 0]
    if len(pairs) < 2:
        return None
    lx = np.array([p[0] for p in pairs])
    ly = np.array([p[1] for p in pairs])
    lx = lx - lx.mean()
    return float(np.dot(lx, ly - ly.mean()) / np.dot(lx, lx))


def _limit_worker_threads() -> None:
    # keep LAPACK single-threaded inside workers: reproducible floats and
    # no oversubscription when trials are the parallel axis
    threadpool_limits(limits=1)


def run_trials(fn: Callable[[int], object], trials: int, workers: int = 1) -> list:
    """Evaluate ``fn`` on trial indices 0..trials-1, in order.

    The returned list is identical whatever ``workers`` is, because trials
    are pure functions of their index and results are gathered in index
    order.
    """
    if trials <= 0:
        raise ParameterError("trials must be positive")
    if workers < 1:
        raise ParameterError("workers must be >= 1")
    with threadpool_limits(limits=1):
        if workers == 1:
            return [fn(t) for t in range(trials)]
        chunk = max(1, trials // (workers * 8))
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_limit_worker_threads
        ) as pool:
            return list(pool.map(fn, range(trials), chunksize=chunk))


# ---------------------------------------------------------------------------
# report schema
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    """One (interval, volume) cell of an ensemble estimate."""

    interval: Interval
    volume: float
    trials: int
    estimate: float
    stderr: float
    bound: float
    passed: bool


@dataclass
class EstimateReport:
    kind: str
    params: dict
    cells: list[Cell]
    extras: dict = field(default_factory=dict)
    wall_seconds: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "per_cell": [
                {
                    "interval": [c.interval.lo, c.interval.hi],
                    "volume": c.volume,
                    "trials": c.trials,
                    "estimate": c.estimate,
                    "stderr": c.stderr,
                    "bound": c.bound,
                    "pass": c.passed,
                }
                for c in self.cells
            ],
            "extras": self.extras,
            "wall_seconds": self.wall_seconds,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)

    def csv_bytes(self) -> bytes:
        """Deterministic flat table, one row per cell; floats use the
        shortest round-trip representation."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            [
                "kind",
                "interval_lo",
                "interval_hi",
                "volume",
                "trials",
                "estimate",
                "stderr",
                "bound",
                "pass",
            ]
        )
        for c in self.cells:
            writer.writerow(
                [
                    self.kind,
                    repr(c.interval.lo),
                    repr(c.interval.hi),
                    repr(c.volume),
                    c.trials,
                    repr(c.estimate),
                    repr(c.stderr),
                    repr(c.bound),
                    int(c.passed),
                ]
            )
        return buf.getvalue().encode()

    def all_passed(self) -> bool:
        return all(c.passed for c in self.cells)


def _normalize_intervals(intervals) -> list[Interval]:
    if isinstance(intervals, Interval) or (
        isinstance(intervals, (tuple, list))
        and len(intervals) == 2
        and np.isscalar(intervals[0])
    ):
        intervals = [intervals]
    out = []
    for iv in intervals:
        out.append(iv if isinstance(iv, Interval) else Interval(float(iv[0]), float(iv[1])))
    if not out:
        raise ParameterError("need at least one interval")
    return out


def _normalize_sides(model: ModelSpec, sides) -> list[int]:
    if sides is None:
        return [model.side]
    out = [int(s) for s in sides]
    if not out:
        raise ParameterError("need at least one volume")
    return out


def _per_side_trials(trials, n_sides: int) -> list[int]:
    if np.isscalar(trials):
        return [int(trials)] * n_sides
    out = [int(t) for t in trials]
    if len(out) != n_sides:
        raise ParameterError("per-volume trial list must match the volume grid")
    return out


# ---------------------------------------------------------------------------
# counting experiments
# ---------------------------------------------------------------------------


def _interval_count_trial(
    trial: int, model: ModelSpec, side: int, stream: int, intervals: tuple, seed: int
) -> list[int]:
    op = model.build(seed, trial, stream=stream, side=side)
    return [count_in(op, iv) for iv in intervals]


def wegner_experiment(
    model: ModelSpec,
    intervals,
    trials,
    master_seed: int,
    sides=None,
    workers: int = 1,
) -> EstimateReport:
    """Mean eigenvalue count per interval against the one-interval bound
    density_sup * |I| * volume (the volume here is the box volume L^d,
    which on the lattice is the number of sites)."""
    t0 = time.perf_counter()
    ivs = _normalize_intervals(intervals)
    side_list = _normalize_sides(model, sides)
    trial_list = _per_side_trials(trials, len(side_list))
    rho_sup = model.distribution.density_sup

    cells: list[Cell] = []
    constants: list[float] = []
    per_interval_by_side: dict[float, list[float]] = {}
    for s_idx, (side, n_trials) in enumerate(zip(side_list, trial_list)):
        worker = partial(
            _interval_count_trial,
            model=model,
            side=side,
            stream=s_idx,
            intervals=tuple(ivs),
            seed=master_seed,
        )
        rows = run_trials(worker, n_trials, workers)
        volume = float(model.geometry(side).volume)
        for i_idx, iv in enumerate(ivs):
            est, err = mean_and_stderr([r[i_idx] for r in rows])
            bound = rho_sup * iv.width * volume
            cells.append(
                Cell(iv, volume, n_trials, est, err, bound, est <= bound + 3.0 * err)
            )
            constants.append(est / bound if bound > 0 else math.nan)
            per_interval_by_side.setdefault(iv.width, []).append(est)

    extras: dict = {"constant_hat": constants}
    if len(side_list) > 1:
        volumes = [float(model.geometry(s).volume) for s in side_list]
        extras["volume_slopes"] = {
            repr(w): log_log_slope(volumes, ests) for w, ests in per_interval_by_side.items()
        }
    return EstimateReport(
        kind="wegner",
        params={
            "model": model.describe(),
            "intervals": [iv.as_tuple() for iv in ivs],
            "sides": side_list,
            "trials": trial_list,
            "seed": master_seed,
        },
        cells=cells,
        extras=extras,
        wall_seconds=time.perf_counter() - t0,
    )


def minami_experiment(
    model: ModelSpec,
    intervals,
    trials,
    master_seed: int,
    sides=None,
    workers: int = 1,
) -> EstimateReport:
    """Mean second factorial moment of the interval count against the
    squared one-interval bound, plus the implied two-point probability."""
    t0 = time.perf_counter()
    ivs = _normalize_intervals(intervals)
    side_list = _normalize_sides(model, sides)
    trial_list = _per_side_trials(trials, len(side_list))
    rho_sup = model.distribution.density_sup

    cells: list[Cell] = []
    pair_probs: list[float] = []
    pair_prob_errs: list[float] = []
    widths: list[float] = []
    estimates: list[float] = []
    for s_idx, (side, n_trials) in enumerate(zip(side_list, trial_list)):
        worker = partial(
            _interval_count_trial,
            model=model,
            side=side,
            stream=s_idx,
            intervals=tuple(ivs),
            seed=master_seed,
        )
        rows = run_trials(worker, n_trials, workers)
        volume = float(model.geometry(side).volume)
        for i_idx, iv in enumerate(ivs):
            counts = np.array([r[i_idx] for r in rows], dtype=float)
            est, err = mean_and_stderr(counts * (counts - 1.0))
            bound = (rho_sup * iv.width * volume) ** 2
            cells.append(
                Cell(iv, volume, n_trials, est, err, bound, est <= bound + 3.0 * err)
            )
            p2, p2_err = mean_and_stderr((counts >= 2).astype(float))
            pair_probs.append(p2)
            pair_prob_errs.append(p2_err)
            widths.append(iv.width)
            estimates.append(est)

    extras = {
        "pair_probability": pair_probs,
        "pair_probability_stderr": pair_prob_errs,
        "constant_hat": [
            c.estimate / c.bound if c.bound > 0 else math.nan for c in cells
        ],
    }
    if len(ivs) > 1 and len(side_list) == 1:
        extras["width_slope"] = log_log_slope(widths, estimates)
    return EstimateReport(
        kind="minami",
        params={
            "model": model.describe(),
            "intervals": [iv.as_tuple() for iv in ivs],
            "sides": side_list,
            "trials": trial_list,
            "seed": master_seed,
        },
        cells=cells,
        extras=extras,
        wall_seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# one-site averaging
# ---------------------------------------------------------------------------


def _site_mass_trial(
    trial: int, model: ModelSpec, site: int, intervals: tuple, seed: int
) -> list[float]:
    op = model.build(seed, trial)
    spec = eigen_full(op, vectors=True)
    row = spec.vectors[site, :]
    out = []
    for iv in intervals:
        mask = iv.contains(spec.values)
        out.append(float(np.sum(row[mask] ** 2)))
    return out


def spectral_averaging_check(
    model: ModelSpec,
    intervals,
    trials: int,
    master_seed: int,
    site: int = 0,
    workers: int = 1,
) -> EstimateReport:
    """Mean diagonal mass <delta_j, P_I delta_j> against density_sup*|I|:
    the volume-independent one-site averaging bound."""
    t0 = time.perf_counter()
    ivs = _normalize_intervals(intervals)
    if model.mode != "lattice":
        raise ParameterError("the one-site averaging check runs on lattice models")
    if not 0 <= site < model.geometry().n_sites:
        raise ParameterError(f"site {site} outside the box")
    worker = partial(
        _site_mass_trial, model=model, site=site, intervals=tuple(ivs), seed=master_seed
    )
    rows = run_trials(worker, int(trials), workers)
    volume = float(model.geometry().volume)
    cells = []
    for i_idx, iv in enumerate(ivs):
        est, err = mean_and_stderr([r[i_idx] for r in rows])
        bound = model.distribution.density_sup * iv.width
        cells.append(Cell(iv, volume, int(trials), est, err, bound, est <= bound + 3.0 * err))
    return EstimateReport(
        kind="spectral_averaging",
        params={
            "model": model.describe(),
            "intervals": [iv.as_tuple() for iv in ivs],
            "site": site,
            "trials": int(trials),
            "seed": master_seed,
        },
        cells=cells,
        wall_seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# frozen-site counting
# ---------------------------------------------------------------------------


def _pinned_count_trial(
    trial: int,
    model: ModelSpec,
    site: int,
    value: float,
    intervals: tuple,
    seed: int,
) -> tuple[list[int], list[int]]:
    realization = model.realization(seed, trial)
    pinned_op = model.assemble(pin_site(realization, site, value))
    plain_op = model.assemble(realization)
    return (
        [count_in(pinned_op, iv) for iv in intervals],
        [count_in(plain_op, iv) for iv in intervals],
    )


def fixed_site_wegner(
    model: ModelSpec,
    intervals,
    trials: int,
    master_seed: int,
    site: int = 0,
    value: float = 0.0,
    workers: int = 1,
) -> EstimateReport:
    """Counting estimate with one coupling frozen at ``value``: the mean
    count still scales like density_sup * |I| * volume; the report carries
    the empirical constant and the unpinned comparison."""
    t0 = time.perf_counter()
    ivs = _normalize_intervals(intervals)
    worker = partial(
        _pinned_count_trial,
        model=model,
        site=site,
        value=float(value),
        intervals=tuple(ivs),
        seed=master_seed,
    )
    rows = run_trials(worker, int(trials), workers)
    volume = float(model.geometry().volume)
    rho_sup = model.distribution.density_sup
    cells = []
    unpinned = []
    for i_idx, iv in enumerate(ivs):
        est, err = mean_and_stderr([r[0][i_idx] for r in rows])
        u_est, u_err = mean_and_stderr([r[1][i_idx] for r in rows])
        bound = rho_sup * iv.width * volume
        cells.append(Cell(iv, volume, int(trials), est, err, bound, est <= bound + 3.0 * err))
        unpinned.append({"estimate": u_est, "stderr": u_err})
    return EstimateReport(
        kind="fixed_site_wegner",
        params={
            "model": model.describe(),
            "intervals": [iv.as_tuple() for iv in ivs],
            "site": site,
            "pinned_value": float(value),
            "trials": int(trials),
            "seed": master_seed,
        },
        cells=cells,
        extras={
            "constant_hat": [
                c.estimate / c.bound if c.bound > 0 else math.nan for c in cells
            ],
            "unpinned": unpinned,
        },
        wall_seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# spectral shift
# ---------------------------------------------------------------------------


def smooth_switch(t: np.ndarray | float, delta: float) -> np.ndarray:
    """C^2 nonincreasing switch: 1 for t <= 0, 0 for t >= delta, quintic
    in between with max slope 1.875/delta (safely below the 2/delta cap)."""
    if delta <= 0:
        raise ParameterError("switch width must be positive")
    s = np.clip(np.asarray(t, dtype=float) / delta, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def _shift_trial(
    trial: int,
    model: ModelSpec,
    site: int,
    tau: float,
    b_values: tuple,
    delta: float,
    seed: int,
) -> tuple[list[float], int]:
    realization = model.realization(seed, trial)
    low = model.assemble(pin_site(realization, site, 0.0))
    high = model.assemble(pin_site(realization, site, tau))
    vals_low = eigen_full(low).values
    vals_high = eigen_full(high).values
    out = []
    bad = 0
    rank_bound = 1.0 if model.mode == "lattice" else math.inf
    for b in b_values:
        xi = float(
            np.sum(smooth_switch(vals_low - b, delta))
            - np.sum(smooth_switch(vals_high - b, delta))
        )
        out.append(xi)
        if xi < -1e-10 or xi > rank_bound + 1e-10:
            bad += 1
    return out, bad


def spectral_shift_experiment(
    model: ModelSpec,
    b_values,
    trials: int,
    master_seed: int,
    delta: float = 0.05,
    tau: float = 1.0,
    site: int = 0,
    constant_ref: float = 1.0,
    workers: int = 1,
) -> EstimateReport:
    """Averaged smoothed spectral shift between the coupling-0 and
    coupling-tau operators at one site.

    On the lattice the pinning is rank one, so the shift lies in [0, 1]
    realization by realization and the bound column is 1.  For bump
    perturbations the reference is 2 * K * overlap_sup * rho+/rho- with
    K = ``constant_ref`` (the empirical counting constant).
    """
    t0 = time.perf_counter()
    if tau < 0:
        raise ParameterError("tau must be nonnegative")
    bs = tuple(float(b) for b in (b_values if np.iterable(b_values) else [b_values]))
    if not bs:
        raise ParameterError("need at least one threshold b")
    worker = partial(
        _shift_trial,
        model=model,
        site=site,
        tau=float(tau),
        b_values=bs,
        delta=float(delta),
        seed=master_seed,
    )
    rows = run_trials(worker, int(trials), workers)
    volume = float(model.geometry().volume)
    dist = model.distribution
    if model.mode == "lattice":
        bound = 1.0
        overlap = 1.0
    else:
        op = model.build(master_seed, 0)
        overlap = float(op.meta["overlap_sup"])
        bound = 2.0 * constant_ref * overlap * (dist.density_sup / dist.density_inf)
    cells = []
    for b_idx, b in enumerate(bs):
        est, err = mean_and_stderr([r[0][b_idx] for r in rows])
        cells.append(
            Cell(
                Interval(b, b + delta),
                volume,
                int(trials),
                est,
                err,
                bound,
                est <= bound + 3.0 * err,
            )
        )
    violations = sum(r[1] for r in rows)
    return EstimateReport(
        kind="spectral_shift",
        params={
            "model": model.describe(),
            "b_values": list(bs),
            "delta": float(delta),
            "tau": float(tau),
            "site": site,
            "trials": int(trials),
            "seed": master_seed,
        },
        cells=cells,
        extras={
            "range_violations": int(violations),
            "overlap_sup": overlap,
            "density_ratio": dist.density_ceiling / dist.density_floor,
            "max_switch_slope": 1.875 / float(delta),
        },
        wall_seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# near-degeneracy scaling
# ---------------------------------------------------------------------------


def _min_gap_trial(
    trial: int,
    model: ModelSpec,
    side: int,
    stream: int,
    interval: Interval,
    threshold: float,
    multiplicity_tol: float,
    seed: int,
) -> tuple[bool, float, int]:
    op = model.build(seed, trial, stream=stream, side=side)
    vals = eigen_full(op).values
    inside = vals[interval.contains(vals)]
    if inside.size < 2:
        return False, math.inf, 0
    gaps = np.diff(inside)
    min_gap = float(np.min(gaps))
    multiplicity = int(np.sum(gaps < multiplicity_tol))
    return min_gap < threshold, min_gap, multiplicity


def simplicity_experiment(
    model: ModelSpec,
    interval,
    exponent: float,
    sides,
    trials,
    master_seed: int,
    workers: int = 1,
    histogram_bins: int = 24,
) -> EstimateReport:
    """Probability of two eigenvalues inside the interval closer than
    side^-exponent, across a grid of volumes.

    The event probability is bounded by
    2 * density_sup^2 * (|I|+1) * side^(2d - exponent), which decays
    only when the exponent beats twice the dimension — hence the
    validation.  Estimates, the fitted log-log slope, min-gap histograms
    and near-multiplicity counts are all reported.
    """
    t0 = time.perf_counter()
    iv = _normalize_intervals(interval)[0]
    side_list = _normalize_sides(model, sides)
    trial_list = _per_side_trials(trials, len(side_list))
    d = model.dimension
    if exponent <= 2 * d:
        raise ParameterError(
            f"gap exponent must exceed 2*dimension = {2 * d} for a decaying bound"
        )
    rho_sup = model.distribution.density_sup

    cells = []
    histograms = {}
    multiplicity_rates = {}
    for s_idx, (side, n_trials) in enumerate(zip(side_list, trial_list)):
        threshold = float(side) ** (-exponent)
        # near-degeneracy tolerance tied to the spectral scale of the model
        scale = 4.0 * d + model.distribution.sample_max
        worker = partial(
            _min_gap_trial,
            model=model,
            side=side,
            stream=s_idx,
            interval=iv,
            threshold=threshold,
            multiplicity_tol=1e-10 * scale,
            seed=master_seed,
        )
        rows = run_trials(worker, n_trials, workers)
        events = np.array([r[0] for r in rows], dtype=float)
        p_hat = float(np.mean(events))
        stderr = math.sqrt(p_hat * (1.0 - p_hat) / n_trials)
        volume = float(model.geometry(side).volume)
        bound = 2.0 * rho_sup**2 * (iv.width + 1.0) * float(side) ** (2 * d - exponent)
        cells.append(
            Cell(iv, volume, n_trials, p_hat, stderr, bound, p_hat <= bound + 3.0 * stderr)
        )
        finite_gaps = np.array([r[1] for r in rows])
        finite_gaps = finite_gaps[np.isfinite(finite_gaps) & (finite_gaps > 0)]
        if finite_gaps.size:
            edges = np.geomspace(
                max(finite_gaps.min(), 1e-300), finite_gaps.max() * (1 + 1e-12), histogram_bins + 1
            )
            counts, _ = np.histogram(finite_gaps, bins=edges)
            histograms[str(side)] = {"edges": edges.tolist(), "counts": counts.tolist()}
        multiplicity_rates[str(side)] = float(np.mean([r[2] > 0 for r in rows]))

    p_by_side = [c.estimate for c in cells]
    extras = {
        "thresholds": [float(s) ** (-exponent) for s in side_list],
        "slope": log_log_slope([float(s) for s in side_list], p_by_side),
        "strictly_decreasing": all(
            a > b for a, b in zip(p_by_side, p_by_side[1:])
        ),
        "gap_histograms": histograms,
        "multiplicity_rates": multiplicity_rates,
    }
    return EstimateReport(
        kind="simplicity",
        params={
            "model": model.describe(),
            "interval": iv.as_tuple(),
            "exponent": float(exponent),
            "sides": side_list,
            "trials": trial_list,
            "seed": master_seed,
        },
        cells=cells,
        extras=extras,
        wall_seconds=time.perf_counter() - t0,
    )
