"""Rescaled eigenvalue point processes and Poisson desk checks.

Around a reference energy, eigenvalues of a finite box are stretched by
the box volume so that the mean spacing stays order one as the box
grows.  Three ensembles are offered:

* ``local_process``   -- the plain rescaled spectrum of the full box;
* ``superposition_process`` -- the same disorder field restricted to a
  grid of disjoint sub-boxes, each diagonalized on its own small torus,
  all rescaled with the *large* volume and pooled (the independent-
  blocks approximation of the local process);
* ``restricted_process`` -- eigenvalues of an enlarged torus weighted by
  the eigenfunction mass each state puts inside the original box.

Statistical verdicts (total variation of the count distribution, a
chi-square on counts, Kolmogorov-Smirnov on gaps) are separate pure
functions of an ensemble, so the same ensemble can be tested against
several hypotheses without re-diagonalizing anything.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from .errors import InsufficientDataError, ParameterError
from .estimates import mean_and_stderr, run_trials
from .operators import ModelSpec
from .spectral import eigen_full

__all__ = [
    "ProcessSample",
    "ProcessEnsemble",
    "CountsTestResult",
    "SpacingTestResult",
    "ConditionsReport",
    "local_process",
    "superposition_process",
    "restricted_process",
    "superposition_box_side",
    "poisson_counts_test",
    "spacing_test",
    "limit_conditions_check",
]


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


@dataclass
class ProcessSample:
    """Points of one trial on the rescaled axis, optionally weighted."""

    trial: int
    points: np.ndarray
    weights: np.ndarray | None = None


@dataclass
class ProcessEnsemble:
    samples: list
    energy: float
    window: float
    scale_volume: float
    params: dict = field(default_factory=dict)

    @property
    def n_trials(self) -> int:
        return len(self.samples)

    @property
    def weighted(self) -> bool:
        return any(s.weights is not None for s in self.samples)

    def counts(self, intervals) -> np.ndarray:
        """Per-trial number of points in a finite union of half-open
        intervals on the rescaled axis."""
        ivs = _normalize_union(intervals, self.window)
        out = np.zeros(self.n_trials, dtype=np.int64)
        for i, s in enumerate(self.samples):
            pts = s.points
            total = 0
            for lo, hi in ivs:
                total += int(
                    np.searchsorted(pts, hi, side="right")
                    - np.searchsorted(pts, lo, side="right")
                )
            out[i] = total
        return out

    def pooled_gaps(self) -> np.ndarray:
        """Within-window gaps pooled across trials, wrap-around included.

        The window is closed into a circle of circumference 2W: each
        trial contributes its consecutive differences plus the gap that
        runs from the last point through the edges back to the first.
        Linear-only gaps are size-biased short (long gaps overflow the
        window), an O(1/points-per-window) distortion that a KS test
        resolves at any fixed level once enough gaps are pooled; with
        the wrap gap a Poisson sample has an exactly exponential pooled
        gap law, so the spacing test keeps its nominal level.
        """
        circumference = 2.0 * self.window
        gaps = []
        for s in self.samples:
            pts = s.points
            if pts.size == 1:
                gaps.append(np.array([circumference]))
            elif pts.size >= 2:
                gaps.append(np.diff(pts))
                gaps.append(np.array([circumference - float(pts[-1] - pts[0])]))
        if not gaps:
            return np.empty(0)
        return np.concatenate(gaps)

    def points_csv_bytes(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["trial", "point"] + (["weight"] if self.weighted else [])
        writer.writerow(header)
        for s in self.samples:
            for i, p in enumerate(s.points):
                row = [s.trial, repr(float(p))]
                if self.weighted:
                    row.append(repr(float(s.weights[i])) if s.weights is not None else "")
                writer.writerow(row)
        return buf.getvalue().encode()

    def gaps_csv_bytes(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["gap"])
        for g in self.pooled_gaps():
            writer.writerow([repr(float(g))])
        return buf.getvalue().encode()


def _normalize_union(intervals, window: float) -> list:
    if isinstance(intervals, tuple) and len(intervals) == 2 and np.isscalar(intervals[0]):
        intervals = [intervals]
    ivs = []
    for item in intervals:
        lo, hi = (item.lo, item.hi) if hasattr(item, "lo") else (item[0], item[1])
        lo, hi = float(lo), float(hi)
        if not lo < hi:
            raise ParameterError(f"degenerate interval ({lo}, {hi}]")
        ivs.append((lo, hi))
    ivs.sort()
    for (a_lo, a_hi), (b_lo, b_hi) in zip(ivs, ivs[1:]):
        if b_lo < a_hi:
            raise ParameterError("count intervals must be disjoint")
        if a_lo < -window or a_hi > window or b_hi > window:
            raise ParameterError("count interval exceeds the process window")
    if ivs and (ivs[0][0] < -window or ivs[-1][1] > window):
        raise ParameterError("count interval exceeds the process window")
    return ivs


def _rescale(values: np.ndarray, energy: float, volume: float, window: float) -> np.ndarray:
    x = volume * (values - energy)
    x = x[(x >= -window) & (x <= window)]
    return np.sort(x)


def _local_trial(trial: int, model: ModelSpec, side: int, energy: float, window: float, seed: int):
    op = model.build(seed, trial, side=side)
    vals = eigen_full(op).values
    return _rescale(vals, energy, op.geometry.volume, window)


def local_process(
    model: ModelSpec,
    energy: float,
    window: float,
    trials: int,
    master_seed: int,
    side: int | None = None,
    workers: int = 1,
) -> ProcessEnsemble:
    """Rescaled spectrum of the full box near ``energy``."""
    if window <= 0:
        raise ParameterError("window must be positive")
    side = int(side or model.side)
    volume = float(model.geometry(side).volume)
    worker = partial(
        _local_trial, model=model, side=side, energy=float(energy), window=float(window), seed=master_seed
    )
    rows = run_trials(worker, int(trials), workers)
    samples = [ProcessSample(trial=i, points=pts) for i, pts in enumerate(rows)]
    return ProcessEnsemble(
        samples=samples,
        energy=float(energy),
        window=float(window),
        scale_volume=volume,
        params={
            "kind": "local",
            "model": model.describe(),
            "side": side,
            "trials": int(trials),
            "seed": master_seed,
        },
    )


def superposition_box_side(side: int, a: float) -> int:
    """Largest even divisor of ``side`` not exceeding ``side**a``."""
    if not 0.0 < a <= 1.0:
        raise ParameterError(f"box exponent must lie in (0, 1], got {a}")
    cap = side**a + 1e-9
    best = 0
    for ell in range(2, side + 1, 2):
        if side % ell == 0 and ell <= cap:
            best = ell
    if best == 0:
        raise ParameterError(
            f"no even divisor of {side} lies below {side}**{a}; enlarge the box or the exponent"
        )
    return best


def _superposition_trial(
    trial: int, model: ModelSpec, side: int, ell: int, energy: float, window: float, seed: int
):
    realization = model.realization(seed, trial, side=side)
    volume = float(realization.geometry.volume)
    blocks = side // ell
    d = model.dimension
    pieces = []
    for flat in range(blocks**d):
        corner = np.asarray(np.unravel_index(flat, (blocks,) * d)) * ell
        sub = realization.restrict(tuple(int(c) for c in corner), ell)
        vals = eigen_full(model.assemble(sub)).values
        pieces.append(volume * (vals - energy))
    x = np.concatenate(pieces)
    x = x[(x >= -window) & (x <= window)]
    return np.sort(x)


def superposition_process(
    model: ModelSpec,
    energy: float,
    window: float,
    trials: int,
    master_seed: int,
    a: float = 0.5,
    side: int | None = None,
    workers: int = 1,
) -> ProcessEnsemble:
    """Pool of the sub-box spectra obtained by restricting each trial's
    disorder field to a grid of disjoint boxes of side ``ell`` chosen as
    the largest even divisor of the big side below ``side**a``.  All
    points are rescaled with the big volume, so with ``a = 1`` (one box)
    the ensemble coincides with the local process trial by trial.
    """
    if window <= 0:
        raise ParameterError("window must be positive")
    side = int(side or model.side)
    ell = superposition_box_side(side, a)
    volume = float(model.geometry(side).volume)
    worker = partial(
        _superposition_trial,
        model=model,
        side=side,
        ell=ell,
        energy=float(energy),
        window=float(window),
        seed=master_seed,
    )
    rows = run_trials(worker, int(trials), workers)
    samples = [ProcessSample(trial=i, points=pts) for i, pts in enumerate(rows)]
    return ProcessEnsemble(
        samples=samples,
        energy=float(energy),
        window=float(window),
        scale_volume=volume,
        params={
            "kind": "superposition",
            "model": model.describe(),
            "side": side,
            "box_side": ell,
            "boxes": (side // ell) ** model.dimension,
            "exponent": float(a),
            "trials": int(trials),
            "seed": master_seed,
        },
    )


def _restricted_trial(
    trial: int, model: ModelSpec, side: int, kappa: int, energy: float, window: float, seed: int
):
    op = model.build(seed, trial, side=kappa * side)
    spec = eigen_full(op, vectors=True)
    geom = op.geometry
    inner = geom.box_sites(np.full(geom.dimension, side / 2.0), float(side))
    mass = np.sum(spec.vectors[inner, :] ** 2, axis=0)
    inner_volume = float(side) ** geom.dimension
    x = inner_volume * (spec.values - energy)
    keep = (x >= -window) & (x <= window)
    return np.asarray(x[keep]), np.asarray(mass[keep])


def restricted_process(
    model: ModelSpec,
    energy: float,
    window: float,
    trials: int,
    master_seed: int,
    kappa: int = 2,
    side: int | None = None,
    workers: int = 1,
) -> ProcessEnsemble:
    """Spectrum of a ``kappa``-times enlarged torus, each eigenvalue
    carrying the mass its eigenfunction puts inside the original box.
    Weights lie in [0, 1] and sum (over the whole spectrum) to the
    number of inner grid points."""
    if int(kappa) != kappa or kappa < 2:
        raise ParameterError("enlargement factor must be an integer >= 2")
    if window <= 0:
        raise ParameterError("window must be positive")
    side = int(side or model.side)
    worker = partial(
        _restricted_trial,
        model=model,
        side=side,
        kappa=int(kappa),
        energy=float(energy),
        window=float(window),
        seed=master_seed,
    )
    rows = run_trials(worker, int(trials), workers)
    samples = [
        ProcessSample(trial=i, points=pts, weights=w) for i, (pts, w) in enumerate(rows)
    ]
    return ProcessEnsemble(
        samples=samples,
        energy=float(energy),
        window=float(window),
        scale_volume=float(side) ** model.dimension,
        params={
            "kind": "restricted",
            "model": model.describe(),
            "side": side,
            "kappa": int(kappa),
            "trials": int(trials),
            "seed": master_seed,
        },
    )


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------


@dataclass
class CountsTestResult:
    nu: float
    tv_distance: float
    chi2_stat: float
    chi2_pvalue: float
    chi2_dof: int
    reject: bool
    histogram: dict

    def to_json_dict(self) -> dict:
        return {
            "nu": self.nu,
            "tv_distance": self.tv_distance,
            "chi2_stat": self.chi2_stat,
            "chi2_pvalue": self.chi2_pvalue,
            "chi2_dof": self.chi2_dof,
            "reject": self.reject,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
        }


def poisson_counts_test(
    ensemble: ProcessEnsemble,
    intervals,
    intensity: float,
    alpha: float = 0.05,
) -> CountsTestResult:
    """Compare the count distribution over a finite union of intervals
    with the Poisson law of mean ``intensity * |B|``.

    Total variation is reported descriptively; the formal verdict is the
    chi-square test (upper-tail cells pooled until each expected count
    is at least five) at level ``alpha``.
    """
    if ensemble.weighted:
        raise ParameterError("count statistics need unweighted samples")
    if intensity <= 0:
        raise ParameterError("intensity must be positive")
    ivs = _normalize_union(intervals, ensemble.window)
    measure = sum(hi - lo for lo, hi in ivs)
    nu = float(intensity) * measure
    counts = ensemble.counts(ivs)
    n = counts.size
    if n == 0:
        raise InsufficientDataError("empty ensemble")
    kmax = int(counts.max())
    observed = np.bincount(counts, minlength=kmax + 1).astype(float)
    pmf = stats.poisson.pmf(np.arange(kmax + 1), nu)
    tail = float(stats.poisson.sf(kmax, nu))
    tv = 0.5 * (float(np.sum(np.abs(observed / n - pmf))) + tail)

    # chi-square with the open upper tail folded in, pooling from the
    # right until every cell expects at least five observations
    probs = list(pmf) + [tail]
    obs = list(observed) + [0.0]
    while len(probs) > 2 and n * probs[-1] < 5.0:
        probs[-2] += probs[-1]
        obs[-2] += obs[-1]
        del probs[-1], obs[-1]
    while len(probs) > 2 and n * probs[0] < 5.0:
        probs[1] += probs[0]
        obs[1] += obs[0]
        del probs[0], obs[0]
    probs_arr = np.asarray(probs)
    obs_arr = np.asarray(obs)
    if probs_arr.size < 2:
        raise InsufficientDataError("too few count cells for a chi-square verdict")
    expected = n * probs_arr
    stat = float(np.sum((obs_arr - expected) ** 2 / expected))
    dof = probs_arr.size - 1
    pvalue = float(stats.chi2.sf(stat, dof))
    return CountsTestResult(
        nu=nu,
        tv_distance=tv,
        chi2_stat=stat,
        chi2_pvalue=pvalue,
        chi2_dof=dof,
        reject=bool(pvalue < alpha),
        histogram={int(k): int(v) for k, v in enumerate(observed)},
    )


@dataclass
class SpacingTestResult:
    n_gaps: int
    ks_stat: float
    ks_critical: float
    ks_pvalue: float
    mean_gap: float
    reject: bool

    def to_json_dict(self) -> dict:
        return {
            "n_gaps": self.n_gaps,
            "ks_stat": self.ks_stat,
            "ks_critical": self.ks_critical,
            "ks_pvalue": self.ks_pvalue,
            "mean_gap": self.mean_gap,
            "reject": self.reject,
        }


def spacing_test(
    ensemble: ProcessEnsemble,
    intensity: float,
    min_gaps: int = 500,
) -> SpacingTestResult:
    """Kolmogorov-Smirnov comparison of the pooled within-window gaps
    with the exponential law of rate ``intensity``.

    Gaps come from ``pooled_gaps`` (wrap-around included), whose pooled
    law is exactly exponential for a Poisson sample, so the 5% critical
    value 1.358/sqrt(m) applies to the pooled sample size m; the mild
    within-trial dependence only makes the level conservative.
    """
    if ensemble.weighted:
        raise ParameterError("gap statistics need unweighted samples")
    if intensity <= 0:
        raise ParameterError("intensity must be positive")
    gaps = ensemble.pooled_gaps()
    if gaps.size < min_gaps:
        raise InsufficientDataError(
            f"only {gaps.size} pooled gaps; need at least {min_gaps} for a stable verdict"
        )
    res = stats.kstest(gaps, "expon", args=(0.0, 1.0 / float(intensity)))
    critical = 1.358 / math.sqrt(gaps.size)
    return SpacingTestResult(
        n_gaps=int(gaps.size),
        ks_stat=float(res.statistic),
        ks_critical=critical,
        ks_pvalue=float(res.pvalue),
        mean_gap=float(gaps.mean()),
        reject=bool(res.statistic > critical),
    )


# ---------------------------------------------------------------------------
# limit conditions on sub-box counts
# ---------------------------------------------------------------------------


def _conditions_trial(
    trial: int, model: ModelSpec, side: int, ell: int, lo: float, hi: float, seed: int
):
    realization = model.realization(seed, trial, side=side)
    blocks = side // ell
    d = model.dimension
    at_least_one = 0
    at_least_two = 0
    for flat in range(blocks**d):
        corner = np.asarray(np.unravel_index(flat, (blocks,) * d)) * ell
        sub = realization.restrict(tuple(int(c) for c in corner), ell)
        vals = eigen_full(model.assemble(sub)).values
        k = int(
            np.searchsorted(vals, hi, side="right") - np.searchsorted(vals, lo, side="right")
        )
        if k >= 1:
            at_least_one += 1
        if k >= 2:
            at_least_two += 1
    return at_least_one, at_least_two


@dataclass
class ConditionsReport:
    rows: list
    verdicts: dict
    passed: bool
    params: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "rows": self.rows,
            "verdicts": self.verdicts,
            "passed": self.passed,
            "params": self.params,
        }

    def csv_bytes(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        columns = [
            "side",
            "box_side",
            "boxes",
            "trials",
            "p1",
            "p2",
            "mean_total",
            "mean_total_stderr",
            "pair_total",
        ]
        writer.writerow(columns)
        for r in self.rows:
            writer.writerow(
                [r[c] if c in ("side", "box_side", "boxes", "trials") else repr(r[c]) for c in columns]
            )
        return buf.getvalue().encode()


def limit_conditions_check(
    model: ModelSpec,
    energy: float,
    interval,
    sides,
    n_hat: float,
    trials,
    master_seed: int,
    a: float = 0.5,
    workers: int = 1,
    tail_threshold: float = 0.05,
    pair_threshold: float = 0.02,
    mean_sigmas: float = 3.0,
) -> ConditionsReport:
    """Empirical check of the three box-count conditions behind the
    Poisson limit: individual boxes rarely see the interval at all
    (p1 -> 0), essentially never twice (M * p2 -> 0), while the expected
    total M * p1 stays near the limiting mean n_hat * |I|.

    ``interval`` lives on the rescaled axis; each side L examines the
    physical window energy + |box|^{-1} * interval split into the same
    sub-boxes the superposition ensemble uses.
    """
    lo_r, hi_r = (interval.lo, interval.hi) if hasattr(interval, "lo") else interval
    lo_r, hi_r = float(lo_r), float(hi_r)
    if not lo_r < hi_r:
        raise ParameterError("degenerate interval on the rescaled axis")
    sides = [int(s) for s in sides]
    if not sides:
        raise ParameterError("need at least one side")
    if np.isscalar(trials):
        trials = [int(trials)] * len(sides)
    trials = [int(t) for t in trials]
    if len(trials) != len(sides):
        raise ParameterError("per-side trial list does not match sides")
    target = float(n_hat) * (hi_r - lo_r)

    rows = []
    for idx, (side, n_trials) in enumerate(zip(sides, trials)):
        ell = superposition_box_side(side, a)
        boxes = (side // ell) ** model.dimension
        volume = float(model.geometry(side).volume)
        lo_e = energy + lo_r / volume
        hi_e = energy + hi_r / volume
        worker = partial(
            _conditions_trial,
            model=model,
            side=side,
            ell=ell,
            lo=lo_e,
            hi=hi_e,
            seed=master_seed + idx,
        )
        results = run_trials(worker, n_trials, workers)
        total_boxes = n_trials * boxes
        ones = sum(r[0] for r in results)
        twos = sum(r[1] for r in results)
        p1 = ones / total_boxes
        p2 = twos / total_boxes
        p1_err = math.sqrt(max(p1 * (1 - p1), 0.0) / total_boxes)
        rows.append(
            {
                "side": side,
                "box_side": ell,
                "boxes": boxes,
                "trials": n_trials,
                "p1": p1,
                "p2": p2,
                "mean_total": boxes * p1,
                "mean_total_stderr": boxes * p1_err,
                "pair_total": boxes * p2,
            }
        )

    last = rows[-1]
    verdicts = {
        "single_box_rare": last["p1"] < tail_threshold,
        "mean_matches_limit": abs(last["mean_total"] - target)
        <= mean_sigmas * max(last["mean_total_stderr"], 1e-300),
        "pairs_negligible": last["pair_total"] < pair_threshold,
    }
    passed = all(verdicts.values())
    return ConditionsReport(
        rows=rows,
        verdicts=verdicts,
        passed=passed,
        params={
            "model": model.describe(),
            "energy": float(energy),
            "interval": [lo_r, hi_r],
            "n_hat": float(n_hat),
            "target_mean": target,
            "exponent": float(a),
            "sides": sides,
            "trials": trials,
            "seed": master_seed,
            "tail_threshold": tail_threshold,
            "pair_threshold": pair_threshold,
            "mean_sigmas": mean_sigmas,
        },
    )
