"""Integrated density of states and local density estimation.

The finite-volume IDS is tr P_(-inf, E] / |box|, averaged over disorder.
Counting goes through the inertia path, so no eigenvector work is done.
The local density comes from a symmetric difference quotient at a
bandwidth no finer than the Monte Carlo resolution; the Lebesgue-point
scan looks for energies where that quotient is stable under doubling
the bandwidth, which is what downstream rescaled-statistics runs need.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .errors import ParameterError
from .estimates import mean_and_stderr, run_trials
from .operators import ModelSpec
from .spectral import count_at_most, eigen_full

__all__ = [
    "IdsCurve",
    "DensityEstimate",
    "LebesguePoint",
    "mc_resolution",
    "estimate_ids",
    "estimate_density",
    "lebesgue_point_scan",
]


@dataclass
class IdsCurve:
    energies: np.ndarray
    values: np.ndarray
    stderrs: np.ndarray
    side: int
    trials: int
    model: dict = field(default_factory=dict)

    def csv_bytes(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["energy", "ids", "stderr"])
        for e, v, s in zip(self.energies, self.values, self.stderrs):
            writer.writerow([repr(float(e)), repr(float(v)), repr(float(s))])
        return buf.getvalue().encode()


@dataclass
class DensityEstimate:
    energy: float
    value: float
    stderr: float
    bandwidth: float
    trials: int
    notice: str | None = None


@dataclass
class LebesguePoint:
    energy: float
    density: float
    stderr: float
    spread: float
    admissible: bool


def mc_resolution(trials: int, volume: float) -> float:
    """Finest honest difference-quotient bandwidth for a counting
    ensemble of this size."""
    return 4.0 / math.sqrt(max(1, trials) * max(volume, 1.0))


def _ids_trial(trial: int, model: ModelSpec, side: int, energies: tuple, seed: int) -> list[int]:
    op = model.build(seed, trial, side=side)
    return [count_at_most(op, e) for e in energies]


def estimate_ids(
    model: ModelSpec,
    energies,
    trials: int,
    master_seed: int,
    side: int | None = None,
    workers: int = 1,
) -> IdsCurve:
    """Disorder-averaged IDS on an energy grid (counts / box volume)."""
    energies = tuple(float(e) for e in np.atleast_1d(energies))
    if not energies:
        raise ParameterError("need at least one energy")
    side = int(side or model.side)
    worker = partial(
        _ids_trial, model=model, side=side, energies=energies, seed=master_seed
    )
    rows = run_trials(worker, int(trials), workers)
    volume = float(model.geometry(side).volume)
    values, errs = [], []
    for i in range(len(energies)):
        est, err = mean_and_stderr([r[i] / volume for r in rows])
        values.append(est)
        errs.append(err)
    return IdsCurve(
        energies=np.asarray(energies),
        values=np.asarray(values),
        stderrs=np.asarray(errs),
        side=side,
        trials=int(trials),
        model=model.describe(),
    )


def estimate_density(
    model: ModelSpec,
    energy: float,
    trials: int,
    master_seed: int,
    bandwidth: float | None = None,
    side: int | None = None,
    workers: int = 1,
) -> DensityEstimate:
    """Symmetric difference quotient of the IDS at one energy.

    A requested bandwidth below the Monte Carlo resolution is widened to
    the default and the report says so.
    """
    side = int(side or model.side)
    volume = float(model.geometry(side).volume)
    resolution = mc_resolution(int(trials), volume)
    default_bw = max(0.01, resolution)
    notice = None
    if bandwidth is None:
        bw = default_bw
    elif bandwidth < resolution:
        bw = default_bw
        notice = (
            f"requested bandwidth {bandwidth:g} is below the Monte Carlo "
            f"resolution {resolution:g}; widened to {bw:g}"
        )
    else:
        bw = float(bandwidth)
    # both counts come from the same operator per trial, so reduce the
    # per-trial difference (its spread is much smaller than either count's)
    worker = partial(
        _ids_trial,
        model=model,
        side=side,
        energies=(energy - bw / 2.0, energy + bw / 2.0),
        seed=master_seed,
    )
    rows = run_trials(worker, int(trials), workers)
    diffs = [(hi - lo) / (volume * bw) for lo, hi in rows]
    est, err = mean_and_stderr(diffs)
    return DensityEstimate(
        energy=float(energy),
        value=est,
        stderr=err,
        bandwidth=bw,
        trials=int(trials),
        notice=notice,
    )


def _sorted_spectrum_trial(trial: int, model: ModelSpec, side: int, seed: int) -> np.ndarray:
    op = model.build(seed, trial, side=side)
    return eigen_full(op).values


def lebesgue_point_scan(
    model: ModelSpec,
    window: tuple[float, float],
    trials: int,
    master_seed: int,
    candidates: int = 21,
    bandwidth: float | None = None,
    side: int | None = None,
    workers: int = 1,
    min_density: float = 0.05,
    stability_tol: float = 0.10,
) -> list[LebesguePoint]:
    """Rank candidate energies by difference-quotient stability.

    For each candidate the density is estimated at bandwidths (bw, 2bw,
    4bw); a candidate is admissible when all pairwise ratios sit within
    ``stability_tol`` of 1 and the density clears ``min_density``.  The
    returned list is sorted admissible-first, most stable first.
    """
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ParameterError("scan window must have positive width")
    if candidates < 1:
        raise ParameterError("need at least one candidate energy")
    side = int(side or model.side)
    volume = float(model.geometry(side).volume)
    bw = bandwidth if bandwidth is not None else max(0.01, mc_resolution(int(trials), volume))
    widths = (bw, 2.0 * bw, 4.0 * bw)
    margin = widths[-1] / 2.0
    if hi - lo <= 2.0 * margin:
        raise ParameterError("scan window too narrow for the widest bandwidth")
    grid = np.linspace(lo + margin, hi - margin, candidates)

    worker = partial(_sorted_spectrum_trial, model=model, side=side, seed=master_seed)
    spectra = run_trials(worker, int(trials), workers)

    out: list[LebesguePoint] = []
    for e in grid:
        per_width = []
        for w in widths:
            per_trial = [
                (
                    np.searchsorted(vals, e + w / 2.0, side="right")
                    - np.searchsorted(vals, e - w / 2.0, side="right")
                )
                / (volume * w)
                for vals in spectra
            ]
            per_width.append(mean_and_stderr(per_trial))
        densities = [m for m, _ in per_width]
        base, base_err = per_width[0]
        if min(densities) <= 0.0:
            spread = math.inf
        else:
            spread = max(
                abs(a / b - 1.0) for a in densities for b in densities
            )
        admissible = spread <= stability_tol and base >= min_density
        out.append(
            LebesguePoint(
                energy=float(e),
                density=base,
                stderr=base_err,
                spread=spread,
                admissible=admissible,
            )
        )
    out.sort(key=lambda c: (not c.admissible, c.spread))
    return out
