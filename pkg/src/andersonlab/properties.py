"""Deterministic invariant suites.

Each check runs a seeded batch of randomised instances through an exact
inequality and returns a list of human-readable violation strings
(empty means the invariant held on every instance).  The command-line
``selftest`` and the acceptance tests both call these.
"""
from __future__ import annotations

import numpy as np

from .model import SiteDistribution, TorusGeometry, sample_disorder
from .operators import ModelSpec, build_lattice
from .spectral import Interval, count_at_most, count_in, eigen_full

__all__ = [
    "check_rank_one_interlacing",
    "check_count_splitting",
    "check_trace_convexity",
    "check_counting_oracle",
    "check_determinism",
    "run_all_checks",
]


def _random_lattice_dense(rng: np.random.Generator, side: int = 40) -> np.ndarray:
    """Dense form of a 1-d lattice Hamiltonian with random coupling law."""
    coupling = float(rng.uniform(0.5, 8.0))
    dist = SiteDistribution.uniform(1.0, coupling=coupling)
    geom = TorusGeometry(1, side)
    real = sample_disorder(dist, geom, int(rng.integers(2**32)), 0)
    return build_lattice(geom, real).dense()


def check_rank_one_interlacing(
    seed: int = 7, instances: int = 1000, side: int = 40, thresholds: int = 20
) -> list[str]:
    """Adding t >= 0 times a rank-one projector moves the counting
    function down by at most one: 0 <= N_H(c) - N_{H+tP}(c) <= 1."""
    rng = np.random.default_rng(seed)
    violations: list[str] = []
    for k in range(instances):
        base = _random_lattice_dense(rng, side)
        phi = rng.standard_normal(side)
        phi /= np.linalg.norm(phi)
        t = float(rng.uniform(0.0, 25.0))
        bumped = base + t * np.outer(phi, phi)
        hi = float(np.max(np.abs(base).sum(axis=1))) + t
        for c in rng.uniform(-1.0, hi + 1.0, size=thresholds):
            drop = count_at_most(base, c) - count_at_most(bumped, c)
            if drop not in (0, 1):
                violations.append(
                    f"instance {k}: counting drop {drop} at threshold {c:.6f} (t={t:.4f})"
                )
    return violations


def check_count_splitting(seed: int = 11, instances: int = 500) -> list[str]:
    """For 0 <= s <= t and W >= 0, the interval count of H + sW is
    bounded by the passage count between coupling 0 and t at the top
    endpoint plus the interval count at coupling t."""
    rng = np.random.default_rng(seed)
    violations: list[str] = []
    for k in range(instances):
        n = int(rng.integers(6, 33))
        A = rng.standard_normal((n, n))
        H = (A + A.T) / 2.0
        B = rng.standard_normal((n, n)) * rng.uniform(0.2, 1.5)
        W = B @ B.T
        s, t = np.sort(rng.uniform(0.0, 3.0, size=2))
        lo, hi = np.sort(rng.uniform(-6.0, 6.0, size=2))
        if hi - lo < 1e-6:
            hi = lo + 1e-6
        iv = Interval(float(lo), float(hi))
        n_s = count_in(H + s * W, iv)
        n_t = count_in(H + t * W, iv)
        at_b_0 = count_at_most(H, iv.hi)
        at_b_t = count_at_most(H + t * W, iv.hi)
        passage = at_b_0 - at_b_t
        if passage < 0:
            violations.append(f"instance {k}: negative passage count {passage}")
        if n_s > passage + n_t:
            violations.append(
                f"instance {k}: split bound failed ({n_s} > {passage} + {n_t}) "
                f"for s={s:.4f}, t={t:.4f}, interval=({iv.lo:.4f}, {iv.hi:.4f}]"
            )
        # monotonicity of the cumulative count in the coupling
        at_b_s = count_at_most(H + s * W, iv.hi)
        if not at_b_0 >= at_b_s >= at_b_t:
            violations.append(
                f"instance {k}: cumulative count not monotone in the coupling "
                f"({at_b_0}, {at_b_s}, {at_b_t})"
            )
    return violations


def check_trace_convexity(
    seed: int = 13, instances: int = 1000, size: int = 10, tol: float = 1e-10
) -> list[str]:
    """tr[f(H1) g(H1) f(H1)] <= tr[f(H1) g(H2) f(H1)] for H1 >= H2 and
    g nonincreasing convex (here g = exp(-x))."""
    rng = np.random.default_rng(seed)
    violations: list[str] = []
    for k in range(instances):
        A = rng.standard_normal((size, size))
        H1 = (A + A.T) / 2.0
        B = rng.standard_normal((size, size)) * rng.uniform(0.1, 1.0)
        H2 = H1 - B @ B.T
        spec1 = eigen_full(H1, vectors=True)
        f_vals = rng.uniform(-1.0, 1.0, size=size)
        F = (spec1.vectors * f_vals) @ spec1.vectors.T
        lhs = float(np.sum(f_vals * f_vals * np.exp(-spec1.values)))
        spec2 = eigen_full(H2, vectors=True)
        G2 = (spec2.vectors * np.exp(-spec2.values)) @ spec2.vectors.T
        rhs = float(np.einsum("ij,jk,ki->", F, G2, F))
        if lhs > rhs + tol:
            violations.append(
                f"instance {k}: convexity trace bound failed by {lhs - rhs:.3e}"
            )
    return violations


def _oracle_instance(rng: np.random.Generator, index: int):
    """Rotate through the operator families the counting path supports."""
    from .operators import SingleSiteProfile  # local to keep import cheap

    family = index % 4
    if family == 0:
        side = int(rng.choice([8, 16, 32, 64]))
        spec = ModelSpec.lattice(1, side, SiteDistribution.uniform(1.0, rng.uniform(0.5, 6.0)))
        return spec.build(int(rng.integers(2**32)), 0)
    if family == 1:
        n = int(rng.integers(5, 65))
        A = rng.standard_normal((n, n))
        return (A + A.T) / 2.0
    if family == 2:
        side = int(rng.choice([4, 6, 8]))
        spec = ModelSpec.lattice(2, side, SiteDistribution.uniform(1.0, rng.uniform(0.5, 6.0)))
        return spec.build(int(rng.integers(2**32)), 0)
    side = int(rng.choice([4, 6]))
    mesh = float(rng.choice([0.5, 0.25]))
    profile = SingleSiteProfile(delta_minus=1.0, delta_plus=1.0, floor=1.0, shape="plateau")
    spec = ModelSpec.continuum(
        1, side, mesh, SiteDistribution.uniform(1.0, rng.uniform(0.5, 4.0)), profile
    )
    return spec.build(int(rng.integers(2**32)), 0)


def check_counting_oracle(seed: int = 17, instances: int = 500) -> list[str]:
    """Inertia counts must agree exactly with counts read off the dense
    eigendecomposition, for thresholds a safe distance from eigenvalues."""
    rng = np.random.default_rng(seed)
    violations: list[str] = []
    for k in range(instances):
        H = _oracle_instance(rng, k)
        spec = eigen_full(H)
        vals = spec.values
        scale = max(1.0, float(np.max(np.abs(vals))))
        lo, hi = vals[0] - 0.5, vals[-1] + 0.5
        # thresholds away from eigenvalues (the <= convention is only
        # testable where floating-point ties cannot occur)
        picks = []
        while len(picks) < 4:
            c = float(rng.uniform(lo, hi))
            if np.min(np.abs(vals - c)) > 1e-9 * scale:
                picks.append(c)
        for c in picks:
            fast = count_at_most(H, c)
            oracle = int(np.searchsorted(vals, c, side="right"))
            if fast != oracle:
                violations.append(
                    f"instance {k}: count_at_most={fast} but eigensolve says {oracle} at {c:.6f}"
                )
        a, b = sorted(rng.choice(picks, size=2, replace=False))
        fast_iv = count_in(H, Interval(a, b))
        oracle_iv = int(
            np.searchsorted(vals, b, side="right") - np.searchsorted(vals, a, side="right")
        )
        if fast_iv != oracle_iv:
            violations.append(
                f"instance {k}: count_in={fast_iv} but eigensolve says {oracle_iv}"
            )
    return violations


def check_determinism(seed: int = 23, workers_pair: tuple[int, int] = (1, 3)) -> list[str]:
    """Re-running an ensemble with a different worker count must yield
    byte-identical tabular output, and re-sampling a trial must
    reproduce the field exactly."""
    from .estimates import wegner_experiment  # avoid a hard import cycle

    violations: list[str] = []
    spec = ModelSpec.lattice(1, 16, SiteDistribution.uniform(1.0, 2.0))
    reports = [
        wegner_experiment(
            spec,
            intervals=[Interval(1.9, 2.1)],
            trials=12,
            master_seed=seed,
            workers=w,
        )
        for w in workers_pair
    ]
    blobs = [r.csv_bytes() for r in reports]
    if blobs[0] != blobs[1]:
        violations.append(
            f"worker counts {workers_pair} produced different CSV bytes"
        )
    geom = TorusGeometry(1, 64)
    dist = SiteDistribution.uniform(1.0, 1.0)
    first = sample_disorder(dist, geom, seed, 5)
    second = sample_disorder(dist, geom, seed, 5)
    if not np.array_equal(first.values, second.values):
        violations.append("re-sampling the same (seed, trial) changed the field")
    other = sample_disorder(dist, geom, seed, 6)
    if np.array_equal(first.values, other.values):
        violations.append("distinct trials produced identical fields")
    return violations


def run_all_checks(fast: bool = False) -> dict[str, list[str]]:
    """Run every invariant suite; ``fast`` shrinks the instance counts
    so the whole thing stays well under a minute."""
    scale = 0.2 if fast else 1.0

    def k(n: int) -> int:
        return max(10, int(n * scale))

    return {
        "rank_one_interlacing": check_rank_one_interlacing(instances=k(1000)),
        "count_splitting": check_count_splitting(instances=k(500)),
        "trace_convexity": check_trace_convexity(instances=k(1000)),
        "counting_oracle": check_counting_oracle(instances=k(500)),
        "determinism": check_determinism(),
    }
