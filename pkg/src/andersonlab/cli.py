"""Command-line driver: configuration, orchestration, persistence.

One YAML file describes a run in three blocks::

    model:        # what operator ensemble to draw
      mode: lattice
      dimension: 1
      side: 100
      distribution: {kind: uniform, support_max: 1.0, coupling: 1.0}
    experiment:   # what to measure
      kind: wegner
      intervals: [[4.3, 4.35]]
    run:          # how hard to try
      trials: 2000
      seed: 7
      workers: 2
      out: out/wegner

``andersonlab run --config file.yaml`` validates everything before any
compute starts, runs the experiment, and writes ``report.json``, the
tabular CSVs, gnuplot-friendly ``.dat`` histograms, the resolved config,
and a short ``summary.txt`` into the output directory.

Exit codes: 0 success, 2 validation error, 3 numeric error,
4 statistical-gate refusal (a poisson run whose localization gate fails,
unless --force).  ``andersonlab selftest`` runs the deterministic
property suites and exits 0 only when no invariant is violated.

Precedence for seed/trials/workers/out: command-line flag beats
environment variable (ANDERSONLAB_SEED and friends) beats config file.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .dos import estimate_density, estimate_ids, lebesgue_point_scan
from .errors import (
    AndersonLabError,
    ConfigError,
    InsufficientDataError,
    NumericError,
)
from .estimates import (
    fixed_site_wegner,
    minami_experiment,
    simplicity_experiment,
    spectral_averaging_check,
    spectral_shift_experiment,
    wegner_experiment,
)
from .localization import localization_gate
from .model import SiteDistribution
from .operators import ModelSpec, SingleSiteProfile
from .pointprocess import (
    limit_conditions_check,
    local_process,
    poisson_counts_test,
    spacing_test,
)
from .properties import run_all_checks

__all__ = ["main", "ExperimentConfig", "model_from_config"]

_MISSING = object()

_KINDS = (
    "wegner",
    "minami",
    "spectral_averaging",
    "fixed_site_wegner",
    "spectral_shift",
    "simplicity",
    "poisson",
    "conditions",
    "dos",
    "lebesgue_scan",
    "localize",
    "selftest",
)


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def cfg_get(tree: dict, dotted: str, kind: str = "any", default=_MISSING):
    """Fetch ``a.b.c`` from a nested mapping; every complaint names the
    dotted path so a bad config is self-locating."""
    node = tree
    parts = dotted.split(".")
    for p in parts[:-1]:
        nxt = node.get(p) if isinstance(node, dict) else None
        if nxt is None:
            if default is not _MISSING:
                return default
            raise ConfigError(f"{dotted}: missing required block {p!r}")
        node = nxt
    if not isinstance(node, dict):
        raise ConfigError(f"{dotted}: parent of {parts[-1]!r} is not a mapping")
    value = node.get(parts[-1])
    if value is None:
        if default is not _MISSING:
            return default
        raise ConfigError(f"{dotted}: required {kind} is missing")
    try:
        if kind == "int":
            if isinstance(value, bool) or int(value) != value:
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "str":
            if not isinstance(value, str):
                raise ValueError
            return value
        if kind == "bool":
            if not isinstance(value, bool):
                raise ValueError
            return value
        if kind == "list":
            if not isinstance(value, (list, tuple)):
                raise ValueError
            return list(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{dotted}: expected {kind}, got {value!r}") from None
    return value


@dataclass
class ExperimentConfig:
    """The validated YAML tree plus helpers; round-trips losslessly."""

    data: dict

    @staticmethod
    def from_file(path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc}") from None
        return ExperimentConfig.from_yaml(text)

    @staticmethod
    def from_yaml(text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config: not valid YAML: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a mapping")
        return ExperimentConfig(data)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    def sha256(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @property
    def kind(self) -> str:
        raw = cfg_get(self.data, "experiment.kind", "str")
        kind = raw.replace("-", "_")
        if kind == "localization":
            kind = "localize"
        if kind not in _KINDS:
            raise ConfigError(
                f"experiment.kind: unknown kind {raw!r}; choose one of {', '.join(_KINDS)}"
            )
        return kind


def _distribution_from_config(tree: dict) -> SiteDistribution:
    kind = cfg_get(tree, "model.distribution.kind", "str", "uniform")
    coupling = cfg_get(tree, "model.distribution.coupling", "float", 1.0)
    if kind == "uniform":
        support = cfg_get(tree, "model.distribution.support_max", "float", 1.0)
        return SiteDistribution.uniform(support, coupling)
    if kind == "uniform_like":
        breaks = cfg_get(tree, "model.distribution.breaks", "list")
        densities = cfg_get(tree, "model.distribution.densities", "list")
        return SiteDistribution.uniform_like(breaks, densities, coupling)
    if kind == "quantile_table":
        u = cfg_get(tree, "model.distribution.u", "list")
        q = cfg_get(tree, "model.distribution.q", "list")
        return SiteDistribution.from_quantile_table(u, q, coupling)
    raise ConfigError(
        f"model.distribution.kind: unknown kind {kind!r}; "
        "choose uniform, uniform_like or quantile_table"
    )


def model_from_config(tree: dict) -> ModelSpec:
    mode = cfg_get(tree, "model.mode", "str", "lattice")
    dimension = cfg_get(tree, "model.dimension", "int")
    side = cfg_get(tree, "model.side", "int")
    dist = _distribution_from_config(tree)
    if mode == "lattice":
        return ModelSpec.lattice(dimension, side, dist)
    if mode == "continuum":
        mesh = cfg_get(tree, "model.mesh", "float")
        profile = SingleSiteProfile(
            delta_minus=cfg_get(tree, "model.profile.delta_minus", "float"),
            delta_plus=cfg_get(tree, "model.profile.delta_plus", "float"),
            floor=cfg_get(tree, "model.profile.floor", "float", 1.0),
            shape=cfg_get(tree, "model.profile.shape", "str", "plateau"),
        )
        periodic = cfg_get(tree, "model.periodic_potential", "list", None)
        table = np.asarray(periodic, dtype=float) if periodic is not None else None
        return ModelSpec.continuum(dimension, side, mesh, dist, profile, table)
    raise ConfigError(f"model.mode: expected 'lattice' or 'continuum', got {mode!r}")


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> None:
    """flag > environment > file, materialized back into the tree so the
    persisted config shows what actually ran."""
    run = config.data.setdefault("run", {})
    spec = [
        ("seed", "ANDERSONLAB_SEED", int),
        ("trials", "ANDERSONLAB_TRIALS", int),
        ("workers", "ANDERSONLAB_WORKERS", int),
        ("out", "ANDERSONLAB_OUT", str),
    ]
    for name, env_name, cast in spec:
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            run[name] = cast(flag_value)
            continue
        env_value = os.environ.get(env_name)
        if env_value is not None:
            try:
                run[name] = cast(env_value)
            except ValueError:
                raise ConfigError(
                    f"run.{name}: environment override {env_name}={env_value!r} "
                    f"is not a valid {cast.__name__}"
                ) from None


# ---------------------------------------------------------------------------
# experiment runners
# ---------------------------------------------------------------------------


@dataclass
class RunOutput:
    result: dict
    files: dict = field(default_factory=dict)
    summary: list = field(default_factory=list)
    exit_code: int = 0


def _interval_list(tree: dict, dotted: str) -> list:
    raw = cfg_get(tree, dotted, "list")
    out = []
    for item in raw:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise ConfigError(f"{dotted}: each interval must be a [lo, hi] pair")
        out.append((float(item[0]), float(item[1])))
    return out


def _trials_for_sides(tree: dict, run_trials: int, n_sides: int):
    per_side = cfg_get(tree, "experiment.trials_per_side", "list", None)
    if per_side is None:
        return run_trials
    if len(per_side) != n_sides:
        raise ConfigError(
            "experiment.trials_per_side: length must match experiment.sides"
        )
    return [int(t) for t in per_side]


def _cells_summary(report) -> list:
    lines = []
    for c in report.cells:
        lines.append(
            f"  ({c.interval.lo:g}, {c.interval.hi:g}] volume {c.volume:g}: "
            f"estimate {c.estimate:.6g} +- {c.stderr:.2g} vs bound {c.bound:.6g} "
            f"[{'pass' if c.passed else 'FAIL'}]"
        )
    return lines


def _run_counting(kind, model, tree, run_trials, seed, workers) -> RunOutput:
    intervals = _interval_list(tree, "experiment.intervals")
    sides = cfg_get(tree, "experiment.sides", "list", None)
    trials = _trials_for_sides(
        tree, run_trials, len(sides) if sides is not None else 1
    )
    fn = wegner_experiment if kind == "wegner" else minami_experiment
    report = fn(model, intervals, trials, seed, sides=sides, workers=workers)
    return RunOutput(
        result=report.to_json_dict(),
        files={"cells.csv": report.csv_bytes()},
        summary=[f"{kind}: all cells pass = {report.all_passed()}"]
        + _cells_summary(report),
    )


def _run_spectral_averaging(model, tree, run_trials, seed, workers) -> RunOutput:
    intervals = _interval_list(tree, "experiment.intervals")
    site = cfg_get(tree, "experiment.site", "int", 0)
    report = spectral_averaging_check(
        model, intervals, run_trials, seed, site=site, workers=workers
    )
    return RunOutput(
        result=report.to_json_dict(),
        files={"cells.csv": report.csv_bytes()},
        summary=[f"spectral_averaging: all cells pass = {report.all_passed()}"]
        + _cells_summary(report),
    )


def _run_fixed_site(model, tree, run_trials, seed, workers) -> RunOutput:
    intervals = _interval_list(tree, "experiment.intervals")
    site = cfg_get(tree, "experiment.site", "int", 0)
    value = cfg_get(tree, "experiment.value", "float", 0.0)
    report = fixed_site_wegner(
        model, intervals, run_trials, seed, site=site, value=value, workers=workers
    )
    return RunOutput(
        result=report.to_json_dict(),
        files={"cells.csv": report.csv_bytes()},
        summary=[f"fixed_site_wegner: all cells pass = {report.all_passed()}"]
        + _cells_summary(report),
    )


def _run_spectral_shift(model, tree, run_trials, seed, workers) -> RunOutput:
    b_values = [float(b) for b in cfg_get(tree, "experiment.b_values", "list")]
    report = spectral_shift_experiment(
        model,
        b_values,
        run_trials,
        seed,
        delta=cfg_get(tree, "experiment.delta", "float", 0.05),
        tau=cfg_get(tree, "experiment.tau", "float", 1.0),
        site=cfg_get(tree, "experiment.site", "int", 0),
        constant_ref=cfg_get(tree, "experiment.constant_ref", "float", 1.0),
        workers=workers,
    )
    return RunOutput(
        result=report.to_json_dict(),
        files={"cells.csv": report.csv_bytes()},
        summary=[
            f"spectral_shift: all cells pass = {report.all_passed()}, "
            f"pathwise range violations = {report.extras['range_violations']}"
        ]
        + _cells_summary(report),
    )


def _run_simplicity(model, tree, run_trials, seed, workers) -> RunOutput:
    interval = _interval_list(tree, "experiment.intervals")[0]
    exponent = cfg_get(tree, "experiment.exponent", "float", 3.0)
    sides = cfg_get(tree, "experiment.sides", "list")
    trials = _trials_for_sides(tree, run_trials, len(sides))
    report = simplicity_experiment(
        model, interval, exponent, sides, trials, seed, workers=workers
    )
    files = {"cells.csv": report.csv_bytes()}
    for side, hist in report.extras["gap_histograms"].items():
        edges, counts = hist["edges"], hist["counts"]
        lines = [
            f"{repr((edges[i] + edges[i + 1]) / 2.0)} {counts[i]}"
            for i in range(len(counts))
        ]
        files[f"mingap_hist_L{side}.dat"] = ("\n".join(lines) + "\n").encode()
    slope = report.extras["slope"]
    return RunOutput(
        result=report.to_json_dict(),
        files=files,
        summary=[
            f"simplicity: strictly decreasing = {report.extras['strictly_decreasing']}, "
            f"log-log slope = {slope if slope is None else round(slope, 4)}"
        ]
        + _cells_summary(report),
    )


def _run_dos(model, tree, run_trials, seed, workers) -> RunOutput:
    energies = cfg_get(tree, "experiment.energies", "list", None)
    if energies is None:
        window = cfg_get(tree, "experiment.window", "list")
        points = cfg_get(tree, "experiment.points", "int", 20)
        if len(window) != 2:
            raise ConfigError("experiment.window: expected [lo, hi]")
        energies = np.linspace(float(window[0]), float(window[1]), points)
    curve = estimate_ids(model, energies, run_trials, seed, workers=workers)
    payload = {
        "side": curve.side,
        "trials": curve.trials,
        "model": curve.model,
        "energies": [float(e) for e in curve.energies],
        "ids": [float(v) for v in curve.values],
        "stderrs": [float(s) for s in curve.stderrs],
    }
    return RunOutput(
        result=payload,
        files={"curve.csv": curve.csv_bytes()},
        summary=[
            f"dos: IDS on {len(curve.energies)} energies, side {curve.side}, "
            f"{curve.trials} trials"
        ],
    )


def _run_lebesgue_scan(model, tree, run_trials, seed, workers) -> RunOutput:
    window = cfg_get(tree, "experiment.window", "list")
    if len(window) != 2:
        raise ConfigError("experiment.window: expected [lo, hi]")
    points = lebesgue_point_scan(
        model,
        (float(window[0]), float(window[1])),
        run_trials,
        seed,
        candidates=cfg_get(tree, "experiment.candidates", "int", 21),
        bandwidth=cfg_get(tree, "experiment.bandwidth", "float", None),
        min_density=cfg_get(tree, "experiment.min_density", "float", 0.05),
        stability_tol=cfg_get(tree, "experiment.stability_tol", "float", 0.10),
        workers=workers,
    )
    import csv as _csv
    import io as _io

    buf = _io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(["energy", "density", "stderr", "spread", "admissible"])
    for p in points:
        writer.writerow(
            [repr(p.energy), repr(p.density), repr(p.stderr), repr(p.spread), int(p.admissible)]
        )
    best = points[0]
    return RunOutput(
        result={
            "candidates": [
                {
                    "energy": p.energy,
                    "density": p.density,
                    "stderr": p.stderr,
                    "spread": None if math.isinf(p.spread) else p.spread,
                    "admissible": p.admissible,
                }
                for p in points
            ],
            "best": {"energy": best.energy, "density": best.density, "admissible": best.admissible},
        },
        files={"scan.csv": buf.getvalue().encode()},
        summary=[
            f"lebesgue_scan: best candidate E = {best.energy:.6g} "
            f"(density {best.density:.4g}, admissible = {best.admissible})"
        ],
    )


def _gate_from_config(model, tree, seed, workers):
    energy = cfg_get(tree, "experiment.energy", "float")
    return localization_gate(
        model,
        energy,
        cfg_get(tree, "experiment.gate.seed", "int", seed + 101),
        s=cfg_get(tree, "experiment.gate.s", "float", 0.2),
        eta=cfg_get(tree, "experiment.gate.eta", "float", 1e-3),
        separations=cfg_get(tree, "experiment.gate.separations", "list", [4, 8, 16, 32]),
        moment_trials=cfg_get(tree, "experiment.gate.moment_trials", "int", 200),
        ipr_trials=cfg_get(tree, "experiment.gate.ipr_trials", "int", 60),
        ipr_halfwidth=cfg_get(tree, "experiment.gate.ipr_halfwidth", "float", 0.1),
        ipr_threshold=cfg_get(tree, "experiment.gate.ipr_threshold", "float", 0.1),
        side=cfg_get(tree, "experiment.gate.side", "int", None),
        workers=workers,
    )


def _run_localize(model, tree, run_trials, seed, workers) -> RunOutput:
    tree.setdefault("experiment", {}).setdefault("gate", {}).setdefault(
        "moment_trials", run_trials
    )
    gate = _gate_from_config(model, tree, seed, workers)
    verdict = "localized" if gate.passed else "NOT localized"
    curve = gate.moment_curve
    return RunOutput(
        result={"gate": gate.to_json_dict()},
        files={"decay.csv": curve.csv_bytes()},
        summary=[
            f"localize: {verdict} at E = {gate.energy:g} "
            f"(rate {curve.rate:.4g} +- {curve.rate_stderr:.2g}, "
            f"R^2 {curve.r_squared:.3f}, median IPR {gate.median_ipr:.4g})"
        ],
    )


def _run_poisson(model, tree, run_trials, seed, workers, force) -> RunOutput:
    energy = cfg_get(tree, "experiment.energy", "float")
    window = cfg_get(tree, "experiment.window", "float", 8.0)
    gate = _gate_from_config(model, tree, seed, workers)
    gate_dict = gate.to_json_dict()
    if not gate.passed and not force:
        return RunOutput(
            result={"gate": gate_dict, "refused": True},
            files={"decay.csv": gate.moment_curve.csv_bytes()},
            summary=[
                f"poisson: localization gate FAILED at E = {energy:g}; "
                "refusing to compare with the Poisson benchmark (--force to override)"
            ],
            exit_code=4,
        )

    n_hat = cfg_get(tree, "experiment.n_hat", "float", None)
    if n_hat is None:
        density = estimate_density(
            model,
            energy,
            cfg_get(tree, "experiment.density_trials", "int", max(100, run_trials // 4)),
            seed + 7,
            workers=workers,
        )
        n_hat = density.value
    ensemble = local_process(model, energy, window, run_trials, seed, workers=workers)
    count_intervals = cfg_get(tree, "experiment.count_intervals", "list", None)
    if count_intervals is None:
        b = cfg_get(tree, "experiment.count_window", "float", min(2.0, window / 2.0))
        count_intervals = [(-b, b)]
    else:
        count_intervals = [(float(lo), float(hi)) for lo, hi in count_intervals]
    counts = poisson_counts_test(ensemble, count_intervals, n_hat)
    try:
        gaps = spacing_test(ensemble, n_hat)
        gaps_dict = gaps.to_json_dict()
        gaps_line = (
            f"  gaps:   KS = {gaps.ks_stat:.4g} vs critical {gaps.ks_critical:.4g}, "
            f"reject = {gaps.reject}"
        )
    except InsufficientDataError as exc:
        gaps_dict = {"skipped": str(exc)}
        gaps_line = f"  gaps:   skipped ({exc})"

    mean_count = float(np.mean(ensemble.counts(count_intervals)))
    hist_lines = [f"{k} {v}" for k, v in sorted(counts.histogram.items())]
    gap_arr = ensemble.pooled_gaps()
    edges = np.linspace(0.0, float(gap_arr.max()), 41) if gap_arr.size else np.array([0.0, 1.0])
    gh, _ = np.histogram(gap_arr, bins=edges)
    gap_lines = [
        f"{repr(float((edges[i] + edges[i + 1]) / 2.0))} {int(gh[i])}"
        for i in range(gh.size)
    ]
    return RunOutput(
        result={
            "gate": gate_dict,
            "forced": bool(not gate.passed),
            "energy": energy,
            "n_hat": n_hat,
            "window": window,
            "count_intervals": [list(iv) for iv in count_intervals],
            "mean_count": mean_count,
            "counts_test": counts.to_json_dict(),
            "spacing_test": gaps_dict,
        },
        files={
            "points.csv": ensemble.points_csv_bytes(),
            "gaps.csv": ensemble.gaps_csv_bytes(),
            "counts_hist.dat": ("\n".join(hist_lines) + "\n").encode(),
            "gaps_hist.dat": ("\n".join(gap_lines) + "\n").encode(),
        },
        summary=[
            f"poisson: E = {energy:g}, n_hat = {n_hat:.4g}, nu = {counts.nu:.4g}",
            f"  counts: TV = {counts.tv_distance:.4g}, chi2 p = {counts.chi2_pvalue:.3g}, "
            f"reject = {counts.reject}",
            gaps_line,
        ],
    )


def _run_conditions(model, tree, run_trials, seed, workers) -> RunOutput:
    energy = cfg_get(tree, "experiment.energy", "float")
    interval = _interval_list(tree, "experiment.intervals")[0]
    sides = cfg_get(tree, "experiment.sides", "list")
    n_hat = cfg_get(tree, "experiment.n_hat", "float")
    trials = _trials_for_sides(tree, run_trials, len(sides))
    report = limit_conditions_check(
        model,
        energy,
        interval,
        sides,
        n_hat,
        trials,
        seed,
        a=cfg_get(tree, "experiment.a", "float", 0.5),
        workers=workers,
    )
    return RunOutput(
        result=report.to_json_dict(),
        files={"conditions.csv": report.csv_bytes()},
        summary=[f"conditions: passed = {report.passed}, verdicts = {report.verdicts}"],
    )


def _run_selftest(fast: bool) -> int:
    t0 = time.perf_counter()
    results = run_all_checks(fast=fast)
    total = 0
    for name, violations in results.items():
        status = "ok" if not violations else f"{len(violations)} violation(s)"
        print(f"selftest {name}: {status}")
        for v in violations[:5]:
            print(f"    {v}")
        total += len(violations)
    print(f"selftest finished in {time.perf_counter() - t0:.1f}s: {total} violation(s)")
    return 0 if total == 0 else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _run(args: argparse.Namespace) -> int:
    config = ExperimentConfig.from_file(args.config)
    _apply_overrides(config, args)
    kind = config.kind
    if kind == "selftest":
        return _run_selftest(fast=True)

    tree = config.data
    run_trials = cfg_get(tree, "run.trials", "int")
    if run_trials <= 0:
        raise ConfigError("run.trials: must be a positive integer")
    seed = cfg_get(tree, "run.seed", "int")
    workers = cfg_get(tree, "run.workers", "int", os.cpu_count() or 1)
    if workers <= 0:
        raise ConfigError("run.workers: must be a positive integer")
    out_dir = Path(cfg_get(tree, "run.out", "str", f"out/{kind}"))
    model = model_from_config(tree)

    t0 = time.perf_counter()
    if kind in ("wegner", "minami"):
        output = _run_counting(kind, model, tree, run_trials, seed, workers)
    elif kind == "spectral_averaging":
        output = _run_spectral_averaging(model, tree, run_trials, seed, workers)
    elif kind == "fixed_site_wegner":
        output = _run_fixed_site(model, tree, run_trials, seed, workers)
    elif kind == "spectral_shift":
        output = _run_spectral_shift(model, tree, run_trials, seed, workers)
    elif kind == "simplicity":
        output = _run_simplicity(model, tree, run_trials, seed, workers)
    elif kind == "dos":
        output = _run_dos(model, tree, run_trials, seed, workers)
    elif kind == "lebesgue_scan":
        output = _run_lebesgue_scan(model, tree, run_trials, seed, workers)
    elif kind == "localize":
        output = _run_localize(model, tree, run_trials, seed, workers)
    elif kind == "poisson":
        output = _run_poisson(model, tree, run_trials, seed, workers, args.force)
    elif kind == "conditions":
        output = _run_conditions(model, tree, run_trials, seed, workers)
    else:  # pragma: no cover - kind is validated above
        raise ConfigError(f"experiment.kind: unhandled kind {kind!r}")

    report = {
        "version": f"v{__version__}",
        "config_sha256": config.sha256(),
        "kind": kind,
        "exit_code": output.exit_code,
        "wall_seconds": time.perf_counter() - t0,
        "result": output.result,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    (out_dir / "config.yaml").write_text(config.to_yaml())
    for name, payload in output.files.items():
        (out_dir / name).write_bytes(payload)
    summary = "\n".join(
        [f"{kind} run (seed {seed}, {run_trials} trials, {workers} worker(s))"]
        + output.summary
    )
    (out_dir / "summary.txt").write_text(summary + "\n")
    print(summary)
    print(f"artifacts written to {out_dir}")
    return output.exit_code


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="andersonlab",
        description="Ensemble experiments on random Schroedinger operators (finite tori).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the experiment described by a YAML config")
    run_p.add_argument("--config", required=True, help="path to the YAML config file")
    run_p.add_argument("--seed", type=int, help="override run.seed")
    run_p.add_argument("--trials", type=int, help="override run.trials")
    run_p.add_argument("--workers", type=int, help="override run.workers")
    run_p.add_argument("--out", help="override run.out (output directory)")
    run_p.add_argument(
        "--force",
        action="store_true",
        help="proceed past a failed statistical gate (poisson runs)",
    )

    st_p = sub.add_parser("selftest", help="run the deterministic property suites")
    st_p.add_argument(
        "--thorough",
        action="store_true",
        help="full-size suites instead of the fast (<60 s) subset",
    )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return _run_selftest(fast=not args.thorough)
        return _run(args)
    except ConfigError as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error (numeric): {exc}", file=sys.stderr)
        return 3
    except AndersonLabError as exc:
        print(f"error (validation): {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
