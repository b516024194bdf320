"""Scenario runner: builds seeded instances, runs the selected algorithms over
parameter sweeps, and serializes results and instances."""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .em import EmConfig, em_hygec_run
from .engine import HygecConfig, hygec_run
from .ensembles import (
    MatrixSpec,
    apply_channel,
    default_clip_range,
    gen_group_sparse_signal,
    gen_matrix,
    snr_to_noise_var,
)
from .oracle import nmse
from .types import (
    Channel,
    GroupStructure,
    HygecError,
    InvalidParameter,
    NUMERICAL_FAILURE,
    ProblemInstance,
)

SCENARIO_NAMES = ("iteration-trace", "condition-sweep", "mean-sweep", "rho-learning", "custom")
ALGORITHMS = ("hygec-known-rho", "em-hygec")
SWEEP_PARAMS = (None, "kappa", "mean")

CSV_COLUMNS = (
    "scenario", "seed", "sweep_value", "algorithm", "iteration",
    "nmse_db", "rho_est", "terminated", "wall_ms",
)

SCHEMA_VERSION = 1

# substream roles, so a sweep reuses the same randomness at every sweep point
_ROLE_MATRIX = 0
_ROLE_SIGNAL = 1
_ROLE_NOISE = 2


class SchemaMismatch(HygecError):
    pass


class IoError(HygecError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    m: int
    n: int
    k: int
    rho: float
    snr_db: float
    seeds: tuple[int, ...]
    algorithms: tuple[str, ...] = ("hygec-known-rho",)
    bits: int | None = None  # None: plain linear-noise channel
    matrix_kind: str = "iid"
    matrix_mean: float = 0.0
    kappa: float = 1.0
    sweep_param: str | None = None
    sweep_values: tuple[float, ...] = ()
    sigma_x_sq: float = 1.0
    rho_init: float = 0.01
    engine: HygecConfig = field(default_factory=HygecConfig)
    em: EmConfig = field(default_factory=EmConfig)

    def __post_init__(self):
        if self.name not in SCENARIO_NAMES:
            raise InvalidParameter(f"unknown scenario name {self.name!r}")
        if not self.seeds:
            raise InvalidParameter("scenario needs at least one seed")
        if not self.algorithms:
            raise InvalidParameter("scenario needs at least one algorithm")
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise InvalidParameter(f"unknown algorithm {alg!r}")
        if self.sweep_param not in SWEEP_PARAMS:
            raise InvalidParameter(f"unknown sweep parameter {self.sweep_param!r}")
        if self.m < 1 or self.n < self.m or self.k < 1 or self.k > self.n:
            raise InvalidParameter("need 1 <= m <= n and 1 <= k <= n")
        if not 0 < self.rho < 1:
            raise InvalidParameter("rho must lie in (0, 1)")

    @staticmethod
    def from_dict(d: dict) -> "Scenario":
        d = dict(d)
        engine = HygecConfig(**d.pop("engine", {}))
        em = EmConfig(**d.pop("em", {}))
        known = {
            "name", "m", "n", "k", "rho", "snr_db", "seeds", "algorithms", "bits",
            "matrix_kind", "matrix_mean", "kappa", "sweep_param", "sweep_values",
            "sigma_x_sq", "rho_init",
        }
        unknown = set(d) - known
        if unknown:
            raise InvalidParameter(f"unknown scenario fields: {sorted(unknown)}")
        for key in ("seeds", "algorithms", "sweep_values"):
            if key in d:
                d[key] = tuple(d[key])
        return Scenario(engine=engine, em=em, **d)

    @staticmethod
    def from_json(path: str) -> "Scenario":
        try:
            with open(path) as fh:
                return Scenario.from_dict(json.load(fh))
        except OSError as exc:
            raise IoError(str(exc)) from exc


def build_instance(scenario: Scenario, seed: int, sweep_value: float | None) -> ProblemInstance:
    """Generate the trial instance for one (seed, sweep point).

    Randomness is split into fixed substreams (matrix/signal/noise) keyed only
    by the seed, so every sweep point sees the same underlying draws. On the
    mean sweep the noise level is calibrated on the zero-mean base matrix, so
    changing the mean changes only the matrix, not the noise.
    """
    kappa = scenario.kappa
    mean = scenario.matrix_mean
    if scenario.sweep_param == "kappa" and sweep_value is not None:
        kappa = float(sweep_value)
    if scenario.sweep_param == "mean" and sweep_value is not None:
        mean = float(sweep_value)

    rng_matrix = np.random.default_rng([seed, _ROLE_MATRIX])
    rng_signal = np.random.default_rng([seed, _ROLE_SIGNAL])
    rng_noise = np.random.default_rng([seed, _ROLE_NOISE])

    kind = "conditioned" if scenario.sweep_param == "kappa" or scenario.matrix_kind == "conditioned" else "iid"
    if kind == "conditioned":
        spec = MatrixSpec("conditioned", scenario.m, scenario.n, kappa=kappa)
        H = gen_matrix(spec, rng_matrix)
        H_power_ref = H
    else:
        base = gen_matrix(MatrixSpec("iid", scenario.m, scenario.n), rng_matrix)
        H = base + mean if mean != 0.0 else base
        H_power_ref = base

    noise_var = snr_to_noise_var(H_power_ref, scenario.rho, scenario.sigma_x_sq, scenario.snr_db)

    groups = GroupStructure.even(scenario.n, scenario.k)
    x, xi = gen_group_sparse_signal(groups, scenario.rho, scenario.sigma_x_sq, rng_signal)

    if scenario.bits is None:
        channel = Channel.linear_awgn(noise_var)
    else:
        clip = default_clip_range(H, scenario.rho, scenario.sigma_x_sq, noise_var)
        channel = Channel.quantized(noise_var, scenario.bits, clip)

    y = apply_channel(H, x, channel, rng_noise)
    return ProblemInstance(
        H=H, y=y, groups=groups, channel=channel, sigma_x_sq=scenario.sigma_x_sq,
        x_true=x, xi_true=xi, true_rho=scenario.rho,
    )


def _rho_per_iteration(rho_trace: list[float], inner_counts: list[int], total: int) -> list[float]:
    # expand the per-outer-stage rho values to one entry per inner iteration
    out: list[float] = []
    for stage, count in enumerate(inner_counts):
        rho = rho_trace[min(stage, len(rho_trace) - 1)]
        out.extend([rho] * count)
    while len(out) < total:
        out.append(out[-1] if out else float("nan"))
    return out[:total]


def run_trial(scenario: Scenario, seed: int, sweep_value: float | None, algorithm: str) -> list[dict]:
    inst = build_instance(scenario, seed, sweep_value)
    start = time.perf_counter()
    if algorithm == "hygec-known-rho":
        _, _, _, x_pos, report = hygec_run(inst, scenario.rho, scenario.engine)
        rho_trace = [scenario.rho]
    else:
        x_pos, _, report = em_hygec_run(inst, scenario.rho_init, scenario.engine, scenario.em)
        rho_trace = report.rho_trace
    wall_ms = (time.perf_counter() - start) * 1e3

    total = report.inner_iterations
    if total == 0:
        # the first sweep already failed; still record the trial
        return [{
            "scenario": scenario.name,
            "seed": seed,
            "sweep_value": sweep_value,
            "algorithm": algorithm,
            "iteration": 1,
            "nmse_db": None,
            "rho_est": rho_trace[-1],
            "terminated": report.termination,
            "wall_ms": wall_ms,
        }]
    rho_per_iter = _rho_per_iteration(rho_trace, report.inner_counts, total)
    trace = report.nmse_trace if report.nmse_trace else [None] * total
    rows = []
    for i in range(total):
        rows.append({
            "scenario": scenario.name,
            "seed": seed,
            "sweep_value": sweep_value,
            "algorithm": algorithm,
            "iteration": i + 1,
            "nmse_db": trace[i] if i < len(trace) else None,
            "rho_est": rho_per_iter[i],
            "terminated": report.termination,
            "wall_ms": wall_ms,
        })
    return rows


def _trial_args(scenario: Scenario):
    sweep = list(scenario.sweep_values) if scenario.sweep_param else [None]
    for value in sweep:
        for algorithm in scenario.algorithms:
            for seed in scenario.seeds:
                yield (scenario, seed, value, algorithm)


def run_scenario(scenario: Scenario, threads: int = 1) -> list[dict]:
    """All trials of a scenario, serially or in a process pool.

    Row order is fixed (sweep value, then algorithm, then seed, then iteration)
    regardless of thread count.
    """
    args = list(_trial_args(scenario))
    if threads <= 1:
        batches = [run_trial(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            batches = list(pool.map(_run_trial_star, args))
    return [row for batch in batches for row in batch]


def _run_trial_star(a):
    return run_trial(*a)


def final_rows(rows: list[dict]) -> list[dict]:
    """Last-iteration row of each trial."""
    best: dict[tuple, dict] = {}
    for row in rows:
        key = (row["scenario"], row["seed"], row["sweep_value"], row["algorithm"])
        if key not in best or row["iteration"] > best[key]["iteration"]:
            best[key] = row
    return list(best.values())


def summarize(rows: list[dict]) -> list[dict]:
    """Median/mean of the final NMSE per (sweep value, algorithm), aggregated in
    the linear domain before conversion to dB."""
    groups: dict[tuple, list[dict]] = {}
    for row in final_rows(rows):
        groups.setdefault((row["sweep_value"], row["algorithm"]), []).append(row)
    summary = []
    for (sweep_value, algorithm), members in sorted(
        groups.items(), key=lambda kv: (_sort_key(kv[0][0]), kv[0][1])
    ):
        linear = [10.0 ** (r["nmse_db"] / 10.0) for r in members if r["nmse_db"] is not None]
        failures = sum(1 for r in members if r["terminated"] == NUMERICAL_FAILURE)
        summary.append({
            "sweep_value": sweep_value,
            "algorithm": algorithm,
            "trials": len(members),
            "failures": failures,
            "median_nmse_db": 10.0 * np.log10(np.median(linear)) if linear else None,
            "mean_nmse_db": 10.0 * np.log10(np.mean(linear)) if linear else None,
            "median_rho_est": float(np.median([r["rho_est"] for r in members])),
        })
    return summary


def _sort_key(value):
    return (0, 0.0) if value is None else (1, float(value))


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows: list[dict], path: str) -> None:
    try:
        with open(path, "w") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in rows:
                fh.write(",".join(_format_cell(row[c]) for c in CSV_COLUMNS) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def write_json(rows: list[dict], summary: list[dict], path: str) -> None:
    try:
        with open(path, "w") as fh:
            json.dump({"rows": rows, "summary": summary}, fh, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def export_instance(inst: ProblemInstance, path: str, seed: int | None = None) -> None:
    """Lossless npz dump of an instance, tagged with a schema version."""
    payload = {
        "schema_version": np.int64(SCHEMA_VERSION),
        "H": inst.H,
        "y": inst.y,
        "group_sizes": np.asarray(inst.groups.group_sizes, dtype=np.int64),
        "channel_kind": np.array(inst.channel.kind),
        "noise_var": np.float64(inst.channel.noise_var),
        "sigma_x_sq": np.float64(inst.sigma_x_sq),
    }
    if inst.channel.kind == "quantized":
        payload["bits"] = np.int64(inst.channel.bits)
        payload["clip_range"] = np.float64(inst.channel.clip_range)
    if inst.x_true is not None:
        payload["x_true"] = inst.x_true
    if inst.xi_true is not None:
        payload["xi_true"] = np.asarray(inst.xi_true, dtype=np.int64)
    if inst.true_rho is not None:
        payload["true_rho"] = np.float64(inst.true_rho)
    if seed is not None:
        payload["seed"] = np.int64(seed)
    try:
        np.savez(path, **payload)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def import_instance(path: str) -> ProblemInstance:
    try:
        data = np.load(path)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if "schema_version" not in data or int(data["schema_version"]) != SCHEMA_VERSION:
        raise SchemaMismatch(f"expected schema version {SCHEMA_VERSION}")
    kind = str(data["channel_kind"])
    noise_var = float(data["noise_var"])
    if kind == "quantized":
        channel = Channel.quantized(noise_var, int(data["bits"]), float(data["clip_range"]))
    else:
        channel = Channel.linear_awgn(noise_var)
    return ProblemInstance(
        H=data["H"],
        y=data["y"],
        groups=GroupStructure(tuple(int(s) for s in data["group_sizes"])),
        channel=channel,
        sigma_x_sq=float(data["sigma_x_sq"]),
        x_true=data["x_true"] if "x_true" in data else None,
        xi_true=data["xi_true"] if "xi_true" in data else None,
        true_rho=float(data["true_rho"]) if "true_rho" in data else None,
    )


def trial_final_nmse(scenario: Scenario, seed: int, sweep_value: float | None, algorithm: str):
    """Convenience for tests: (final nmse_db or None, termination, rho_final)."""
    inst = build_instance(scenario, seed, sweep_value)
    if algorithm == "hygec-known-rho":
        _, _, _, x_pos, report = hygec_run(inst, scenario.rho, scenario.engine)
        rho_final = scenario.rho
    else:
        x_pos, rho_final, report = em_hygec_run(
            inst, scenario.rho_init, scenario.engine, scenario.em
        )
    value = None
    if inst.x_true is not None and np.any(inst.x_true != 0):
        value = nmse(x_pos, inst.x_true)
    return value, report.termination, rho_final
