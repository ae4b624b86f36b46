"""Benchmark harness: overhead metric, the three experiments, suite runner.

Overhead is the wall time a workflow spends outside the composed functions:
wall time minus the measure of the union of the composed (non-orchestrator)
functions' billed intervals. For a chain that is wall time minus the sum of
the task durations; for an ideal fan-out it is wall time minus the longest
branch. Orchestration function time always counts as overhead.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .engines import engine_class
from .engines.base import WorkflowResult
from .errors import EngineError, FaasflowError, IncompleteTrace
from .profiles import CalibrationProfile, profile_for_engine
from .runtime import FunctionDef, sleep_behavior
from .workflow import fan_out, seq

SCENARIO_SEQUENCE = "Sequence"
SCENARIO_PARALLEL = "Parallel"
SCENARIO_STATE = "StatePassing"

DEFAULT_NS = (5, 10, 20, 40, 80)


def merged_length(intervals: Iterable[tuple[int, int]]) -> int:
    """Total length of the union of half-open intervals."""
    total = 0
    current_start = None
    current_end = None
    for start, end in sorted(intervals):
        if current_end is None or start > current_end:
            if current_end is not None:
                total += current_end - current_start
            current_start, current_end = start, end
        elif end > current_end:
            current_end = end
    if current_end is not None:
        total += current_end - current_start
    return total


def overhead(result: WorkflowResult) -> int:
    """Wall time outside the composed functions, in virtual ms."""
    intervals: list[tuple[int, int]] = []
    for record in result.trace:
        if record.orchestrator:
            continue
        if not record.done:
            raise IncompleteTrace(f"record {record.id} has not finished")
        intervals.extend(record.billed_intervals)
    return result.wall_time_ms - merged_length(intervals)


def overhead_from_trace(records: list[dict]) -> int:
    """Recompute overhead from an exported trace file's records.

    The workflow span is taken as first submit to last end over all records.
    """
    if not records:
        raise IncompleteTrace("trace is empty")
    wall_start = min(r["submit_time"] for r in records)
    wall_end = max(r["end_time"] for r in records if r["end_time"] is not None)
    intervals = []
    for r in records:
        if not r["orchestrator"]:
            intervals.extend((a, b) for a, b in r["billed_intervals"])
    return (wall_end - wall_start) - merged_length(intervals)


@dataclass
class OverheadSample:
    engine: str
    scenario: str
    n: int
    payload_bytes: int
    repetitions: int
    overhead_ms: list[int] = field(default_factory=list)
    error: str | None = None

    @property
    def mean_ms(self) -> float:
        return statistics.fmean(self.overhead_ms) if self.overhead_ms else float("nan")

    @property
    def stdev_ms(self) -> float:
        if len(self.overhead_ms) < 2:
            return 0.0
        return statistics.stdev(self.overhead_ms)


@dataclass
class StatePassingSample:
    baseline: OverheadSample
    loaded: OverheadSample

    @property
    def increase_pct(self) -> float:
        if not self.baseline.overhead_ms or not self.baseline.mean_ms:
            return float("nan")
        return 100.0 * (self.loaded.mean_ms - self.baseline.mean_ms) / self.baseline.mean_ms


def _make_engine(engine_id: str, profile: CalibrationProfile | None,
                 seed: int, jitter: float, **overrides):
    profile = profile or profile_for_engine(engine_id)
    cls = engine_class(engine_id)
    if jitter:
        overrides.setdefault("jitter", jitter)
    overrides.setdefault("seed", seed)
    return cls.from_profile(profile, **overrides)


def _payload_of_size(nbytes: int):
    """A payload whose canonical encoding is exactly nbytes (0 gives None)."""
    if nbytes <= 0:
        return None
    if nbytes < 2:
        raise ValueError("payload sizes below 2 bytes cannot be represented")
    return "x" * (nbytes - 2)


def bench_sequence(engine_id: str, n: int, profile: CalibrationProfile | None = None,
                   repetitions: int = 10, seed: int = 0, jitter: float = 0.0) -> OverheadSample:
    """Overhead of seq(n, sleep 1s); engines over their action limit report N/A."""
    sample = OverheadSample(engine_id, SCENARIO_SEQUENCE, n, 0, repetitions)
    spec = seq(n, "sleep1s")
    functions = [FunctionDef("sleep1s", sleep_behavior(1000))]
    for rep in range(repetitions):
        engine = _make_engine(engine_id, profile, seed + rep, jitter)
        try:
            result = engine.run(spec, None, functions=functions)
        except EngineError as err:
            sample.error = f"{type(err).__name__}: {err}"
            sample.overhead_ms = []
            break
        sample.overhead_ms.append(overhead(result))
    return sample


def bench_parallel(engine_id: str, n: int, profile: CalibrationProfile | None = None,
                   repetitions: int = 10, seed: int = 0, jitter: float = 0.0) -> OverheadSample:
    """Overhead of fan_out(n, sleep 20s); ideal runtime is 20s for any n."""
    sample = OverheadSample(engine_id, SCENARIO_PARALLEL, n, 0, repetitions)
    spec = fan_out(n, "sleep20s")
    functions = [FunctionDef("sleep20s", sleep_behavior(20_000))]
    overrides = {}
    if engine_id == "adf":
        # mirrors the measurement setup: event sourcing ran with extended sessions
        overrides["extended_sessions"] = True
    for rep in range(repetitions):
        engine = _make_engine(engine_id, profile, seed + rep, jitter, **overrides)
        result = engine.run(spec, None, functions=functions)
        sample.overhead_ms.append(overhead(result))
    return sample


def bench_state(engine_id: str, profile: CalibrationProfile | None = None,
                payload_bytes: int = 32_768, repetitions: int = 10,
                seed: int = 0, jitter: float = 0.0) -> StatePassingSample:
    """Overhead of a 5-step chain of sleep-1s echoes, empty vs sized payload."""
    spec = seq(5, "relay1s")
    functions = [FunctionDef("relay1s", sleep_behavior(1000))]
    samples = []
    for size in (0, payload_bytes):
        sample = OverheadSample(engine_id, SCENARIO_STATE, 5, size, repetitions)
        payload = _payload_of_size(size)
        for rep in range(repetitions):
            engine = _make_engine(engine_id, profile, seed + rep, jitter)
            result = engine.run(spec, payload, functions=functions)
            sample.overhead_ms.append(overhead(result))
        samples.append(sample)
    return StatePassingSample(baseline=samples[0], loaded=samples[1])


@dataclass
class SuiteConfig:
    scenarios: tuple[str, ...] = ("sequence", "parallel", "state")
    sequence_engines: tuple[str, ...] = ("sequences", "composer", "asf", "adf")
    parallel_engines: tuple[str, ...] = ("asf", "adf", "suspend")
    state_engines: tuple[str, ...] = ("sequences", "composer", "asf", "adf")
    ns: tuple[int, ...] = DEFAULT_NS
    parallel_ns: tuple[int, ...] = DEFAULT_NS
    payload_bytes: int = 32_768
    repetitions: int = 10
    seed: int = 0
    jitter: float = 0.0
    profiles: dict[str, CalibrationProfile] = field(default_factory=dict)

    def profile_for(self, engine_id: str) -> CalibrationProfile:
        return self.profiles.get(engine_id) or profile_for_engine(engine_id)


def suite_config_from_mapping(mapping: dict) -> SuiteConfig:
    config = SuiteConfig()
    lists = {"scenarios", "sequence_engines", "parallel_engines", "state_engines"}
    int_lists = {"ns", "parallel_ns"}
    for key, value in mapping.items():
        if not hasattr(config, key):
            raise FaasflowError(f"unknown suite key {key!r}")
        if key in lists:
            setattr(config, key, tuple(str(v).strip() for v in str(value).split(",")))
        elif key in int_lists:
            setattr(config, key, tuple(int(v) for v in str(value).split(",")))
        else:
            setattr(config, key, type(getattr(config, key))(value))
    return config


@dataclass
class SuiteReport:
    samples: list[OverheadSample]
    files: list[Path]
    errors: list[str]


def run_suite(config: SuiteConfig, out_dir) -> SuiteReport:
    """Run the configured scenarios; write per-scenario CSVs, a summary CSV,
    and one line chart per figure. Scenario errors are recorded and the
    suite continues."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples: list[OverheadSample] = []
    errors: list[str] = []
    files: list[Path] = []

    by_scenario: dict[str, list[OverheadSample]] = {}

    def record(sample: OverheadSample) -> None:
        samples.append(sample)
        by_scenario.setdefault(sample.scenario, []).append(sample)
        if sample.error and "TooManyActions" not in sample.error:
            errors.append(f"{sample.engine}/{sample.scenario}/n={sample.n}: {sample.error}")

    if "sequence" in config.scenarios:
        for engine_id in config.sequence_engines:
            for n in config.ns:
                try:
                    record(bench_sequence(engine_id, n, config.profile_for(engine_id),
                                          config.repetitions, config.seed, config.jitter))
                except FaasflowError as err:
                    errors.append(f"{engine_id}/sequence/n={n}: {err}")

    if "parallel" in config.scenarios:
        for engine_id in config.parallel_engines:
            for n in config.parallel_ns:
                try:
                    record(bench_parallel(engine_id, n, config.profile_for(engine_id),
                                          config.repetitions, config.seed, config.jitter))
                except FaasflowError as err:
                    errors.append(f"{engine_id}/parallel/n={n}: {err}")

    if "state" in config.scenarios:
        for engine_id in config.state_engines:
            try:
                pair = bench_state(engine_id, config.profile_for(engine_id),
                                   config.payload_bytes, config.repetitions,
                                   config.seed, config.jitter)
                record(pair.baseline)
                record(pair.loaded)
            except FaasflowError as err:
                errors.append(f"{engine_id}/state: {err}")

    scenario_files = {
        SCENARIO_SEQUENCE: "sequence.csv",
        SCENARIO_PARALLEL: "parallel.csv",
        SCENARIO_STATE: "state.csv",
    }
    for scenario, filename in scenario_files.items():
        rows = by_scenario.get(scenario)
        if rows:
            files.append(_write_samples_csv(out_dir / filename, rows))

    files.append(_write_summary_csv(out_dir / "summary.csv", samples))

    if SCENARIO_SEQUENCE in by_scenario:
        files.append(_write_chart(out_dir / "fig_sequences.svg",
                                  by_scenario[SCENARIO_SEQUENCE],
                                  "Sequence overhead", "functions in sequence"))
    if SCENARIO_PARALLEL in by_scenario:
        files.append(_write_chart(out_dir / "fig_parallel.svg",
                                  by_scenario[SCENARIO_PARALLEL],
                                  "Parallel overhead", "parallel functions"))
    return SuiteReport(samples=samples, files=files, errors=errors)


def _write_samples_csv(path: Path, rows: list[OverheadSample]) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["engine", "scenario", "n", "payload_bytes", "rep", "overhead_ms"])
        for sample in rows:
            if sample.error:
                writer.writerow([sample.engine, sample.scenario, sample.n,
                                 sample.payload_bytes, "NA", "NA"])
                continue
            for rep, value in enumerate(sample.overhead_ms):
                writer.writerow([sample.engine, sample.scenario, sample.n,
                                 sample.payload_bytes, rep, value])
    return path


def _write_summary_csv(path: Path, samples: list[OverheadSample]) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["engine", "scenario", "n", "payload_bytes", "mean_ms", "stdev_ms"])
        for sample in samples:
            if sample.error:
                writer.writerow([sample.engine, sample.scenario, sample.n,
                                 sample.payload_bytes, "NA", "NA"])
            else:
                writer.writerow([sample.engine, sample.scenario, sample.n,
                                 sample.payload_bytes,
                                 f"{sample.mean_ms:.3f}", f"{sample.stdev_ms:.3f}"])
    return path


def _write_chart(path: Path, samples: list[OverheadSample], title: str, xlabel: str) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    engines = sorted({s.engine for s in samples})
    for engine_id in engines:
        points = sorted((s.n, s.mean_ms) for s in samples
                        if s.engine == engine_id and not s.error)
        if not points:
            continue
        ax.plot([p[0] for p in points], [p[1] / 1000.0 for p in points],
                marker="o", label=engine_id)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("overhead (s)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
