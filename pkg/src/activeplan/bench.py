"""Seeded batch experiments and table-style aggregation.

A batch walks an obstacle-count ladder. For rung ``r`` and index ``k`` the
scenario seed is ``base_seed ^ H(r, k)`` where ``H`` is the first eight
bytes (little-endian) of BLAKE2b over ``"r:k"``, so every method sees the
same instance. Each (rung, index, method) result is one JSON line in
``records.jsonl``; a re-run skips the keys already on disk, so an
interrupted batch resumes where it stopped.

Reports are plain CSV: a summary with one row per rung and method, an
active-count histogram, and per-instance JSON lines for plotting.
Compute times are wall-clock seconds around the whole method call
(scenario generation excluded, NLP construction included), so they are the
only fields that differ between two runs of the same batch; pass
``timing=False`` to :func:`export_report` to leave them blank.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .dynamics import make_model
from .planner import SolveCache, plan, plan_baseline
from .scenario import generate_scenario, normalize_model_kind, trajectory_to_dict
from .solver import SolverOptions
from .transcription import Margins

DEFAULT_LADDER = (5, 10, 15, 20, 25, 30, 40, 50, 60, 70, 80, 90, 100)
METHODS = ("iterative", "baseline")
RECORDS_FILE = "records.jsonl"
CONFIG_FILE = "config.json"
SUMMARY_FILE = "summary.csv"
HISTOGRAM_FILE = "active_histogram.csv"
INSTANCES_FILE = "instances.jsonl"
NOTES_FILE = "notes.txt"
SUMMARY_COLUMNS = (
    "n_obs", "method", "ctime_mean", "ctime_std", "tf_mean", "tf_std",
    "success_pct", "active_mean", "active_min", "active_max",
)


def _normalize_method(m: str) -> str:
    m = {"plan": "iterative"}.get(m, m)
    if m not in METHODS:
        raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
    return m


@dataclass(frozen=True)
class BatchConfig:
    model: str = "point-mass-2d"
    ladder: tuple = DEFAULT_LADDER
    per_rung: int = 20
    base_seed: int = 0
    methods: tuple = METHODS
    solve_time_limit: float = 300.0
    N: int = 100
    dt_max: float = 0.05
    epsilon: float = 0.2
    delta: float = 1e-3
    max_outer_iterations: int = 10
    max_inner_iterations: int = 500
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    workers: int = 1
    share_first_solve: bool = False
    store_trajectories: bool = True

    def __post_init__(self):
        object.__setattr__(self, "model", normalize_model_kind(self.model))
        object.__setattr__(self, "ladder", tuple(int(r) for r in self.ladder))
        object.__setattr__(self, "methods", tuple(_normalize_method(m) for m in self.methods))
        if not self.ladder:
            raise ValueError("ladder must not be empty")
        if any(r < 0 for r in self.ladder):
            raise ValueError("ladder rungs must be non-negative")
        if self.per_rung < 1:
            raise ValueError("per_rung must be at least 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            max_outer_iterations=self.max_outer_iterations,
            max_inner_iterations=self.max_inner_iterations,
            wall_clock_limit=self.solve_time_limit,
            initial_penalty=self.initial_penalty,
            penalty_growth=self.penalty_growth,
        )

    def margins(self) -> Margins:
        return Margins(epsilon=self.epsilon, delta=self.delta)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ladder"] = list(self.ladder)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "BatchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown batch config fields: {sorted(unknown)}")
        return cls(**data)

    def expected_keys(self):
        return [(r, k, m) for r in self.ladder for k in range(self.per_rung) for m in self.methods]


def load_config(path) -> BatchConfig:
    with open(path, encoding="utf-8") as fh:
        return BatchConfig.from_dict(json.load(fh))


def scenario_seed(base_seed: int, rung: int, index: int) -> int:
    digest = hashlib.blake2b(f"{rung}:{index}".encode(), digest_size=8).digest()
    return (int(base_seed) ^ int.from_bytes(digest, "little")) & 0xFFFFFFFFFFFFFFFF


# --------------------------------------------------------------------------
# running


_worker_cache = None


def _run_one(config: BatchConfig, rung: int, index: int, method: str) -> dict:
    global _worker_cache
    seed = scenario_seed(config.base_seed, rung, index)
    scenario = generate_scenario(seed, config.model, rung, epsilon=config.epsilon)
    model = make_model(config.model)
    cache = None
    if config.share_first_solve:
        if _worker_cache is None:
            _worker_cache = SolveCache()
        cache = _worker_cache
    runner = plan if method == "iterative" else plan_baseline
    t0 = time.perf_counter()
    report = runner(
        scenario, model, config.N, config.dt_max, config.margins(), config.solver_options(),
        cache=cache,
    )
    elapsed = time.perf_counter() - t0 + report.cached_time
    record = {
        "n_obs": rung,
        "index": index,
        "method": method,
        "seed": seed,
        "scenario_digest": scenario.digest(),
        "status": report.status,
        "solved": report.solved,
        "anomaly": report.status == "invalid_solution",
        "t_f": report.t_f,
        "wall_time": elapsed,
        "n_iterations": len(report.iterations),
        "final_active": list(report.active_set.active),
        "active_count": report.final_active_count,
        "iterations": [
            {
                "active_before": it.active_before,
                "promoted": list(it.promoted),
                "status": it.solve["status"],
                "objective": it.solve["objective"],
                "wall_time": it.wall_time,
                "cached": it.cached,
            }
            for it in report.iterations
        ],
        "message": report.message,
        "trajectory": None,
    }
    if config.store_trajectories and report.trajectory is not None:
        record["trajectory"] = trajectory_to_dict(report.trajectory, config.model)
    return record


def _record_key(rec):
    return (int(rec["n_obs"]), int(rec["index"]), rec["method"])


def load_records(path) -> list:
    """Read a JSON-lines store; a torn final line (interrupted write) is ignored."""
    path = Path(path)
    if path.is_dir():
        path = path / RECORDS_FILE
    if not path.exists():
        return []
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError:
                continue
    return out


def _append(path: Path, rec: dict):
    line = json.dumps(rec, sort_keys=True) + "\n"
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line)
        fh.flush()
        os.fsync(fh.fileno())


def _trim_torn_tail(path: Path):
    """Drop a partial last line left by an interrupted write so appends start clean."""
    if not path.exists():
        return
    with open(path, "rb+") as fh:
        data = fh.read()
        if data and not data.endswith(b"\n"):
            fh.truncate(data.rfind(b"\n") + 1)


def run_batch(config: BatchConfig, out_dir=None, progress=None) -> list:
    """Run every (rung, index, method) of ``config``.

    With ``out_dir`` the records stream to ``out_dir/records.jsonl`` and keys
    already present are skipped. Returns all records for the configuration
    in ladder order.
    """
    existing = {}
    store = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / CONFIG_FILE).write_text(
            json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        store = out_dir / RECORDS_FILE
        _trim_torn_tail(store)
        existing = {_record_key(r): r for r in load_records(store)}
    todo = [key for key in config.expected_keys() if key not in existing]
    results = dict(existing)

    def done(rec):
        results[_record_key(rec)] = rec
        if store is not None:
            _append(store, rec)
        if progress is not None:
            progress(rec)

    if config.workers == 1 or len(todo) <= 1:
        for rung, index, method in todo:
            done(_run_one(config, rung, index, method))
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_one, config, *key) for key in todo]
            for fut in futures:
                done(fut.result())
    return [results[k] for k in config.expected_keys() if k in results]


# --------------------------------------------------------------------------
# aggregation


@dataclass
class SummaryRow:
    n_obs: int
    method: str
    count: int
    successes: int
    ctime_mean: float | None
    ctime_std: float | None
    tf_mean: float | None
    tf_std: float | None
    success_pct: float
    active_mean: float | None = None
    active_min: int | None = None
    active_max: int | None = None
    anomalies: int = 0


def _mean_std(values):
    if not values:
        return None, None
    arr = np.asarray(values, dtype=float)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), std


def _method_order(m):
    return METHODS.index(m) if m in METHODS else len(METHODS)


def aggregate(records) -> list:
    """One :class:`SummaryRow` per (rung, method), rungs ascending.

    Success means solved and validated. Time and ``t_f`` statistics use the
    successful records only (sample standard deviation); they are ``None``
    when a rung has no successes.
    """
    groups = defaultdict(list)
    for rec in records:
        groups[(int(rec["n_obs"]), rec["method"])].append(rec)
    rows = []
    for (n_obs, method) in sorted(groups, key=lambda k: (k[0], _method_order(k[1]))):
        recs = groups[(n_obs, method)]
        ok = [r for r in recs if r["solved"]]
        ct_m, ct_s = _mean_std([r["wall_time"] for r in ok])
        tf_m, tf_s = _mean_std([r["t_f"] for r in ok])
        row = SummaryRow(
            n_obs=n_obs,
            method=method,
            count=len(recs),
            successes=len(ok),
            ctime_mean=ct_m,
            ctime_std=ct_s,
            tf_mean=tf_m,
            tf_std=tf_s,
            success_pct=100.0 * len(ok) / len(recs),
            anomalies=sum(1 for r in recs if r.get("anomaly")),
        )
        if method == "iterative" and ok:
            counts = [r["active_count"] for r in ok]
            row.active_mean = float(np.mean(counts))
            row.active_min = int(min(counts))
            row.active_max = int(max(counts))
        rows.append(row)
    return rows


def active_stats(records) -> dict:
    """``{n_obs: (mean, min, max)}`` of final active counts over solved iterative runs."""
    by_rung = defaultdict(list)
    for rec in records:
        if rec["method"] == "iterative" and rec["solved"]:
            by_rung[int(rec["n_obs"])].append(int(rec["active_count"]))
    return {
        r: (float(np.mean(v)), int(min(v)), int(max(v))) for r, v in sorted(by_rung.items())
    }


def active_distribution(records) -> dict:
    """``{n_obs: {active_count: instances}}`` over solved iterative runs."""
    by_rung = defaultdict(Counter)
    for rec in records:
        if rec["method"] == "iterative" and rec["solved"]:
            by_rung[int(rec["n_obs"])][int(rec["active_count"])] += 1
    return {r: dict(sorted(c.items())) for r, c in sorted(by_rung.items())}


# --------------------------------------------------------------------------
# export


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.2f}"


def summary_csv(rows, timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in rows:
        w.writerow([
            row.n_obs,
            row.method,
            _fmt(row.ctime_mean) if timing else "",
            _fmt(row.ctime_std) if timing else "",
            _fmt(row.tf_mean),
            _fmt(row.tf_std),
            _fmt(row.success_pct),
            _fmt(row.active_mean),
            _fmt(row.active_min),
            _fmt(row.active_max),
        ])
    return buf.getvalue()


def histogram_csv(histograms) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("n_obs", "active_count", "instances"))
    for rung, hist in sorted(histograms.items()):
        for size, count in sorted(hist.items()):
            w.writerow((rung, size, count))
    return buf.getvalue()


def instances_jsonl(records, timing: bool = True) -> str:
    lines = []
    for rec in sorted(records, key=lambda r: (int(r["n_obs"]), int(r["index"]), _method_order(r["method"]))):
        item = {k: rec[k] for k in (
            "n_obs", "index", "method", "seed", "scenario_digest", "status", "t_f",
            "n_iterations", "final_active", "trajectory",
        ) if k in rec}
        if timing:
            item["wall_time"] = rec["wall_time"]
        lines.append(json.dumps(item, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def export_report(rows, histograms, path, records=None, timing: bool = True, notes=None) -> dict:
    """Write the summary CSV, histogram CSV and (with ``records``) the
    per-instance JSON lines into directory ``path``. Returns the file paths."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    out = {
        "summary": path / SUMMARY_FILE,
        "histogram": path / HISTOGRAM_FILE,
    }
    out["summary"].write_text(summary_csv(rows, timing), encoding="utf-8")
    out["histogram"].write_text(histogram_csv(histograms), encoding="utf-8")
    if records is not None:
        out["instances"] = path / INSTANCES_FILE
        out["instances"].write_text(instances_jsonl(records, timing), encoding="utf-8")
    if notes:
        out["notes"] = path / NOTES_FILE
        out["notes"].write_text("".join(f"{line}\n" for line in notes), encoding="utf-8")
    return out


def report_from_store(out_dir, timing: bool = True) -> dict:
    """Aggregate whatever records ``out_dir`` holds and write the report there."""
    out_dir = Path(out_dir)
    records = load_records(out_dir)
    config = None
    if (out_dir / CONFIG_FILE).exists():
        config = load_config(out_dir / CONFIG_FILE)
    if config is not None:
        wanted = set(config.expected_keys())
        records = [r for r in records if _record_key(r) in wanted]
        missing = len(wanted - {_record_key(r) for r in records})
    else:
        missing = 0
    rows = aggregate(records)
    notes = [
        f"records: {len(records)}",
        f"missing: {missing}",
        f"anomalies (converged but failed validation): {sum(r.anomalies for r in rows)}",
        "compute time: wall clock around each method call; excludes scenario generation, "
        "includes NLP construction; non-converged solves (including per-solve time limits) "
        "count as failures",
    ]
    if config is not None:
        notes.append(f"per-solve wall-clock limit: {config.solve_time_limit:g} s")
    files = export_report(rows, active_distribution(records), out_dir, records, timing, notes)
    return {"files": files, "rows": rows, "records": len(records), "missing": missing}
