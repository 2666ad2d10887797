"""Campaign harness: run problem streams, capture metrics, summarize.

A campaign executes N sequential problems in one of three modes
(thunder, lightning, scratch) and appends one metrics row per problem  - 
timeouts included, flagged as discarded. Campaigns are reproducible:
the problem stream is a pure function of (seed, index), planning runs
in deterministic virtual time, and experience insertion is drained
between problems, so rerunning a spec yields a byte-identical CSV.

Two campaign shapes mirror the benchmark design: a static campaign pins
one environment and reuses a fixed canonical start with random goals; a
varying campaign draws the environment uniformly per problem and
randomizes both endpoints.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .budget import PlannerBudget
from .environments import (builtin_environment_set, canonical_start,
                           random_problem)
from .lightning import LightningPlanner, save_store
from .scratch import INVALID_QUERY, SOLVED, TIMEOUT, ScratchPlanner
from .sparsdb import save_roadmap
from .thunder import SCRATCH, PlanResult, ThunderConfig, ThunderPlanner

MODES = ("thunder", "lightning", "scratch")


@dataclass(frozen=True)
class CampaignSpec:
    mode: str
    envset: str
    problems: int
    budget: float
    seed: int
    out_dir: str
    env_id: str | None = None     # pin one environment: the static shape
    start_index: int = 0          # first problem index, for windowed reruns
    config: ThunderConfig | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.problems <= 0:
            raise ValueError("problems must be positive")
        if self.budget <= 0:
            raise ValueError("budget must be positive")


@dataclass
class MetricsRow:
    problem: int
    environment: str
    solver: str
    wall_time_s: float
    path_length: float
    db_nodes: int
    db_edges: int
    db_bytes: int
    recall: int
    discarded: int


CSV_COLUMNS = [f.name for f in fields(MetricsRow)]


@dataclass
class CampaignOutput:
    spec: CampaignSpec
    rows: list
    csv_path: str
    db_path: str | None
    stats: dict
    results: list | None = None   # populated when keep_results=True


_canonical_start_cache: dict = {}


def problem_for_index(spec: CampaignSpec, envs: list, i: int):
    """The i-th problem of a campaign - a pure function of (spec, i)."""
    pseed = int(np.random.SeedSequence((spec.seed, i)).generate_state(1)[0])
    if spec.env_id is not None:
        env = next((e for e in envs if e.id == spec.env_id), None)
        if env is None:
            known = ", ".join(e.id for e in envs)
            raise KeyError(f"environment {spec.env_id!r} not in set "
                           f"{spec.envset!r} ({known})")
        if env.id not in _canonical_start_cache:
            _canonical_start_cache[env.id] = canonical_start(env)
        return env, random_problem(env, pseed, spec.budget,
                                   start=_canonical_start_cache[env.id])
    k = int(np.random.SeedSequence((spec.seed, 0xE27, i)).generate_state(1)[0])
    env = envs[k % len(envs)]
    return env, random_problem(env, pseed, spec.budget)


def run_campaign(spec: CampaignSpec, keep_results: bool = False) -> CampaignOutput:
    envs = builtin_environment_set(spec.envset)
    config = spec.config if spec.config is not None else ThunderConfig(seed=spec.seed)

    os.makedirs(spec.out_dir, exist_ok=True)
    csv_path = os.path.join(spec.out_dir, "metrics.csv")
    # fail before any planning if the output location is unusable
    csv_file = open(csv_path, "w", newline="")
    writer = csv.writer(csv_file, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)

    planner = None
    db_path = None
    if spec.mode == "thunder":
        planner = ThunderPlanner(envs, config)
        db_path = os.path.join(spec.out_dir, "db.thdr")
    elif spec.mode == "lightning":
        planner = LightningPlanner(envs, config)
        db_path = os.path.join(spec.out_dir, "db.lght")
    else:
        scratch = ScratchPlanner(smoothing_rounds=config.smoothing_rounds)

    rows = []
    results = [] if keep_results else None
    try:
        for i in range(spec.start_index, spec.start_index + spec.problems):
            env, problem = problem_for_index(spec, envs, i)

            if planner is not None:
                result = planner.solve(problem)
                planner.submit_experience(result)
                planner.drain()  # keep the database deterministic per index
                stats = planner.snapshot_stats()
                nodes = stats.get("nodes", stats.get("paths", 0))
                edges = stats.get("edges", 0)
                db_bytes = stats["db_bytes"]
                solver = result.solver if result.solved else "none"
                row = MetricsRow(i, env.id, solver,
                                 result.wall_time,
                                 result.path.length if result.solved else 0.0,
                                 nodes, edges, db_bytes,
                                 int(result.recalled), int(not result.solved))
            else:
                budget = PlannerBudget(int(problem.time_budget
                                           * config.virtual_check_rate))
                outcome = scratch.solve(problem, env, budget)
                if outcome.solved:
                    result = PlanResult(SOLVED, SCRATCH, outcome.path,
                                        budget.used / config.virtual_check_rate,
                                        problem, units_scratch=budget.used)
                else:
                    status = (INVALID_QUERY if outcome.status == INVALID_QUERY
                              else TIMEOUT)
                    result = PlanResult(status, None, None, problem.time_budget,
                                        problem, units_scratch=budget.used)
                row = MetricsRow(i, env.id,
                                 result.solver if result.solved else "none",
                                 result.wall_time,
                                 result.path.length if result.solved else 0.0,
                                 0, 0, 0, 0, int(not result.solved))
            rows.append(row)
            if keep_results:
                results.append(result)

        for row in rows:
            writer.writerow([getattr(row, c) for c in CSV_COLUMNS])
    finally:
        csv_file.close()

    stats = {"spec": {k: v for k, v in asdict(spec).items() if k != "config"}}
    if planner is not None:
        stats.update(planner.snapshot_stats())
        if spec.mode == "thunder":
            save_roadmap(planner.roadmap, db_path)
        else:
            save_store(planner.store, db_path)
        planner.close()
    with open(os.path.join(spec.out_dir, "stats.json"), "w") as fh:
        json.dump(stats, fh, indent=2, default=str)
        fh.write("\n")

    return CampaignOutput(spec, rows, csv_path, db_path, stats, results)


# ---------------------------------------------------------------------------
# summaries

HISTOGRAM_BUCKET = 0.1  # seconds


def _quartiles(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"median": None, "mean": None, "q1": None, "q3": None}
    return {"median": float(np.median(v)), "mean": float(v.mean()),
            "q1": float(np.percentile(v, 25)), "q3": float(np.percentile(v, 75))}


def read_metrics(path: str) -> list:
    """Load one metrics CSV, validating the schema."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected metrics schema {header}")
        rows = []
        for rec in reader:
            rows.append(MetricsRow(int(rec[0]), rec[1], rec[2], float(rec[3]),
                                   float(rec[4]), int(rec[5]), int(rec[6]),
                                   int(rec[7]), int(rec[8]), int(rec[9])))
    return rows


def summarize_rows(rows: list, bucket: float = HISTOGRAM_BUCKET) -> dict:
    n = len(rows)
    solved = [r for r in rows if not r.discarded]
    times = [r.wall_time_s for r in solved]
    window = min(500, max(1, n // 4))

    def node_rate(lo: int, hi: int) -> float:
        if hi <= lo:
            return 0.0
        before = rows[lo - 1].db_nodes if lo > 0 else 0
        return (rows[hi - 1].db_nodes - before) / (hi - lo)

    hist: dict = {}
    for t in times:
        b = int(t / bucket)
        hist[round(b * bucket, 6)] = hist.get(round(b * bucket, 6), 0) + 1

    return {
        "rows": n,
        "solved": len(solved),
        "discarded": n - len(solved),
        "recall_rate": sum(r.recall for r in rows) / n if n else 0.0,
        "wall_time": _quartiles(times),
        "db_nodes_final": rows[-1].db_nodes if rows else 0,
        "db_edges_final": rows[-1].db_edges if rows else 0,
        "db_bytes_final": rows[-1].db_bytes if rows else 0,
        "window": window,
        "node_rate_leading": node_rate(0, window),
        "node_rate_trailing": node_rate(n - window, n),
        "histogram_bucket_s": bucket,
        "histogram": dict(sorted(hist.items())),
    }


def summarize(paths: list, out_dir: str | None = None,
              bucket: float = HISTOGRAM_BUCKET) -> dict:
    """Compare any number of metrics files; optionally write reports."""
    if not paths:
        raise ValueError("need at least one metrics file")
    report = {}
    for p in paths:
        report[p] = summarize_rows(read_metrics(p), bucket)

    table = _text_table(report)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
            fh.write(table)
    return report


def _text_table(report: dict) -> str:
    cols = ["file", "rows", "solved", "recall%", "median s", "q1 s", "q3 s",
            "nodes", "bytes", "trail rate"]
    lines = []
    data = []
    for path, s in report.items():
        wt = s["wall_time"]
        data.append([
            os.path.basename(os.path.dirname(path)) or path,
            str(s["rows"]), str(s["solved"]),
            f"{100 * s['recall_rate']:.1f}",
            "-" if wt["median"] is None else f"{wt['median']:.4f}",
            "-" if wt["q1"] is None else f"{wt['q1']:.4f}",
            "-" if wt["q3"] is None else f"{wt['q3']:.4f}",
            str(s["db_nodes_final"]), str(s["db_bytes_final"]),
            f"{s['node_rate_trailing']:.4f}",
        ])
    widths = [max(len(cols[i]), *(len(row[i]) for row in data)) if data
              else len(cols[i]) for i in range(len(cols))]
    out = io.StringIO()
    out.write("  ".join(c.ljust(widths[i]) for i, c in enumerate(cols)).rstrip() + "\n")
    for row in data:
        out.write("  ".join(v.ljust(widths[i]) for i, v in enumerate(row)).rstrip() + "\n")
    return out.getvalue()
