"""Seeded Monte-Carlo execution and aggregation."""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from typing import Optional

from threadpoolctl import threadpool_limits

from ..metrics import TrialScore, clustering_accuracy
from ..synthgen import generate
from .algorithms import REGISTRY, TrialContext, instance_rng


@dataclass
class TrialResult:
    point: str
    trial_index: int
    algorithm: str
    score: Optional[TrialScore]
    converged: bool
    iterations: int
    error: Optional[str] = None

    @property
    def ok(self):
        return self.error is None

    def to_dict(self, record_runtime=False):
        d = {"point": self.point, "trial_index": self.trial_index, "algorithm": self.algorithm,
             "status": "ok" if self.ok else "failed"}
        if self.score is not None:
            s = asdict(self.score)
            if not record_runtime:
                s.pop("runtime_seconds")
            d.update({k: _finite(v) for k, v in s.items()})
        d["converged"] = bool(self.converged)
        d["iterations"] = int(self.iterations)
        if self.error:
            d["error"] = self.error
        return d


def _finite(v):
    return v if v is None or math.isfinite(v) else None


def run_point_trial(label, synth, algos, seed, trial_index):
    """One instance, every algorithm scored on it, in list order."""
    gt = generate(synth, rng=instance_rng(seed, trial_index))
    ctx = TrialContext(seed, trial_index)
    inl = gt.inliers
    results = []
    for name, params in algos.items():
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                out = REGISTRY[name].run(gt, dict(params), ctx)
            acc = clustering_accuracy(gt.labels[inl], out.labels[inl])
            elapsed = time.perf_counter() - t0
            if out.mse_linear is None:
                # clustering-only methods have no factor estimate to score
                score = TrialScore(acc, float("nan"), float("nan"), elapsed)
            else:
                score = TrialScore.from_linear(acc, out.mse_linear, elapsed)
            results.append(TrialResult(label, trial_index, name, score,
                                       out.converged, out.iterations))
        except Exception as exc:  # a failing method must not stop the run
            msg = f"{type(exc).__name__}: {exc}"
            results.append(TrialResult(label, trial_index, name, None, False, 0, msg))
    return results


def run_trial(config, trial_index, point=0):
    label, synth, algos = config.points()[point]
    with threadpool_limits(1):
        return run_point_trial(label, synth, algos, config.seed, trial_index)


def _worker_init():
    threadpool_limits(1)


def _task(args):
    return run_point_trial(*args)


def run_experiment(config, jobs=None):
    """Run every (sweep point, trial) and return the results document."""
    jobs = config.parallelism if jobs is None else jobs
    points = config.points()
    tasks = [(label, synth, algos, config.seed, t)
             for (label, synth, algos) in points for t in range(config.trials)]
    if jobs <= 1:
        with threadpool_limits(1):
            chunks = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_worker_init) as pool:
            chunks = list(pool.map(_task, tasks))
    results = [r for chunk in chunks for r in chunk]
    order = {label: i for i, (label, _, _) in enumerate(points)}
    algo_order = {a["name"]: i for i, a in enumerate(config.algorithms)}
    results.sort(key=lambda r: (order[r.point], algo_order[r.algorithm], r.trial_index))
    return {
        "config_hash": config.config_hash(),
        "per_trial": [r.to_dict(config.record_runtime) for r in results],
        "aggregates": aggregate(results, config.record_runtime),
    }


def _mean_std(values):
    vals = [v for v in values if v is not None and math.isfinite(v)]
    if not vals:
        return None, None
    m = math.fsum(vals) / len(vals)
    if len(vals) == 1:
        return m, 0.0
    var = math.fsum((v - m) ** 2 for v in vals) / (len(vals) - 1)
    return m, math.sqrt(var)


def aggregate(results, record_runtime=False):
    """Mean and sample standard deviation per (point, algorithm).

    ``results`` must already be sorted; groups keep that order.
    """
    groups = {}
    for r in results:
        groups.setdefault((r.point, r.algorithm), []).append(r)
    rows = []
    for (point, algo), rs in groups.items():
        ok = [r for r in rs if r.ok]
        row = {"point": point, "algorithm": algo, "trials": len(rs),
               "failed": len(rs) - len(ok),
               "converged": sum(r.converged for r in ok)}
        fields = [("accuracy", lambda r: r.score.accuracy),
                  ("mse_db", lambda r: r.score.mse_db),
                  ("mse_linear", lambda r: r.score.mse_linear)]
        if record_runtime:
            fields.append(("runtime_seconds", lambda r: r.score.runtime_seconds))
        for name, get in fields:
            m, s = _mean_std([get(r) for r in ok])
            row[f"{name}_mean"] = m
            row[f"{name}_std"] = s
        rows.append(row)
    return rows


def to_json(doc):
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n"


def to_csv(doc):
    rows = doc["aggregates"]
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in r.items()})
    return buf.getvalue()


def write_results(doc, path, fmt="json"):
    text = to_json(doc) if fmt == "json" else to_csv(doc)
    with open(path, "w") as fh:
        fh.write(text)
    return text
