"""Evaluation metrics: AUROC, binned mutual information, invariance gap.

AUROC follows the Mann-Whitney definition - the fraction of
(anomaly, normal) score pairs where the anomaly wins, ties counting one
half - computed by rank sums in O(n log n); average ranks over tied groups
make the rank form exactly equal to the pairwise count.

Mutual information between inputs and representations is a plug-in
estimate on a joint equal-width histogram of the two first principal
components (full-dimensional density estimation is out of scope at this
scale; the number is a diagnostic, clamped at zero).

The invariance gap is the largest unbiased squared MMD between any two
environments' representation sets; the unbiased estimator keeps a truly
invariant representation reading near zero instead of positively biased.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ioutil import atomic_write_text, dumps_json_17g
from .mmd import KernelConfig, mmd2_unbiased


def auroc(normal_scores, anomaly_scores) -> float:
    """P(anomaly score > normal score) + 0.5 P(tie) over all pairs."""
    neg = np.asarray(normal_scores, dtype=np.float64)
    pos = np.asarray(anomaly_scores, dtype=np.float64)
    if neg.size == 0 or pos.size == 0:
        raise ValueError("both score lists must be non-empty")
    scores = np.concatenate([neg, pos])
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[neg.size:].sum())
    u = rank_sum_pos - pos.size * (pos.size + 1) / 2.0
    return u / (pos.size * neg.size)


def _first_pc(m: np.ndarray) -> np.ndarray:
    """Projection of the rows onto their first principal component.

    1-D input is used as-is.  The eigenvector sign is fixed so the largest
    magnitude coordinate is positive, which keeps the projection
    deterministic.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        return m
    centered = m - m.mean(axis=0)
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    v = vecs[:, -1]
    pivot = np.argmax(np.abs(v))
    if v[pivot] < 0:
        v = -v
    return centered @ v


def binned_mi(x_samples, z_samples, bins: int = 16) -> float:
    """Plug-in mutual information (nats) of the binned joint distribution."""
    x = np.asarray(x_samples, dtype=np.float64)
    z = np.asarray(z_samples, dtype=np.float64)
    if x.shape[0] != z.shape[0]:
        raise ValueError(f"sample counts differ: {x.shape[0]} vs {z.shape[0]}")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    px = _first_pc(x)
    pz = _first_pc(z)

    def digitize(v: np.ndarray) -> np.ndarray:
        lo, hi = float(v.min()), float(v.max())
        if hi <= lo:
            return np.zeros(v.size, dtype=np.int64)
        idx = np.floor((v - lo) / (hi - lo) * bins).astype(np.int64)
        return np.minimum(idx, bins - 1)

    bx, bz = digitize(px), digitize(pz)
    joint = np.zeros((bins, bins), dtype=np.float64)
    np.add.at(joint, (bx, bz), 1.0)
    joint /= joint.sum()
    mx = joint.sum(axis=1)
    mz = joint.sum(axis=0)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / (mx[:, None] * mz[None, :])[nz])))
    return max(mi, 0.0)


def invariance_gap(reps_by_env: dict[str, np.ndarray],
                   kernel: KernelConfig | None = None) -> float:
    """Max pairwise unbiased squared MMD across environment representations."""
    if len(reps_by_env) < 2:
        raise ValueError("invariance gap needs at least two environments")
    for env, reps in reps_by_env.items():
        if np.asarray(reps).shape[0] < 2:
            raise ValueError(f"environment {env} has fewer than 2 representation rows")
    envs = sorted(reps_by_env)
    worst = -np.inf
    for i in range(len(envs)):
        for j in range(i + 1, len(envs)):
            worst = max(worst, mmd2_unbiased(reps_by_env[envs[i]],
                                             reps_by_env[envs[j]], kernel))
    return float(worst)


@dataclass
class SeedRun:
    """Metrics from one trained detector (one seed)."""

    seed: int
    weight: float
    config_digest: str
    auroc_by_env: dict[str, float]
    invariance_gap: float
    mi_nats: float


@dataclass
class EvalReport:
    config_digest: str
    seeds: list[int]
    weight: float
    per_env: list[dict]            # [{env, auroc_mean, auroc_std}]
    invariance_gap: float          # mean over seeds
    mi_nats: float                 # mean over seeds

    def to_json_dict(self) -> dict:
        return {"config_digest": self.config_digest,
                "seeds": self.seeds,
                "lambda": self.weight,
                "per_env": self.per_env,
                "invariance_gap": self.invariance_gap,
                "mi_nats": self.mi_nats}

    @staticmethod
    def from_json_dict(d: dict) -> "EvalReport":
        return EvalReport(d["config_digest"], list(d["seeds"]), d["lambda"],
                          list(d["per_env"]), d["invariance_gap"], d["mi_nats"])

    def auroc_mean(self, env: str) -> float:
        for row in self.per_env:
            if row["env"] == env:
                return row["auroc_mean"]
        raise KeyError(f"no environment {env!r} in report")


def build_report(runs: list[SeedRun]) -> EvalReport:
    """Aggregate per-seed metrics as mean and (population) std per environment."""
    if not runs:
        raise ValueError("no runs to aggregate")
    digests = {r.config_digest for r in runs}
    weights = {r.weight for r in runs}
    env_sets = {tuple(sorted(r.auroc_by_env)) for r in runs}
    if len(digests) > 1 or len(weights) > 1 or len(env_sets) > 1:
        raise ValueError("runs mix configurations and cannot be aggregated")
    envs = sorted(runs[0].auroc_by_env)
    per_env = []
    for env in envs:
        vals = np.array([r.auroc_by_env[env] for r in runs])
        per_env.append({"env": env,
                        "auroc_mean": float(vals.mean()),
                        "auroc_std": float(vals.std())})
    return EvalReport(
        config_digest=runs[0].config_digest,
        seeds=[r.seed for r in runs],
        weight=runs[0].weight,
        per_env=per_env,
        invariance_gap=float(np.mean([r.invariance_gap for r in runs])),
        mi_nats=float(np.mean([r.mi_nats for r in runs])),
    )


def write_report(report: EvalReport, path) -> None:
    atomic_write_text(path, dumps_json_17g(report.to_json_dict()) + "\n")


def read_report(path) -> EvalReport:
    return EvalReport.from_json_dict(json.loads(open(path).read()))
