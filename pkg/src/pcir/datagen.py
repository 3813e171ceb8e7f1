"""Parametric structural causal model for multi-environment anomaly data.

A sample is X = (content, style) with an optional fixed orthogonal mixing
of the two blocks.  Content is Gaussian around a normal or an anomalous
mean; style is Gaussian around a per-environment mean, and anomalies get
an extra shortcut offset of `shortcut` on every style dimension (the
W -> X_e arrow), which makes style informative about the label at test
time.  A latent confounder U drives both the label (W = 1 iff U + noise
exceeds zero) and, when `confounding` > 0, a softmax choice of the
environment, producing the spurious W-E correlation that `do(E=e)`
sampling severs.

Training data contains only normal samples with a fixed quota per
environment.  Test data is label-balanced.  All sampling is
bit-reproducible from (config, seed) via dedicated generator streams.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .ioutil import atomic_write_text, dumps_json_17g
from .rng import Rng


class ConfigError(ValueError):
    """Invalid generator configuration or environment specification."""


@dataclass(frozen=True)
class ScmConfig:
    content_dim: int = 2
    style_dim: int = 4
    content_mean_normal: tuple[float, ...] = (0.0, 0.0)
    content_mean_anomaly: tuple[float, ...] = (3.0, 0.0)
    content_noise: float = 1.0
    style_means: tuple[tuple[float, ...], ...] = (
        (0.0, 0.0, 0.0, 0.0),
        (5.0, 5.0, 5.0, 5.0),
    )
    style_noise: float = 1.0
    shortcut: float = 2.0      # strength of the label -> style arrow
    confounding: float = 0.0   # in [0, 1]; latent-U influence on the environment
    mixing: str = "none"       # "none" | "orthogonal"
    shift_delta: float = 3.0   # per-dimension style displacement of shifted test envs
    seed: int = 0

    def __post_init__(self):
        if self.content_dim < 1 or self.style_dim < 1:
            raise ConfigError("content_dim and style_dim must be >= 1")
        if len(self.content_mean_normal) != self.content_dim:
            raise ConfigError("content_mean_normal length must equal content_dim")
        if len(self.content_mean_anomaly) != self.content_dim:
            raise ConfigError("content_mean_anomaly length must equal content_dim")
        if self.content_mean_normal == self.content_mean_anomaly:
            raise ConfigError("normal and anomalous content means must differ")
        if self.content_noise <= 0 or self.style_noise <= 0:
            raise ConfigError("noise scales must be positive")
        if not self.style_means:
            raise ConfigError("at least one training environment is required")
        for nu in self.style_means:
            if len(nu) != self.style_dim:
                raise ConfigError("every style mean must have style_dim entries")
        if len(set(self.style_means)) != len(self.style_means):
            raise ConfigError("training-environment style means must be distinct")
        if self.shortcut < 0:
            raise ConfigError("shortcut must be >= 0")
        if not 0.0 <= self.confounding <= 1.0:
            raise ConfigError("confounding must lie in [0, 1]")
        if self.mixing not in ("none", "orthogonal"):
            raise ConfigError(f"unknown mixing mode {self.mixing!r}")

    @property
    def n_envs(self) -> int:
        return len(self.style_means)

    @property
    def dim(self) -> int:
        return self.content_dim + self.style_dim

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class EnvSpec:
    """How to sample the style block (and environment label) of a test set.

    kind "observational": the environment is drawn per sample from the
    confounder-dependent softmax.  kind "domain": the environment is set by
    intervention to `style_mean`.  kind "covariate": the style block is
    clamped to `clamp` exactly, with no noise and no shortcut offset.
    """

    name: str
    kind: str
    style_mean: tuple[float, ...] | None = None
    clamp: tuple[float, ...] | None = None


def observational(cfg: ScmConfig) -> EnvSpec:
    return EnvSpec("obs", "observational")


def intervene_domain(cfg: ScmConfig, env) -> EnvSpec:
    """do(E=e): sample style around environment e's mean, severing U -> E.

    `env` is a 1-based training-environment index or a (name, style_mean)
    pair declaring a fresh environment.
    """
    if isinstance(env, int):
        if not 1 <= env <= cfg.n_envs:
            raise ConfigError(f"unknown training environment {env}")
        return EnvSpec(f"do_env{env}", "domain",
                       tuple(float(v) for v in cfg.style_means[env - 1]))
    name, nu = env
    nu = tuple(float(v) for v in nu)
    if len(nu) != cfg.style_dim:
        raise ConfigError("fresh environment style mean must have style_dim entries")
    return EnvSpec(str(name), "domain", nu)


def intervene_covariate(cfg: ScmConfig, x_e) -> EnvSpec:
    """do(X_e=x): clamp the style block exactly; content is untouched."""
    x_e = tuple(float(v) for v in x_e)
    if len(x_e) != cfg.style_dim:
        raise ConfigError(f"clamp has {len(x_e)} entries, expected {cfg.style_dim}")
    return EnvSpec("clamp", "covariate", clamp=x_e)


def covariate_shift_suite(cfg: ScmConfig, n_shifts: int = 4) -> list[EnvSpec]:
    """Cumulatively shifted test environments e0..e{n_shifts}.

    e0 is the first training environment unchanged; e_i displaces style
    dimensions 1..i by +shift_delta each, on top of e_{i-1}'s shifts.
    """
    if n_shifts < 1:
        raise ConfigError("n_shifts must be >= 1")
    if cfg.style_dim < n_shifts:
        raise ConfigError(
            f"suite needs style_dim >= {n_shifts}, got {cfg.style_dim}")
    base = np.asarray(cfg.style_means[0], dtype=np.float64)
    specs = []
    for i in range(n_shifts + 1):
        nu = base.copy()
        nu[:i] += cfg.shift_delta
        specs.append(EnvSpec(f"e{i}", "domain", tuple(float(v) for v in nu)))
    return specs


@dataclass
class Dataset:
    features: np.ndarray          # (n, dim) float64
    env: np.ndarray               # (n,) unicode environment ids
    labels: np.ndarray            # (n,) int64, 0 normal / 1 anomaly
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.features.shape[0]
        if self.env.shape != (n,) or self.labels.shape != (n,):
            raise ConfigError("features, env and labels must agree in length")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def env_ids(self) -> list[str]:
        return sorted(set(self.env.tolist()))

    def rows_for_env(self, env_id: str) -> np.ndarray:
        return np.flatnonzero(self.env == env_id)


def mixing_matrix(cfg: ScmConfig) -> np.ndarray | None:
    """The fixed orthogonal feature mixing for this config, or None."""
    if cfg.mixing == "none":
        return None
    rng = Rng(cfg.seed).split("mixing")
    g = rng.normal((cfg.dim, cfg.dim))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))  # fix the sign gauge so Q is unique
    return q


def _assemble(cfg: ScmConfig, content: np.ndarray, style: np.ndarray) -> np.ndarray:
    x = np.concatenate([content, style], axis=1)
    m = mixing_matrix(cfg)
    return x if m is None else x @ m.T


def sample_train(cfg: ScmConfig, n_per_env: int, seed: int) -> Dataset:
    """Normal-only training data: n_per_env samples for each environment."""
    if n_per_env < 1:
        raise ConfigError("n_per_env must be >= 1")
    root = Rng(seed)
    mu0 = np.asarray(cfg.content_mean_normal)
    blocks, envs = [], []
    for e in range(1, cfg.n_envs + 1):
        rng = root.split("train", e)
        content = mu0 + cfg.content_noise * rng.normal((n_per_env, cfg.content_dim))
        nu = np.asarray(cfg.style_means[e - 1])
        style = nu + cfg.style_noise * rng.normal((n_per_env, cfg.style_dim))
        blocks.append(_assemble(cfg, content, style))
        envs += [str(e)] * n_per_env
    return Dataset(
        features=np.concatenate(blocks, axis=0),
        env=np.array(envs),
        labels=np.zeros(n_per_env * cfg.n_envs, dtype=np.int64),
        meta={"kind": "train", "config_digest": cfg.digest(), "seed": seed,
              "intervention": None},
    )


def _softmax_env(cfg: ScmConfig, u: float, rng: Rng) -> int:
    """Confounder-dependent environment choice (1-based index)."""
    k = cfg.n_envs
    if k == 1:
        return 1
    scores = np.linspace(-1.0, 1.0, k)
    gain = 4.0 * cfg.confounding / (1.0 - cfg.confounding + 1e-12)
    logits = gain * u * scores
    logits -= logits.max()
    p = np.exp(logits)
    p /= p.sum()
    r = rng.uniform()
    return int(np.searchsorted(np.cumsum(p), r, side="right")) + 1


def sample_test(cfg: ScmConfig, n_per_class: int, env_spec: EnvSpec, seed: int) -> Dataset:
    """Label-balanced test data under the given environment specification.

    Labels come from the latent confounder (W = 1 iff U + noise > 0),
    rejection-sampled until each class quota is met; rows are grouped
    normals first, anomalies second.  The per-sample confounder draws are
    kept in meta["confounder"] for diagnostics.
    """
    if n_per_class < 1:
        raise ConfigError("n_per_class must be >= 1")
    if env_spec.kind not in ("observational", "domain", "covariate"):
        raise ConfigError(f"unknown environment spec kind {env_spec.kind!r}")
    rng = Rng(seed).split("test", env_spec.name)
    mu = (np.asarray(cfg.content_mean_normal), np.asarray(cfg.content_mean_anomaly))
    need = [n_per_class, n_per_class]
    rows: dict[int, list[tuple[float, str, np.ndarray]]] = {0: [], 1: []}
    budget = 1000 * 2 * n_per_class
    while (need[0] or need[1]) and budget:
        budget -= 1
        u = rng.normal()
        w = 1 if u + rng.normal() > 0.0 else 0
        if not need[w]:
            continue
        need[w] -= 1
        if env_spec.kind == "observational":
            env_idx = _softmax_env(cfg, u, rng)
            nu = np.asarray(cfg.style_means[env_idx - 1])
            env_id = str(env_idx)
        elif env_spec.kind == "domain":
            nu = np.asarray(env_spec.style_mean)
            env_id = env_spec.name
        else:
            nu = None
            env_id = env_spec.name
        content = mu[w] + cfg.content_noise * rng.normal(cfg.content_dim)
        if nu is None:
            style = np.asarray(env_spec.clamp, dtype=np.float64)
        else:
            style = (nu + cfg.shortcut * w
                     + cfg.style_noise * rng.normal(cfg.style_dim))
        rows[w].append((u, env_id, np.concatenate([content, style])))
    if need[0] or need[1]:
        raise ConfigError("label rejection sampling failed to fill the class quotas")
    ordered = rows[0] + rows[1]
    raw = np.stack([r[2] for r in ordered])
    m = mixing_matrix(cfg)
    features = raw if m is None else raw @ m.T
    return Dataset(
        features=features,
        env=np.array([r[1] for r in ordered]),
        labels=np.array([0] * n_per_class + [1] * n_per_class, dtype=np.int64),
        meta={"kind": "test", "config_digest": cfg.digest(), "seed": seed,
              "intervention": {"name": env_spec.name, "kind": env_spec.kind,
                               "style_mean": env_spec.style_mean,
                               "clamp": env_spec.clamp},
              "confounder": np.array([r[0] for r in ordered])},
    )


# -- CSV + sidecar persistence ------------------------------------------------

def dataset_to_csv(ds: Dataset) -> str:
    header = [f"f{i}" for i in range(ds.dim)] + ["env", "label"]
    lines = [",".join(header)]
    for i in range(ds.n):
        vals = [format(v, ".17g") for v in ds.features[i]]
        lines.append(",".join(vals + [str(ds.env[i]), str(int(ds.labels[i]))]))
    return "\n".join(lines) + "\n"


def write_dataset(ds: Dataset, path) -> None:
    """Write the CSV plus its `.meta.json` sidecar atomically."""
    from pathlib import Path

    path = Path(path)
    atomic_write_text(path, dataset_to_csv(ds))
    meta = {k: v for k, v in ds.meta.items() if k != "confounder"}
    meta.update({"n": ds.n, "dim": ds.dim})
    atomic_write_text(path.with_suffix(".meta.json"), dumps_json_17g(meta) + "\n")


def read_dataset(path) -> Dataset:
    from pathlib import Path

    path = Path(path)
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    if header[-2:] != ["env", "label"] or not header[0].startswith("f"):
        raise ConfigError(f"{path}: unexpected CSV header")
    dim = len(header) - 2
    feats, envs, labels = [], [], []
    for line in lines[1:]:
        parts = line.split(",")
        feats.append([float(v) for v in parts[:dim]])
        envs.append(parts[dim])
        labels.append(int(parts[dim + 1]))
    meta_path = path.with_suffix(".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return Dataset(np.array(feats, dtype=np.float64), np.array(envs),
                   np.array(labels, dtype=np.int64), meta)


def with_seed(cfg: ScmConfig, seed: int) -> ScmConfig:
    return replace(cfg, seed=seed)
