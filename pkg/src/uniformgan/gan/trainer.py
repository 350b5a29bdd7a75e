"""Alternating GAN training with optional uniformity/entropy regularization."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..data import LabeledDataset, save_features
from ..numerics import Adam, ParameterSet, Rng, finite_diff_check
from ..numerics import autodiff as ad
from ..regularizers import (
    FeatureBatch,
    RegularizerConfig,
    batch_entropy_metric,
    pairwise_potential_metric,
)
from .networks import MlpNetwork, tap_from_forward
from .objectives import (
    LOSS_KINDS,
    discriminator_loss,
    generator_terms,
    gradient_penalty,
    original_generator_loss,
)

PARAMS_MAGIC = "UNIFORMGAN-PARAMS 1"

# Substreams of the run seed; the training stream is never touched by anything else.
STREAM_TRAIN = 0
STREAM_INIT = 1
STREAM_EVAL = 2
STREAM_VERIFY = 3


class DivergenceError(RuntimeError):
    def __init__(self, step: int, last_record: "MetricsRecord | None", detail: str = ""):
        self.step = step
        self.last_record = last_record
        last = last_record.step if last_record else None
        super().__init__(f"training diverged at step {step} ({detail}); last finite record: step {last}")


@dataclass
class GanConfig:
    z_dim: int = 2
    g_hidden: list = field(default_factory=lambda: [64, 64, 64, 64])
    d_hidden: list = field(default_factory=lambda: [64, 64, 64, 64])
    activation: str = "tanh"
    loss_kind: str = "nonsaturating"
    regularizer: RegularizerConfig = field(default_factory=RegularizerConfig)
    tap_layer_g: int = 1
    tap_layer_d: int = 1
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    beta2: float = 0.9
    batch_size: int = 64
    steps: int = 20000
    n_critic: int | None = None
    gp_weight: float = 10.0
    eval_samples: int = 2000
    gradcheck_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.regularizer, dict):
            self.regularizer = RegularizerConfig(**self.regularizer)
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        if self.n_critic is None:
            self.n_critic = 5 if self.loss_kind == "wgan_gp" else 1
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (uniformity needs pairs)")
        if not 0 <= self.tap_layer_g < len(self.g_hidden):
            raise ValueError(f"tap_layer_g {self.tap_layer_g} outside the generator's hidden layers")
        if not 0 <= self.tap_layer_d < len(self.d_hidden):
            raise ValueError(f"tap_layer_d {self.tap_layer_d} outside the discriminator's hidden layers")
        if self.steps < 0 or self.n_critic < 1 or self.z_dim < 1:
            raise ValueError("steps, n_critic and z_dim must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetricsRecord:
    step: int
    d_loss: float
    g_loss_total: float
    g_loss_ori: float
    l_uni_g: float
    l_uni_d: float
    h_g: float
    h_d: float
    pairwise_potential: float
    batch_entropy_metric: float
    mode_coverage: int
    high_quality_fraction: float

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in asdict(self).values())

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class TrainResult:
    records: list
    generator: MlpNetwork
    discriminator: MlpNetwork
    summary: dict


def mode_coverage(samples: np.ndarray, mode_centers: np.ndarray, sigma: float) -> tuple[int, float]:
    """(modes hit, fraction of high-quality samples).

    A sample is high quality when it lies within 3*sigma of its nearest center; a
    mode is hit when at least N/(5K) high-quality samples fall on it.
    """
    samples = np.asarray(samples, dtype=np.float64)
    centers = np.asarray(mode_centers, dtype=np.float64)
    if len(centers) == 0:
        raise ValueError("need at least one mode center")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    n, k = len(samples), len(centers)
    if n == 0:
        return 0, 0.0
    d2 = ((samples[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    nearest = d2.argmin(axis=1)
    good = np.sqrt(d2[np.arange(n), nearest]) <= 3.0 * sigma
    counts = np.bincount(nearest[good], minlength=k)
    modes_hit = int((counts >= n / (5.0 * k)).sum())
    return modes_hit, float(good.mean())


def build_networks(cfg: GanConfig, data_dim: int) -> tuple[MlpNetwork, MlpNetwork]:
    init = Rng(cfg.seed, STREAM_INIT)
    g = MlpNetwork([cfg.z_dim, *cfg.g_hidden, data_dim], init, cfg.activation, "linear", prefix="G.")
    d = MlpNetwork([data_dim, *cfg.d_hidden, 1], init, cfg.activation, "linear", prefix="D.")
    return g, d


def _d_step(cfg, G, D, opt_d, rng, points):
    m = cfg.batch_size
    real = points[rng.integers(len(points), m)]
    z = rng.normal(m, cfg.z_dim)
    fake = G.predict(z)
    D.params.zero_grad()
    loss = discriminator_loss(D(real), D(fake), cfg.loss_kind)
    if cfg.loss_kind == "wgan_gp":
        eps = rng.uniform(m, 1)
        loss = ad.add(loss, ad.scale(gradient_penalty(D, real, fake, eps), cfg.gp_weight))
    ad.backward(loss)
    opt_d.step()
    return loss.item()


def _g_forward(cfg, G, D, z, regularized: bool):
    fake, g_hidden = G.forward(z)
    scores, d_hidden = D.forward(fake)
    feats_g = tap_from_forward(g_hidden, cfg.tap_layer_g)
    feats_d = tap_from_forward(d_hidden, cfg.tap_layer_d)
    if regularized:
        terms = generator_terms(scores, feats_g, feats_d, cfg.regularizer, cfg.loss_kind)
    else:
        with ad.no_grad():
            terms = generator_terms(scores, feats_g, feats_d, cfg.regularizer, cfg.loss_kind)
        terms["total"] = terms["ori"] = original_generator_loss(scores, cfg.loss_kind)
    return fake, feats_g, terms


def train(cfg: GanConfig, dataset: LabeledDataset, out_dir=None, regularized: bool = True) -> TrainResult:
    """Run the alternating optimisation and return every per-step record.

    With ``regularized`` false the generator minimises the original adversarial
    loss only; regularizer values are still computed for the log, outside the
    graph. If ``out_dir`` is given the run directory receives ``metrics.jsonl``,
    ``params.txt``, ``samples.csv`` and ``summary.json``.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    points = dataset.points
    G, D = build_networks(cfg, points.shape[1])
    opt_g = Adam(G.params, cfg.lr_g, cfg.beta2)
    opt_d = Adam(D.params, cfg.lr_d, cfg.beta2)
    rng = Rng(cfg.seed, STREAM_TRAIN)
    verify_rng = Rng(cfg.seed, STREAM_VERIFY)
    out = Path(out_dir) if out_dir is not None else None
    log = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log = open(out / "metrics.jsonl", "w")
    records: list[MetricsRecord] = []
    gradchecks: list[dict] = []
    try:
        for step in range(1, cfg.steps + 1):
            d_loss = 0.0
            for _ in range(cfg.n_critic):
                d_loss = _d_step(cfg, G, D, opt_d, rng, points)
            z = rng.normal(cfg.batch_size, cfg.z_dim)
            G.params.zero_grad()
            fake, feats_g, terms = _g_forward(cfg, G, D, z, regularized)
            record = _make_record(step, d_loss, terms, fake.value, feats_g, dataset, cfg)
            if not record.is_finite():
                raise DivergenceError(step, records[-1] if records else None, "non-finite loss")
            ad.backward(terms["total"])
            opt_g.step()
            D.params.zero_grad()
            if not (G.params.all_finite() and D.params.all_finite()):
                raise DivergenceError(step, record, "non-finite parameters")
            records.append(record)
            if log is not None:
                log.write(record.to_json() + "\n")
            if cfg.gradcheck_every and step % cfg.gradcheck_every == 0:
                gradchecks.append({"step": step, "max_rel_error": _spot_check(cfg, G, D, z, regularized, verify_rng)})
    finally:
        if log is not None:
            log.close()
    summary = evaluate(cfg, G, D, dataset)
    summary["steps"] = cfg.steps
    summary["regularized"] = regularized
    if gradchecks:
        summary["gradchecks"] = gradchecks
    if out is not None:
        save_parameters(out / "params.txt", [G.params, D.params])
        save_features(out / "samples.csv", summary.pop("_samples"), prefix="x")
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    else:
        summary.pop("_samples")
    return TrainResult(records, G, D, summary)


def _spot_check(cfg, G, D, z, regularized, verify_rng, n_coords: int = 10) -> float:
    coords = verify_rng.choice(G.params.size(), n_coords)

    def objective():
        return _g_forward(cfg, G, D, z, regularized)[2]["total"]

    err = finite_diff_check(objective, G.params, h=1e-6, coords=coords)
    D.params.zero_grad()
    return err


def _make_record(step, d_loss, terms, fake, feats_g: FeatureBatch, dataset, cfg) -> MetricsRecord:
    modes, hq = mode_coverage(fake, dataset.mode_centers, dataset.mode_sigma)
    values = feats_g.values()
    return MetricsRecord(
        step=step,
        d_loss=float(d_loss),
        g_loss_total=terms["total"].item(),
        g_loss_ori=terms["ori"].item(),
        l_uni_g=terms["l_uni_g"].item(),
        l_uni_d=terms["l_uni_d"].item(),
        h_g=terms["h_g"].item(),
        h_d=terms["h_d"].item(),
        pairwise_potential=pairwise_potential_metric(values, 2.0),
        batch_entropy_metric=batch_entropy_metric(values, cfg.regularizer.variance_floor),
        mode_coverage=modes,
        high_quality_fraction=hq,
    )


def evaluate(cfg: GanConfig, G: MlpNetwork, D: MlpNetwork, dataset: LabeledDataset) -> dict:
    """Metrics on a fixed batch of ``eval_samples`` generated points."""
    z = Rng(cfg.seed, STREAM_EVAL).normal(cfg.eval_samples, cfg.z_dim)
    with ad.no_grad():
        samples, g_hidden = G.forward(z)
        _, d_hidden = D.forward(samples)
    fg = g_hidden[cfg.tap_layer_g].value
    fd = d_hidden[cfg.tap_layer_d].value
    floor = cfg.regularizer.variance_floor
    modes, hq = mode_coverage(samples.value, dataset.mode_centers, dataset.mode_sigma)
    return {
        "pairwise_potential": pairwise_potential_metric(fg, 2.0),
        "batch_entropy_metric": batch_entropy_metric(fg, floor),
        "pairwise_potential_d": pairwise_potential_metric(fd, 2.0),
        "batch_entropy_metric_d": batch_entropy_metric(fd, floor),
        "mode_coverage": modes,
        "high_quality_fraction": hq,
        "_samples": samples.value,
    }


def save_parameters(path, param_sets) -> None:
    """Text format: magic line, then per matrix ``name rows cols`` and one line per row."""
    lines = [PARAMS_MAGIC]
    for ps in param_sets:
        for name, node in ps.items():
            rows, cols = node.shape
            lines.append(f"{name} {rows} {cols}")
            lines.extend(" ".join(f"{v:.17g}" for v in row) for row in node.value)
    Path(path).write_text("\n".join(lines) + "\n")


def load_parameters(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != PARAMS_MAGIC:
        raise ValueError(f"{path}: missing {PARAMS_MAGIC!r} header")
    out: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        name, rows, cols = lines[i].split()
        rows, cols = int(rows), int(cols)
        block = [[float(v) for v in lines[i + 1 + r].split()] for r in range(rows)]
        out[name] = np.array(block, dtype=np.float64).reshape(rows, cols)
        i += 1 + rows
    return out


def load_into(params: ParameterSet, values: dict[str, np.ndarray]) -> None:
    for name, node in params.items():
        node.value = values[name].copy()
