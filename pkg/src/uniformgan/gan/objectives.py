"""Adversarial objectives and the regularized generator loss."""

from __future__ import annotations

import numpy as np

from ..numerics import autodiff as ad
from ..numerics.autodiff import Node
from ..regularizers import FeatureBatch, RegularizerConfig, batch_entropy, uniformity_loss

LOSS_KINDS = ("wgan_gp", "nonsaturating")


def _check_kind(kind: str) -> None:
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else ad.constant(np.asarray(x, dtype=np.float64).reshape(-1, 1))


def discriminator_objective(real_scores, fake_scores, kind: str) -> Node:
    """Critic value for ``wgan_gp`` (to maximize); cross-entropy loss for ``nonsaturating`` (to minimize)."""
    _check_kind(kind)
    real, fake = _as_node(real_scores), _as_node(fake_scores)
    if real.shape != fake.shape:
        raise ad.ShapeError(f"score shapes differ: {real.shape} vs {fake.shape}")
    if kind == "wgan_gp":
        return ad.add(ad.mean(real), ad.neg(ad.mean(fake)))
    # -log sigmoid(r) = softplus(-r); -log(1 - sigmoid(f)) = softplus(f)
    return ad.add(ad.mean(ad.softplus(ad.neg(real))), ad.mean(ad.softplus(fake)))


def discriminator_loss(real_scores, fake_scores, kind: str) -> Node:
    """The discriminator objective expressed as a quantity to minimize."""
    obj = discriminator_objective(real_scores, fake_scores, kind)
    return ad.neg(obj) if kind == "wgan_gp" else obj


def gradient_penalty(critic, real: np.ndarray, fake: np.ndarray, eps: np.ndarray) -> Node:
    """mean((||grad_x critic(x_hat)|| - 1)^2) on random interpolates x_hat."""
    x_hat = ad.parameter(eps * real + (1.0 - eps) * fake)
    scores = critic(x_hat)
    (g,) = ad.grad(ad.total(scores), [x_hat], create_graph=True)
    norms = ad.sqrt(ad.add(ad.row_sum(ad.mul(g, g)), ad.constant(1e-12)))
    dev = ad.add(norms, ad.constant(-1.0))
    return ad.mean(ad.mul(dev, dev))


def original_generator_loss(fake_scores, kind: str) -> Node:
    _check_kind(kind)
    fake = _as_node(fake_scores)
    if kind == "wgan_gp":
        return ad.neg(ad.mean(fake))
    return ad.mean(ad.softplus(ad.neg(fake)))


def generator_terms(fake_scores, features_g: FeatureBatch, features_d: FeatureBatch, cfg: RegularizerConfig, kind: str) -> dict[str, Node]:
    """All pieces of the regularized generator loss, including ``total``."""
    fake = _as_node(fake_scores)
    for name, fb in (("generator", features_g), ("discriminator", features_d)):
        if fb.size != fake.shape[0]:
            raise ValueError(f"{name} feature batch has {fb.size} rows, fake batch has {fake.shape[0]}")
    ori = original_generator_loss(fake, kind)
    l_uni_g = uniformity_loss(features_g, cfg.gamma, cfg.normalize_features)
    l_uni_d = uniformity_loss(features_d, cfg.gamma, cfg.normalize_features)
    h_g = batch_entropy(features_g, cfg.variance_floor)
    h_d = batch_entropy(features_d, cfg.variance_floor)
    total = ori
    total = ad.add(total, ad.scale(l_uni_g, cfg.lambda_g))
    total = ad.add(total, ad.scale(l_uni_d, cfg.lambda_d))
    total = ad.add(total, ad.scale(h_g, -cfg.delta_g))
    total = ad.add(total, ad.scale(h_d, -cfg.delta_d))
    return {"total": total, "ori": ori, "l_uni_g": l_uni_g, "l_uni_d": l_uni_d, "h_g": h_g, "h_d": h_d}


def generator_objective(fake_scores, features_g: FeatureBatch, features_d: FeatureBatch, cfg: RegularizerConfig, kind: str) -> Node:
    """L_ori + lambda_g*L_uni(G) + lambda_d*L_uni(D) - delta_g*H(G) - delta_d*H(D)."""
    return generator_terms(fake_scores, features_g, features_d, cfg, kind)["total"]
