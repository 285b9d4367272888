"""Adversarial objectives: WGAN-GP critic loss and the three-part generator loss."""

from __future__ import annotations

from typing import Callable

import torch


def contextual_loss(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Batch mean of the per-sample l2 distance."""
    return (x - x_hat).flatten(1).norm(dim=1).mean()


def latent_loss(z: torch.Tensor, z_hat: torch.Tensor) -> torch.Tensor:
    return (z - z_hat).flatten(1).norm(dim=1).mean()


def feature_matching_loss(f_real: torch.Tensor, f_fake: torch.Tensor) -> torch.Tensor:
    """Squared l2 distance between batch-mean feature maps."""
    return (f_real.flatten(1).mean(0) - f_fake.flatten(1).mean(0)).pow(2).sum()


def wasserstein_term(critic: Callable, real: torch.Tensor, fake: torch.Tensor) -> torch.Tensor:
    # negated E[D(real)] - E[D(fake)] so that a minimizer performs the ascent
    return critic(fake).mean() - critic(real).mean()


def gradient_penalty(
    critic: Callable,
    real: torch.Tensor,
    fake: torch.Tensor,
    u: torch.Tensor | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """mean((||grad D(x_mix)|| - 1)^2) on per-sample interpolates ``u*real + (1-u)*fake``."""
    if u is None:
        u = torch.rand(real.shape[0], generator=generator, dtype=real.dtype, device=real.device)
    u = u.view(-1, *([1] * (real.dim() - 1)))
    mix = (u * real + (1 - u) * fake).detach().requires_grad_(True)
    out = critic(mix)
    (grad,) = torch.autograd.grad(out.sum(), mix, create_graph=True)
    return (grad.flatten(1).norm(dim=1) - 1).pow(2).mean()


def critic_loss(
    real: torch.Tensor,
    fake: torch.Tensor,
    critic: Callable,
    gp_coefficient: float = 10.0,
    u: torch.Tensor | None = None,
    generator: torch.Generator | None = None,
):
    """Returns (total, wasserstein, penalty); penalty is skipped when ``gp_coefficient`` is 0."""
    wass = wasserstein_term(critic, real, fake)
    if gp_coefficient == 0:
        penalty = torch.zeros((), dtype=wass.dtype)
    else:
        penalty = gradient_penalty(critic, real, fake, u, generator)
    return wass + gp_coefficient * penalty, wass, penalty


def generator_loss(
    seq: torch.Tensor,
    generate: Callable,
    reencode: Callable,
    critic,
    weights=(50.0, 1.0, 1.0),
    bits: torch.Tensor | None = None,
    adversarial: str = "feature_matching",
):
    """Weighted contextual + latent + adversarial loss for a normalized stack.

    ``generate(seq, bits) -> (x_hat, z)`` reconstructs the current (last)
    step; ``reencode(seq, x_hat, bits) -> z_hat`` is the second encoder.
    With ``adversarial="critic"`` the adversarial term is ``-mean D(x_hat)``
    instead of feature matching. Returns (total, contextual, latent, adversarial).
    """
    x = seq[:, -1]
    x_hat, z = generate(seq, bits)
    z_hat = reencode(seq, x_hat, bits)
    ctx = contextual_loss(x, x_hat)
    lat = latent_loss(z, z_hat)
    if adversarial == "feature_matching":
        adv = feature_matching_loss(critic.features(x), critic.features(x_hat))
    elif adversarial == "critic":
        adv = -critic(x_hat).mean()
    else:
        raise ValueError(f"unknown adversarial loss {adversarial!r}")
    w1, w2, w3 = weights
    return w1 * ctx + w2 * lat + w3 * adv, ctx, lat, adv
