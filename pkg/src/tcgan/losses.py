"""Adversarial objective: WGAN with gradient penalty plus a weighted
reconstruction term on the fixed-latent generation."""

import numpy as np

from .grad import Tensor, ops
from .grad.tensor import active_tape


def rec_loss(fake, target):
    """Mean squared error between two same-shape images."""
    if fake.shape != target.shape:
        raise ValueError(
            f"reconstruction loss: shapes differ, {fake.shape} vs {target.shape}"
        )
    d = ops.sub(fake, target)
    return ops.mean(ops.mul(d, d))


def gradient_penalty(critic, real, fake, weight=0.1, rng=None, eps_value=None):
    """weight * (||grad_x critic(x_hat)||_2 - 1)^2 at a random interpolate.

    Must run under an active Tape: the input gradient is produced by a
    traced backward pass (create_graph), so the penalty's own gradient
    with respect to the critic parameters is exact.
    """
    tape = active_tape()
    if tape is None:
        raise RuntimeError("gradient_penalty requires an active Tape")
    if eps_value is None:
        if rng is None:
            raise ValueError("gradient_penalty needs an rng or an explicit eps_value")
        eps_value = float(rng.uniform())
    real = real.data if isinstance(real, Tensor) else np.asarray(real)
    fake = fake.data if isinstance(fake, Tensor) else np.asarray(fake)
    if real.shape != fake.shape:
        raise ValueError(
            f"gradient penalty: shapes differ, {real.shape} vs {fake.shape}"
        )
    xhat = Tensor(eps_value * real + (1.0 - eps_value) * fake, requires_grad=True)
    score = critic.score(xhat)
    (gx,) = tape.grad(score, [xhat], create_graph=True)
    gnorm = ops.l2_norm(gx)
    return ops.mul(float(weight), ops.square(ops.sub(gnorm, 1.0)))


def critic_loss(critic, real, fake, gp_weight=0.1, rng=None, eps_value=None):
    """score(fake) - score(real) + gradient penalty; returns the total and
    the individual terms for logging and auditing."""
    s_fake = critic.score(fake)
    s_real = critic.score(real)
    gp = gradient_penalty(critic, real, fake, gp_weight, rng=rng, eps_value=eps_value)
    total = ops.add(ops.sub(s_fake, s_real), gp)
    return total, {"adv_d": ops.sub(s_fake, s_real), "gp": gp}


def generator_loss(critic, fake_random, fake_rec, target, gamma=10.0):
    """-score(fake_random) + gamma * rec_loss(fake_rec, target)."""
    adv = ops.neg(critic.score(fake_random))
    rec = rec_loss(fake_rec, target)
    total = ops.add(adv, ops.mul(float(gamma), rec))
    return total, {"adv_g": adv, "rec": rec}
