"""Noise schedule for the discrete diffusion chain.

A schedule fixes the per-step noise rates ``beta[k]`` for ``k = 1..K`` and
everything derived from them:

* ``alpha[k] = 1 - beta[k]`` and the cumulative product ``alpha_bar[k]``,
  which control the forward (noising) map and the reverse (denoising) step;
* the amplification coefficients ``A[k]`` with which a per-step noise
  prediction error propagates into the final reconstructed state, and their
  squared maximum ``c1``.

Noising a state ``s0`` to level ``k`` is the single jump

    ``sqrt(alpha_bar[k]) * s0 + sqrt(1 - alpha_bar[k]) * eps``

and one reverse step from level ``k`` is

    ``(s_k - beta[k] / sqrt(1 - alpha_bar[k]) * eps_pred) / sqrt(alpha[k])
      + sqrt(beta[k]) * noise``.

A unit prediction error at step ``k`` reaches the final state scaled by

    ``A[k] = (prod_{i>k} alpha[i]^-1/2) * (1 - alpha[k])
             / sqrt(alpha[k] * (1 - alpha_bar[k]))``

so the accumulated squared error after the full chain is ``sum_k A[k]^2``
times the per-step MSE, which is at most ``c1 * K`` times it with
``c1 = max_k A[k]^2``.

All schedule arithmetic is float64 regardless of what precision the
networks use, keeping ``A[k]`` and ``c1`` accurate to ~1e-12.  Instances
are frozen and safe to share across workers.
"""

from dataclasses import dataclass, field

import numpy as np

KINDS = ("linear", "cosine")

_COSINE_OFFSET = 0.008
_BETA_CLIP = (1e-8, 0.999)


@dataclass(frozen=True)
class Schedule:
    """Immutable noise schedule over K discrete steps (1-indexed)."""

    kind: str
    num_steps: int
    beta_lo: float
    beta_hi: float
    betas: np.ndarray
    alphas: np.ndarray = field(repr=False)
    alpha_bars: np.ndarray = field(repr=False)
    step_coeffs: np.ndarray = field(repr=False)
    c1: float = 0.0

    def descriptor(self) -> dict:
        """The four construction parameters; enough to rebuild the schedule."""
        return {
            "kind": self.kind,
            "num_steps": self.num_steps,
            "beta_lo": self.beta_lo,
            "beta_hi": self.beta_hi,
        }


def build_schedule(kind: str, num_steps: int, beta_lo: float, beta_hi: float) -> Schedule:
    """Construct a schedule of the given kind.

    ``linear`` interpolates beta evenly from ``beta_lo`` to ``beta_hi``;
    ``cosine`` derives the betas from a squared-cosine alpha_bar profile
    (``beta_lo``/``beta_hi`` are validated but do not shape the profile,
    which is clipped to (0, 0.999)).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}, expected one of {KINDS}")
    if num_steps < 1:
        raise ValueError(f"num_steps must be >= 1, got {num_steps}")
    if not (0.0 < beta_lo <= beta_hi < 1.0):
        raise ValueError(
            f"beta bounds must satisfy 0 < beta_lo <= beta_hi < 1, got ({beta_lo}, {beta_hi})"
        )

    if kind == "linear":
        betas = np.linspace(beta_lo, beta_hi, num_steps, dtype=np.float64)
    else:
        s = _COSINE_OFFSET
        ks = np.arange(num_steps + 1, dtype=np.float64)
        profile = np.cos((ks / num_steps + s) / (1.0 + s) * np.pi / 2.0) ** 2
        profile /= profile[0]
        betas = 1.0 - profile[1:] / profile[:-1]
        betas = np.clip(betas, *_BETA_CLIP)

    return _from_betas(kind, betas, beta_lo, beta_hi)


def _from_betas(kind, betas, beta_lo, beta_hi):
    betas = np.asarray(betas, dtype=np.float64)
    if np.any(betas <= 0.0) or np.any(betas >= 1.0):
        raise ValueError("every beta must lie strictly in (0, 1)")
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    coeffs, c1 = _accumulation_from(alphas, alpha_bars)
    sched = Schedule(
        kind=kind,
        num_steps=len(betas),
        beta_lo=float(beta_lo),
        beta_hi=float(beta_hi),
        betas=betas,
        alphas=alphas,
        alpha_bars=alpha_bars,
        step_coeffs=coeffs,
        c1=c1,
    )
    for arr in (sched.betas, sched.alphas, sched.alpha_bars, sched.step_coeffs):
        arr.setflags(write=False)
    return sched


def _accumulation_from(alphas, alpha_bars):
    # tail[k] = prod_{i > k} alpha_i^(-1/2), with tail of the last step = 1
    inv_sqrt = 1.0 / np.sqrt(alphas)
    tail = np.ones_like(alphas)
    tail[:-1] = np.cumprod(inv_sqrt[::-1])[::-1][1:]
    per_step = (1.0 - alphas) / np.sqrt(alphas * (1.0 - alpha_bars))
    coeffs = tail * per_step
    return coeffs, float(np.max(coeffs**2))


def accumulation_constants(sched: Schedule) -> tuple[np.ndarray, float]:
    """Per-step error amplification coefficients A_k and c1 = max_k A_k^2."""
    return _accumulation_from(sched.alphas, sched.alpha_bars)


def _check_step(sched, k):
    if not 1 <= k <= sched.num_steps:
        raise ValueError(f"step {k} out of range 1..{sched.num_steps}")


def _check_dims(name_a, a, name_b, b):
    if a.shape != b.shape:
        raise ValueError(f"{name_a} shape {a.shape} does not match {name_b} shape {b.shape}")


def forward_noise(sched: Schedule, s0: np.ndarray, k: int, eps: np.ndarray) -> np.ndarray:
    """Noise a clean state directly to level k with caller-supplied eps."""
    _check_step(sched, k)
    s0 = np.asarray(s0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    _check_dims("s0", s0, "eps", eps)
    ab = sched.alpha_bars[k - 1]
    return np.sqrt(ab) * s0 + np.sqrt(1.0 - ab) * eps


def reverse_step(
    sched: Schedule, sk: np.ndarray, eps_pred: np.ndarray, k: int, noise: np.ndarray
) -> np.ndarray:
    """One reverse step from level k to k-1.

    At k = 1 the injected noise is forced to zero so the chain ends on the
    mean prediction; the noise argument is ignored there.
    """
    _check_step(sched, k)
    sk = np.asarray(sk, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    _check_dims("sk", sk, "eps_pred", eps_pred)
    _check_dims("sk", sk, "noise", noise)
    i = k - 1
    mean = (sk - sched.betas[i] / np.sqrt(1.0 - sched.alpha_bars[i]) * eps_pred) / np.sqrt(
        sched.alphas[i]
    )
    if k == 1:
        return mean
    return mean + np.sqrt(sched.betas[i]) * noise
