"""Phase-aware beta-sigmoid masks and quadrilateral source completion.

Each of the two mask pairs splits the mixture one-vs-rest. Mask magnitudes
are ``beta * sigma`` and ``beta * (1 - sigma)``; with beta clipped so the two
magnitudes and the unit mixture form a triangle, the law of cosines gives the
phase offsets and the pair sums to exactly 1 + 0j.

Head channel layout per (t, f)::

    0 z_d   1 z_not_d   2 beta_raw_1   3-4 sign_logits_1
    5 z_n   6 z_not_n   7 beta_raw_2   8-9 sign_logits_2
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from trunet.errors import ShapeError
from trunet.kernels import logistic

MAG_GUARD = 1e-8


def sigmoid_pair(z_k, z_notk):
    return logistic(np.asarray(z_k, dtype=np.float64) - z_notk)


def softplus(x):
    return np.logaddexp(0.0, x)


def compute_beta(beta_raw, sigma_k):
    """``1 + softplus(beta_raw)`` clipped to ``1 / |2 sigma_k - 1|``."""
    beta0 = 1.0 + softplus(np.asarray(beta_raw, dtype=np.float64))
    gap = np.abs(2.0 * np.asarray(sigma_k, dtype=np.float64) - 1.0)
    with np.errstate(divide="ignore"):
        bound = np.where(gap > 0, 1.0 / np.where(gap > 0, gap, 1.0), np.inf)
    return np.minimum(beta0, bound)


def phase_from_magnitudes(mag_k, mag_notk):
    """Cosine and |sine| of the angle between mask ``k`` and the mixture."""
    a = np.asarray(mag_k, dtype=np.float64)
    b = np.asarray(mag_notk, dtype=np.float64)
    tiny = a < MAG_GUARD
    safe = np.where(tiny, 1.0, a)
    cos = np.clip((1.0 + a * a - b * b) / (2.0 * safe), -1.0, 1.0)
    cos = np.where(tiny, 1.0, cos)
    sin = np.sqrt(np.maximum(1.0 - cos * cos, 0.0))
    return cos, sin


def triangle_height(mag_k, mag_notk):
    """Height over the unit side of the triangle with sides ``(mag_k, mag_notk, 1)``.

    Uses Kahan's rearrangement of Heron's formula, which stays accurate for
    needle-shaped triangles (clipped beta makes ``|mag_k - mag_notk| = 1``),
    where ``sqrt(1 - cos^2)`` would turn 1e-16 rounding into 1e-8 error.
    """
    a = np.asarray(mag_k, dtype=np.float64)
    b = np.asarray(mag_notk, dtype=np.float64)
    sides = np.sort(np.stack(np.broadcast_arrays(a, b, np.ones_like(a))), axis=0)
    z, y, x = sides  # x >= y >= z
    prod = (x + (y + z)) * (z - (x - y)) * (z + (x - y)) * (x + (y - z))
    area = 0.25 * np.sqrt(np.maximum(prod, 0.0))
    return 2.0 * area


def select_sign(sign_logits, mode: str = "hard", tau: float = 1.0, rng=None):
    """Rotation direction: +1 for class 0, -1 for class 1; ties go to +1.

    ``gumbel`` mode adds ``tau``-scaled Gumbel(0, 1) noise before the argmax
    (forward pass of the straight-through estimator).
    """
    logits = np.asarray(sign_logits, dtype=np.float64)
    if logits.shape[-1] != 2:
        raise ShapeError(f"sign logits need a trailing axis of 2, got {logits.shape}")
    if mode == "gumbel":
        if not tau > 0:
            raise ValueError(f"gumbel temperature must be positive, got {tau}")
        rng = rng if rng is not None else np.random.default_rng()
        logits = logits + tau * rng.gumbel(size=logits.shape)
    elif mode != "hard":
        raise ValueError(f"unknown sign mode {mode!r}")
    return np.where(logits[..., 0] >= logits[..., 1], 1.0, -1.0)


@dataclass(frozen=True)
class PhmPair:
    sigma_k: np.ndarray
    beta: np.ndarray
    mag_k: np.ndarray
    mag_notk: np.ndarray
    cos_k: np.ndarray
    sin_k: np.ndarray
    cos_notk: np.ndarray
    sin_notk: np.ndarray
    xi: np.ndarray
    mask_k: np.ndarray
    mask_notk: np.ndarray


def assemble_pair(z_k, z_notk, beta_raw, sign_logits, mode="hard", tau=1.0, rng=None) -> PhmPair:
    sigma = sigmoid_pair(z_k, z_notk)
    beta = compute_beta(beta_raw, sigma)
    mag_k = beta * sigma
    mag_notk = beta * (1.0 - sigma)
    cos_k, sin_k = phase_from_magnitudes(mag_k, mag_notk)
    cos_n, sin_n = phase_from_magnitudes(mag_notk, mag_k)
    xi = select_sign(sign_logits, mode, tau, rng)
    # Both masks share the triangle's height as |imag| and their real parts
    # are the law-of-cosines projections, which sum to one. Building them
    # from these (not from mag*cos, mag*sin) keeps M_k + M_notk = 1 to
    # rounding even for degenerate triangles, and needs no guard case.
    re_k = 0.5 * (1.0 + mag_k * mag_k - mag_notk * mag_notk)
    im = xi * triangle_height(mag_k, mag_notk)
    mask_k = re_k + 1j * im
    mask_notk = (1.0 - re_k) - 1j * im
    return PhmPair(sigma, beta, mag_k, mag_notk, cos_k, sin_k, cos_n, sin_n, xi,
                   mask_k, mask_notk)


def split_heads(heads):
    h = np.asarray(heads, dtype=np.float64)
    if h.shape[-1] != 10:
        raise ShapeError(f"expected 10 head channels, got {h.shape[-1]}")
    pair = lambda o: (h[..., o], h[..., o + 1], h[..., o + 2], h[..., o + 3 : o + 5])  # noqa: E731
    return pair(0), pair(5)


@dataclass(frozen=True)
class SeparationResult:
    direct: np.ndarray
    reverb: np.ndarray
    noise: np.ndarray
    direct_pair: PhmPair | None = None
    noise_pair: PhmPair | None = None


def separate(X, heads, mode="hard", tau=1.0, rng=None) -> SeparationResult:
    """Direct and noise via their PHM pairs; reverb completes the quadrilateral."""
    X = np.asarray(X)
    heads = np.asarray(heads)
    if heads.shape[:-1] != X.shape:
        raise ShapeError(f"heads {heads.shape} do not match spectrogram {X.shape}")
    d_heads, n_heads = split_heads(heads)
    pd = assemble_pair(*d_heads, mode=mode, tau=tau, rng=rng)
    pn = assemble_pair(*n_heads, mode=mode, tau=tau, rng=rng)
    Y_d = pd.mask_k * X
    Y_n = pn.mask_k * X
    return SeparationResult(Y_d, X - Y_d - Y_n, Y_n, pd, pn)
