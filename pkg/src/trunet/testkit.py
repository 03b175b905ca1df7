"""Synthetic direct + reverb + noise scenes with exactly known components.

The reverb here is a toy sparse exponential tail, not a room simulator; it is
only meant to give the three-way decomposition ground truth for tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from trunet.losses import mix_at_snr
from trunet.phm import separate


@dataclass(frozen=True)
class SyntheticScene:
    y_d: np.ndarray
    y_r: np.ndarray
    y_n: np.ndarray
    x: np.ndarray
    snr_db: float
    drr_db: float


def reverb_tail(decay_tau: float, delay: int, rng, sample_rate: int = 16000,
                density: float = 0.25, floor: float = 1e-4) -> np.ndarray:
    """Sparse random-sign taps from ``delay`` on, amplitude ``exp(-n / (tau*fs))``.

    Tap 0 (the direct path) is always zero.
    """
    if not decay_tau > 0:
        raise ValueError("decay_tau must be positive")
    if delay < 1:
        raise ValueError("reverb delay must be at least one sample")
    tc = decay_tau * sample_rate
    length = max(delay + 1, int(np.ceil(tc * np.log(1.0 / floor))) + 1)
    n = np.arange(length)
    taps = np.exp(-n / tc) * rng.choice([-1.0, 1.0], size=length)
    taps *= rng.random(length) < density
    taps[:delay] = 0.0
    return taps


def synth_reverb(dry, decay_tau: float, delay: int, rng, sample_rate: int = 16000) -> np.ndarray:
    """Full convolution of ``dry`` with a :func:`reverb_tail`."""
    dry = np.asarray(dry, dtype=np.float64)
    return fftconvolve(dry, reverb_tail(decay_tau, delay, rng, sample_rate))


def make_scene(dry, noise, snr_db: float, drr_db: float, rng, decay_tau: float = 0.15,
               delay: int = 80) -> SyntheticScene:
    """``x = y_d + y_r + y_n`` with the requested DRR and SNR.

    ``y_n`` is defined as ``x - y_d - y_r`` after mixing so the scene identity
    holds to a few ulps in floating point.
    """
    y_d = np.asarray(dry, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if len(noise) != len(y_d):
        raise ValueError("dry and noise must have the same length")
    e_d = np.sum(y_d**2)
    if e_d <= 0 or np.sum(noise**2) <= 0:
        raise ValueError("make_scene needs non-zero dry and noise energy")
    if np.isinf(drr_db) and drr_db > 0:
        y_r = np.zeros_like(y_d)
    else:
        tail = synth_reverb(y_d, decay_tau, delay, rng)[: len(y_d)]
        e_r = np.sum(tail**2)
        if e_r <= 0:
            raise ValueError("reverb tail has zero energy inside the clip")
        y_r = tail * np.sqrt(e_d / (e_r * 10.0 ** (drr_db / 10.0)))
    x = mix_at_snr(y_d + y_r, noise, snr_db)
    y_n = x - y_d - y_r
    return SyntheticScene(y_d, y_r, y_n, x, float(snr_db), float(drr_db))


def ideal_heads(X, Y_d, Y_n, logit_clip: float = 1000.0):
    """Head values whose PHM pairs reproduce the ideal masks ``Y/X``.

    Any complex mask ``M`` and its complement ``1 - M`` satisfy the triangle
    inequalities, so the inversion is exact up to rounding wherever ``X != 0``.
    """
    X = np.asarray(X)
    heads = np.zeros(X.shape + (10,))
    safe = np.where(X == 0, 1.0, X)
    for offset, Y in ((0, Y_d), (5, Y_n)):
        M = np.where(X == 0, 0.5, np.asarray(Y) / safe)
        a, b = np.abs(M), np.abs(1.0 - M)
        beta = a + b
        with np.errstate(divide="ignore"):
            logit = np.log(a) - np.log(b)
        heads[..., offset] = np.clip(logit, -logit_clip, logit_clip)
        # inverse softplus of beta - 1; beta == 1 maps to a large negative raw value
        excess = beta - 1.0
        with np.errstate(divide="ignore"):
            raw = np.where(excess > 30, excess, np.log(np.expm1(np.maximum(excess, 1e-300))))
        heads[..., offset + 2] = np.maximum(raw, -700.0)
        heads[..., offset + 3] = np.where(M.imag >= 0, 1.0, -1.0)
    return heads


def spectral_snr_db(ref, est) -> float:
    return float(10.0 * np.log10(np.sum(np.abs(ref) ** 2) / np.sum(np.abs(est - ref) ** 2)))


def oracle_separation(X, Y_d, Y_n):
    return separate(X, ideal_heads(X, Y_d, Y_n))
