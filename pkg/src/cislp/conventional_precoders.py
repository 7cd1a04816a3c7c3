"""Baseline user-level precoders (ZF, regularized MMSE, naive MRT) and the
conventional SINR metric used to compare against them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoLinearChannelError, DegenerateChannelError
from .model_core import ChannelMatrix

_COND_CAP = 1e10


@dataclass(frozen=True)
class LinearPrecoder:
    """M x K precoding matrix with unit-norm columns and per-user powers."""

    w: np.ndarray
    powers: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=complex)
        powers = np.array(self.powers, dtype=float)
        if w.ndim != 2 or powers.shape != (w.shape[1],):
            raise ValueError("precoder needs an M x K matrix and K powers")
        if np.any(powers < 0):
            raise ValueError("powers must be nonnegative")
        w.setflags(write=False)
        powers.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "powers", powers)

    def with_powers(self, powers) -> "LinearPrecoder":
        return LinearPrecoder(self.w, np.asarray(powers, dtype=float))


def _normalize_columns(w: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(w, axis=0)
    if np.any(norms == 0):
        raise DegenerateChannelError("a precoder column collapsed to zero")
    return w / norms


def zf_precoder(channel: ChannelMatrix) -> LinearPrecoder:
    """Channel inversion: columns of H^H (H H^H)^-1, normalized."""
    h = channel.h
    gram = h @ h.conj().T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > _COND_CAP:
        raise CoLinearChannelError(
            f"channel rows are (near) co-linear, Gram condition {cond:.3e}")
    w = h.conj().T @ np.linalg.inv(gram)
    return LinearPrecoder(_normalize_columns(w), np.ones(channel.n_users))


def mmse_precoder(channel: ChannelMatrix, sigma2: float, power_budget: float = 1.0) -> LinearPrecoder:
    """Regularized inversion with loading sigma2 * K / P; finite for any H."""
    if sigma2 <= 0:
        raise ValueError("noise variance must be positive")
    if power_budget <= 0:
        raise ValueError("power budget must be positive")
    h = channel.h
    k = channel.n_users
    loading = sigma2 * k / power_budget
    w = h.conj().T @ np.linalg.inv(h @ h.conj().T + loading * np.eye(k))
    return LinearPrecoder(_normalize_columns(w), np.ones(k))


def nmrt_precoder(channel: ChannelMatrix) -> LinearPrecoder:
    """Naive maximum ratio transmission: w_k = h_k^H / |h_k|."""
    norms = channel.row_norms()
    if np.any(norms == 0):
        raise DegenerateChannelError("maximum ratio transmission needs nonzero channel rows")
    w = channel.h.conj().T / norms
    return LinearPrecoder(w, np.ones(channel.n_users))


def conventional_sinr(channel: ChannelMatrix, precoder: LinearPrecoder, sigma2=None) -> np.ndarray:
    """Per-user SINR p_j |h_j w_j|^2 / (sum_{i!=j} p_i |h_j w_i|^2 + sigma^2)."""
    sigma2 = channel.sigma2_noise if sigma2 is None else float(sigma2)
    if precoder.w.shape != (channel.n_antennas, channel.n_users):
        raise ValueError("precoder shape does not match the channel")
    gains = np.abs(channel.h @ precoder.w) ** 2 * precoder.powers  # (j, i) -> p_i |h_j w_i|^2
    signal = np.diag(gains)
    interference = gains.sum(axis=1) - signal
    return signal / (interference + sigma2)
