"""Optimization-based symbol-level precoding.

CIPM minimizes per-symbol transmit power while forcing every user's
noiseless sample onto its own symbol ray at the exact target magnitude;
the solution lives in the span of the conjugated channel rows and comes
from one real 2K x 2K solve. CIMM maximizes the weighted minimum SNR by
bisecting a common scale on the CIPM targets until the power budget
binds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoSolutionError
from .linear_solvers import bisect, solve_real_linear
from .model_core import ChannelMatrix, PskSymbol, SymbolVector, TransmitVector


@dataclass(frozen=True)
class SnrTargets:
    """Per-user linear SNR targets plus the receiver noise variance."""

    zeta: np.ndarray
    sigma2: float = 1.0

    def __post_init__(self):
        zeta = np.array(self.zeta, dtype=float).reshape(-1)
        if np.any(zeta < 0) or not np.all(np.isfinite(zeta)):
            raise ValueError("SNR targets must be finite and nonnegative")
        if self.sigma2 <= 0:
            raise ValueError("noise variance must be positive")
        zeta.setflags(write=False)
        object.__setattr__(self, "zeta", zeta)

    def scaled(self, factor: float) -> "SnrTargets":
        return SnrTargets(self.zeta * factor, self.sigma2)


@dataclass(frozen=True)
class CipmSolution:
    x: TransmitVector
    nu: np.ndarray
    power: float
    per_user_rx: np.ndarray


@dataclass(frozen=True)
class CimmSolution:
    q: TransmitVector
    t_star: float
    iterations: int


def cipm_solve(channel: ChannelMatrix, d: SymbolVector, targets: SnrTargets) -> CipmSolution:
    """Minimum-power transmit vector with exact per-user alignment.

    Enforces h_j x = sigma * sqrt(zeta_j) * d_j for every user. Writing
    x = H^H nu turns the equalities into a Gram system; its real and
    imaginary parts form the 2K x 2K solve on (Re nu, Im nu). Co-linear
    channels surface as an ill-conditioned-system error.
    """
    k = channel.n_users
    if len(d) != k or targets.zeta.shape[0] != k:
        raise ValueError("need one symbol and one target per user")
    sigma = math.sqrt(targets.sigma2)
    rhs_c = sigma * np.sqrt(targets.zeta) * d.values

    gram = channel.h @ channel.h.conj().T
    a = np.block([[gram.real, -gram.imag],
                  [gram.imag, gram.real]])
    z = solve_real_linear(a, np.concatenate([rhs_c.real, rhs_c.imag]))
    nu = z[:k] + 1j * z[k:]

    x = channel.h.conj().T @ nu
    tx = TransmitVector(x)
    return CipmSolution(x=tx, nu=nu, power=tx.power, per_user_rx=channel.h @ x)


def equivalent_multicast_channel(channel: ChannelMatrix, d: SymbolVector,
                                 d_common: PskSymbol) -> ChannelMatrix:
    """Rotate each row so a common-symbol problem matches the per-symbol one.

    Row j is multiplied by exp(i(angle(d_common) - angle(d_j))); solving
    the power minimization on the rotated channel with every user asking
    for d_common reproduces the original solution power.
    """
    if d_common.order != d.order:
        raise ValueError("common symbol must share the constellation order")
    rotations = np.exp(1j * (d_common.angle - np.angle(d.values)))
    return ChannelMatrix(rotations[:, None] * channel.h, sigma2_noise=channel.sigma2_noise)


def cimm_solve(channel: ChannelMatrix, d: SymbolVector, r, power_budget: float,
               delta=None) -> CimmSolution:
    """Weighted max-min SNR via bisection on a common target scale.

    The minimum power for targets t * r is linear in t, so the optimum is
    the scale at which the power budget binds; the search stops once the
    achieved power is within ``delta`` (default 1e-6 * budget) of it.
    """
    if power_budget <= 0:
        raise ValueError("power budget must be positive")
    r = np.asarray(r, dtype=float).reshape(-1)
    if np.any(r <= 0):
        raise ValueError("max-min weights must be positive")
    if delta is None:
        delta = 1e-6 * power_budget
    if delta <= 0:
        raise ValueError("stopping tolerance must be positive")

    def power_at(t: float) -> float:
        if t == 0.0:
            return 0.0
        sol = cipm_solve(channel, d, SnrTargets(t * r, channel.sigma2_noise))
        return sol.power

    base_power = power_at(1.0)
    if base_power <= 0:
        raise NoSolutionError("unit-scale targets already cost zero power; nothing to bisect")

    hi = 1.0
    extensions = 0
    while power_at(hi) < power_budget:
        hi *= 2.0
        extensions += 1
        if extensions > 200:
            raise NoSolutionError("power budget is unreachable by scaling the targets")

    result = bisect(lambda t: (power_at(t) <= power_budget, power_at(t)),
                    lo=0.0, hi=hi, tol=delta / base_power)
    t_star = result.t
    sol = cipm_solve(channel, d, SnrTargets(t_star * r, channel.sigma2_noise))
    return CimmSolution(q=sol.x, t_star=float(t_star),
                        iterations=result.iterations + extensions)
