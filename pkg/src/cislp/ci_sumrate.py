"""Weighted sum-rate heuristics under constructive interference.

CISR-PA allocates power over the channel eigenbasis, picks per-user
modulation orders, then chooses the basis phases that align every user's
received sample with its symbol. CISR-G projects users onto the optimal
multicast direction, greedily serves the subset whose projections add up
best, and closes with an exact-alignment minimum-power solve. The genie
sum-rate bound assumes naturally aligned crosstalk.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .bounds import multicast_max_sumrate
from .ci_power import SnrTargets, cipm_solve
from .errors import AmbiguousDetectionError, IllConditionedError, ToolkitError, UnsupportedShapeError
from .linear_solvers import hermitian_eig
from .model_core import (
    ChannelMatrix,
    SymbolVector,
    TransmitVector,
    detect_psk,
    wrap_angle,
)

_LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# modulation selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class McsTable:
    """Ordered (PSK order, minimum linear SNR) thresholds."""

    thresholds: tuple
    ser_target: float

    def __post_init__(self):
        thresholds = tuple((int(o), float(s)) for o, s in self.thresholds)
        if not thresholds:
            raise ValueError("threshold table cannot be empty")
        orders = [o for o, _ in thresholds]
        snrs = [s for _, s in thresholds]
        if sorted(orders) != orders or len(set(orders)) != len(orders):
            raise ValueError("orders must be strictly increasing")
        if any(b <= a for a, b in zip(snrs, snrs[1:])):
            raise ValueError("SNR thresholds must be strictly increasing with order")
        object.__setattr__(self, "thresholds", thresholds)

    @classmethod
    def from_ser_target(cls, ser_target: float = 1e-3, orders=(2, 4, 8, 16)) -> "McsTable":
        """Thresholds from the M-PSK symbol-error approximation.

        Inverts SER ~= 2 Q(sqrt(2 zeta) sin(pi/M)) at the requested target,
        so zeta_M = Qinv(ser/2)^2 / (2 sin^2(pi/M)).
        """
        if not 0 < ser_target < 1:
            raise ValueError("SER target must lie in (0, 1)")
        qinv = NormalDist().inv_cdf(1.0 - ser_target / 2.0)
        rows = []
        for order in orders:
            zeta = qinv ** 2 / (2.0 * math.sin(math.pi / order) ** 2)
            rows.append((order, zeta))
        return cls(tuple(rows), ser_target)


def select_mcs(snr: float, table: McsTable):
    """Largest PSK order whose threshold is met; None means no service."""
    chosen = None
    for order, threshold in table.thresholds:
        if snr >= threshold:
            chosen = order
    return chosen


# ---------------------------------------------------------------------------
# shared concave allocation: maximize sum_k w_k log2(1 + (A p)_k), sum p <= P
# ---------------------------------------------------------------------------

def _project_nonneg_budget(p: np.ndarray, budget: float) -> np.ndarray:
    p = np.maximum(p, 0.0)
    total = p.sum()
    if total <= budget:
        return p
    u = np.sort(p)[::-1]
    css = np.cumsum(u) - budget
    idx = np.arange(1, len(u) + 1)
    rho = np.max(idx[u - css / idx > 0])
    theta = css[rho - 1] / rho
    return np.maximum(p - theta, 0.0)


def _max_weighted_log_on_budget(a: np.ndarray, weights: np.ndarray, budget: float,
                                rel_tol=1e-7, max_iterations=20000):
    """Projected gradient ascent for the concave budgeted allocation."""
    a = np.asarray(a, dtype=float)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    n = a.shape[1]

    def objective(p):
        return float(np.sum(weights * np.log2(1.0 + a @ p)))

    def gradient(p):
        return a.T @ (weights / (_LN2 * (1.0 + a @ p)))

    p = np.full(n, budget / n)
    f = objective(p)
    step = budget
    stalled = 0
    for _ in range(max_iterations):
        grad = gradient(p)
        improved = False
        for _ in range(40):
            cand = _project_nonneg_budget(p + step * grad, budget)
            f_cand = objective(cand)
            if f_cand > f:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        rel_gain = (f_cand - f) / max(abs(f), 1e-12)
        p, f = cand, f_cand
        step = min(step * 1.6, 1e6 * budget)
        stalled = stalled + 1 if rel_gain < 0.1 * rel_tol else 0
        if stalled >= 5:
            break
    total = p.sum()
    if 0 < total < budget:
        # the objective is monotone, so spend the rest of the budget
        p = p * (budget / total)
        f = objective(p)
    return p, f


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SumRateSolution:
    q: TransmitVector
    served: tuple
    per_user_snr: np.ndarray
    per_user_order: tuple
    weighted_sum_rate: float
    algorithm_tag: str
    diagnostics: dict


def _served_rate(weights, snr, served):
    return float(sum(weights[j] * math.log2(1.0 + snr[j]) for j in served))


def _detectable(y_j, symbol, order) -> bool:
    """Does the noiseless sample demap (at ``order``) to the symbol's sector?"""
    try:
        return detect_psk(y_j, order, symbol.offset) == detect_psk(symbol.value, order, symbol.offset)
    except AmbiguousDetectionError:
        return False


# ---------------------------------------------------------------------------
# CISR-PA: eigenbasis power allocation + phase alignment
# ---------------------------------------------------------------------------

def _phase_alignment(u: np.ndarray, amps: np.ndarray, target_angles: np.ndarray,
                     restarts: int = 16, max_iter: int = 60):
    """Choose basis phases minimizing the wrapped angle misfit.

    ``u[j, i]`` is the response of user j to basis vector i. Damped
    Gauss-Newton on theta with deterministic restarts; K equations in K
    unknowns, so exact roots are the common case.
    """
    k = u.shape[0]

    def residual(theta):
        f = u @ (amps * np.exp(1j * theta))
        r = wrap_angle(np.angle(f) - target_angles)
        mag2 = np.maximum(np.abs(f) ** 2, 1e-300)
        jac = np.empty((k, k))
        for i in range(k):
            df = 1j * amps[i] * np.exp(1j * theta[i]) * u[:, i]
            jac[:, i] = (np.conj(f) * df).imag / mag2
        return np.asarray(r, dtype=float), jac

    rng = np.random.default_rng(20905)
    best_theta, best_cost = None, np.inf
    for attempt in range(restarts):
        theta = np.zeros(k) if attempt == 0 else rng.uniform(0.0, 2.0 * np.pi, size=k)
        damping = 1e-6
        r, jac = residual(theta)
        cost = float(r @ r)
        for _ in range(max_iter):
            try:
                step = np.linalg.solve(jac.T @ jac + damping * np.eye(k), -jac.T @ r)
            except np.linalg.LinAlgError:
                break
            cand = theta + step
            r2, jac2 = residual(cand)
            cost2 = float(r2 @ r2)
            if cost2 < cost:
                theta, r, jac, cost = cand, r2, jac2, cost2
                damping = max(damping / 3.0, 1e-14)
                if cost < 1e-22:
                    break
            else:
                damping *= 10.0
                if damping > 1e10:
                    break
        if cost < best_cost:
            best_theta, best_cost = theta.copy(), cost
        if best_cost < 1e-22:
            break
    return best_theta, math.sqrt(best_cost)


def cisr_pa(channel: ChannelMatrix, d: SymbolVector, power_budget: float, weights,
            table: McsTable = None, *, restarts: int = 16) -> SumRateSolution:
    """Eigenbasis power allocation with per-user phase alignment."""
    if power_budget <= 0:
        raise ValueError("power budget must be positive")
    k = channel.n_users
    if channel.n_antennas < k:
        raise UnsupportedShapeError("needs at least as many antennas as users")
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.shape[0] != k:
        raise ValueError("one weight per user is required")
    if table is None:
        table = McsTable.from_ser_target()
    sigma2 = channel.sigma2_noise

    # basis: leading eigenvectors of H^H H (they span the channel row space)
    _, vecs = hermitian_eig(channel.h.conj().T @ channel.h)
    basis = vecs[:, :k]
    u = channel.h @ basis                      # user j response to basis i
    gains = np.abs(u) ** 2 / sigma2

    alloc, _ = _max_weighted_log_on_budget(gains, weights, power_budget)
    step1_snr = gains @ alloc
    orders = tuple(select_mcs(s, table) for s in step1_snr)

    amps = np.sqrt(alloc)
    theta, phase_residual = _phase_alignment(u, amps, np.angle(d.values), restarts=restarts)
    q0 = basis @ (amps * np.exp(1j * theta))
    norm0 = np.linalg.norm(q0)
    if norm0 == 0:
        q0 = basis[:, 0]
        norm0 = np.linalg.norm(q0)
    q = TransmitVector(q0 * (math.sqrt(power_budget) / norm0))

    rx = channel.h @ q.x
    snr = np.abs(rx) ** 2 / sigma2
    served = tuple(
        j for j in range(k)
        if orders[j] is not None and _detectable(rx[j], d[j], orders[j]))
    return SumRateSolution(
        q=q, served=served, per_user_snr=snr, per_user_order=orders,
        weighted_sum_rate=_served_rate(weights, snr, served),
        algorithm_tag="PA",
        diagnostics={"allocation": alloc, "phase_residual": phase_residual,
                     "step1_snr": step1_snr})


# ---------------------------------------------------------------------------
# CISR-G: greedy multicast-projection user selection
# ---------------------------------------------------------------------------

def _greedy_targets(subset, proj2, jstar, power_budget, sigma2, strict_iota):
    """Per-user SNR targets from the log-proportional projection rule."""
    members = np.array(subset)
    g2 = proj2[members]
    if strict_iota:
        nums = np.log2(g2)
    elif np.all(g2 > 1.0):
        nums = np.log2(g2)
    else:
        nums = np.log2(1.0 + g2 * power_budget / sigma2)
    denom = nums.sum()
    if not np.isfinite(denom) or denom <= 0:
        return None
    iota = nums / denom
    cap = iota * proj2[jstar]
    targets = np.minimum(g2, cap)
    if np.any(~np.isfinite(targets)) or np.any(targets <= 0):
        return None
    return targets


def _restricted_min_power(channel: ChannelMatrix, d: SymbolVector, subset, targets):
    """Exact-alignment minimum-power solve on a user subset.

    Falls back to a pseudo-inverse solve when the subset rows are
    co-linear but the targets stay consistent (identical users asking for
    the same ray), which the strict solve rejects.
    """
    rows = channel.h[list(subset)]
    sigma2 = channel.sigma2_noise
    sub_channel = ChannelMatrix(rows, sigma2)
    sub_symbols = SymbolVector(tuple(d[j] for j in subset))
    try:
        sol = cipm_solve(sub_channel, sub_symbols, SnrTargets(targets, sigma2))
        return sol.x.x
    except IllConditionedError:
        rhs = math.sqrt(sigma2) * np.sqrt(targets) * sub_symbols.values
        x = np.linalg.pinv(rows) @ rhs
        if np.linalg.norm(rows @ x - rhs) <= 1e-6 * max(1.0, np.linalg.norm(rhs)):
            return x
        raise


def cisr_g(channel: ChannelMatrix, d: SymbolVector, power_budget: float, weights,
           table: McsTable = None, *, strict_iota: bool = False,
           max_users: int = 12) -> SumRateSolution:
    """Greedy sum-rate maximization along the optimal multicast direction."""
    if power_budget <= 0:
        raise ValueError("power budget must be positive")
    k = channel.n_users
    if k > max_users:
        raise UnsupportedShapeError(f"subset enumeration supports at most {max_users} users")
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.shape[0] != k:
        raise ValueError("one weight per user is required")
    if table is None:
        table = McsTable.from_ser_target()
    sigma2 = channel.sigma2_noise

    q_cov, _ = multicast_max_sumrate(channel, power_budget, weights)
    _, vecs = hermitian_eig(q_cov)
    direction = vecs[:, 0]
    proj = channel.h @ direction
    proj2 = np.abs(proj) ** 2
    jstar = int(np.argmax(proj2))

    effective_snr = np.real(np.einsum("ij,jk,ik->i", channel.h, q_cov, channel.h.conj())) / sigma2
    orders = tuple(select_mcs(s, table) for s in effective_snr)

    subsets = sorted(itertools.chain.from_iterable(
        itertools.combinations(range(k), size) for size in range(1, k + 1)))
    scores = {s: abs(sum(proj[j] for j in s)) ** 2 for s in subsets}
    ranked = sorted(subsets, key=lambda s: (-scores[s], s))

    solution = None
    for subset in ranked:
        targets = _greedy_targets(subset, proj2, jstar, power_budget, sigma2, strict_iota)
        if targets is None:
            continue
        try:
            x = _restricted_min_power(channel, d, subset, targets)
        except ToolkitError:
            continue
        norm_x = np.linalg.norm(x)
        if norm_x == 0:
            continue
        solution = (subset, x * (math.sqrt(power_budget) / norm_x))
        break

    if solution is None:
        solution = (
            (jstar,),
            math.sqrt(power_budget) * (channel.h[jstar].conj() / np.linalg.norm(channel.h[jstar]))
            * d[jstar].value)

    served, q_vec = solution
    rx = channel.h @ q_vec
    snr = np.abs(rx) ** 2 / sigma2
    rate = _served_rate(weights, snr, served)

    # the greedy outcome must never lose to its own single-user base case
    fallback_q = (math.sqrt(power_budget)
                  * (channel.h[jstar].conj() / np.linalg.norm(channel.h[jstar]))
                  * d[jstar].value)
    fallback_rx = channel.h @ fallback_q
    fallback_snr = np.abs(fallback_rx) ** 2 / sigma2
    fallback_rate = _served_rate(weights, fallback_snr, (jstar,))
    used_fallback = fallback_rate > rate
    if used_fallback:
        served, q_vec, rx, snr, rate = (jstar,), fallback_q, fallback_rx, fallback_snr, fallback_rate

    return SumRateSolution(
        q=TransmitVector(q_vec), served=tuple(served), per_user_snr=snr,
        per_user_order=orders, weighted_sum_rate=rate, algorithm_tag="G",
        diagnostics={"projections": proj, "subset_scores": scores,
                     "best_user": jstar, "used_fallback": used_fallback})


# ---------------------------------------------------------------------------
# genie sum-rate bound
# ---------------------------------------------------------------------------

def genie_sumrate(g_norms, xi, power_budget: float) -> float:
    """Best sum rate when every cross term is credited as aligned power.

    Maximizes sum_k log2(1 + |g_k|^2 sum_j |xi_kj|^2 p_j) over the power
    simplex; concave, solved by projected gradient.
    """
    if power_budget <= 0:
        raise ValueError("power budget must be positive")
    g_norms = np.asarray(g_norms, dtype=float).reshape(-1)
    xi = np.asarray(xi, dtype=complex)
    gains = (g_norms[:, None] ** 2) * np.abs(xi) ** 2
    _, value = _max_weighted_log_on_budget(gains, np.ones(gains.shape[0]), power_budget)
    return value
