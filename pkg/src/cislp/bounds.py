"""Theoretical comparison curves for the precoders.

The genie power bound assumes every crosstalk term is already aligned,
so precoding reduces to a power-allocation LP over the maximum-ratio
beam structure. The multicast bounds drop per-user phase constraints:
min-power as a covariance SDP, its rank-one restriction by
randomization, and the max-sum-rate covariance on the trace ball.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ci_closed_form import nmrt_factorization
from .errors import DegenerateChannelError
from .linear_solvers import hermitian_eig, solve_lp_min_sum, solve_sdp_min_trace
from .model_core import ChannelMatrix


@dataclass(frozen=True)
class BoundResult:
    kind: str
    value: float
    certificate: dict


def genie_min_power(g_norms, xi, zeta) -> BoundResult:
    """LP lower bound: min sum(p) with |g_k|^2 sum_j |xi_kj|^2 p_j >= zeta_k.

    ``g_norms`` and ``xi`` come from the maximum-ratio factorization (see
    nmrt_factorization); every cross term is credited as useful power.
    """
    g_norms = np.asarray(g_norms, dtype=float).reshape(-1)
    xi = np.asarray(xi, dtype=complex)
    zeta = np.asarray(zeta, dtype=float).reshape(-1)
    gains = (g_norms[:, None] ** 2) * np.abs(xi) ** 2
    lp = solve_lp_min_sum(gains, zeta)
    delivered = gains @ lp.p
    return BoundResult(
        kind="genie_pwr", value=lp.objective,
        certificate={"p": lp.p, "tight_constraints": lp.tight_constraints,
                     "delivered": delivered})


def genie_min_power_from_channel(channel: ChannelMatrix, zeta) -> BoundResult:
    """Convenience wrapper building the maximum-ratio factorization first."""
    state = nmrt_factorization(channel)
    return genie_min_power(np.linalg.norm(state.g, axis=1), state.xi, zeta)


def multicast_min_power(channel: ChannelMatrix, zeta) -> BoundResult:
    """Optimal covariance power bound: min tr(Q), h_j Q h_j^H >= zeta_j."""
    sdp = solve_sdp_min_trace(channel.h, zeta)
    return BoundResult(
        kind="multicast_pwr", value=sdp.primal_value,
        certificate={"q": sdp.q, "dual_gap": sdp.dual_gap,
                     "iterations": sdp.iterations})


def multicast_min_power_rank1(channel: ChannelMatrix, zeta, samples: int = 1000,
                              seed: int = 0) -> BoundResult:
    """Best rank-one covariance via principal direction plus randomization.

    Candidates are the principal eigenvector of the SDP optimum, Gaussian
    draws shaped by it, and the common-ray pseudo-inverse direction; each
    is rescaled to feasibility, and the cheapest trace wins. The value can
    only sit above the unconstrained SDP optimum.
    """
    if samples < 1:
        raise ValueError("at least one randomization sample is required")
    zeta = np.asarray(zeta, dtype=float).reshape(-1)
    sdp = multicast_min_power(channel, zeta)
    q = sdp.certificate["q"]
    h = channel.h

    vals, vecs = hermitian_eig(q)
    candidates = [vecs[:, 0]]

    rng = np.random.default_rng(seed)
    root = vecs @ np.diag(np.sqrt(np.maximum(vals, 0.0))) @ vecs.conj().T
    draws = root @ (rng.standard_normal((channel.n_antennas, samples))
                    + 1j * rng.standard_normal((channel.n_antennas, samples))) / np.sqrt(2)
    candidates.extend(draws.T)

    gram = h @ h.conj().T
    if np.isfinite(np.linalg.cond(gram)) and np.linalg.cond(gram) < 1e12:
        candidates.append(h.conj().T @ np.linalg.solve(gram, np.sqrt(zeta).astype(complex)))

    active = zeta > 0
    best_value = np.inf
    best_w = None
    for w in candidates:
        norm_w = np.linalg.norm(w)
        if norm_w == 0:
            continue
        gains = np.abs(h @ w) ** 2
        if np.any(gains[active] <= 0):
            continue
        t = float(np.max(zeta[active] / gains[active])) if np.any(active) else 0.0
        value = t * float(norm_w ** 2)
        if value < best_value:
            best_value = value
            best_w = np.sqrt(t) * w
    if best_w is None:
        raise DegenerateChannelError("no rank-one candidate covers every positive target")
    return BoundResult(
        kind="multicast_pwr_rank1", value=best_value,
        certificate={"w": best_w, "samples": samples, "sdp_value": sdp.value})


def _project_psd_trace_ball(q: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto {Q >= 0, tr(Q) <= budget}."""
    q = 0.5 * (q + q.conj().T)
    vals, vecs = np.linalg.eigh(q)
    vals = np.maximum(vals, 0.0)
    total = vals.sum()
    if total > budget:
        # water-level shift onto the simplex {v >= 0, sum v = budget}
        u = np.sort(vals)[::-1]
        css = np.cumsum(u) - budget
        idx = np.arange(1, len(u) + 1)
        rho = np.max(idx[u - css / idx > 0])
        theta = css[rho - 1] / rho
        vals = np.maximum(vals - theta, 0.0)
    return (vecs * vals) @ vecs.conj().T


def multicast_max_sumrate(channel: ChannelMatrix, power_budget: float, weights,
                          *, rel_tol=1e-5, max_iterations=20000):
    """Covariance maximizing the weighted sum rate on the trace ball.

    Projected gradient ascent with Armijo backtracking; the objective is
    concave and monotone in Q, so the budget is active at the optimum.
    Returns (Q_o, BoundResult).
    """
    if power_budget <= 0:
        raise ValueError("power budget must be positive")
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.shape[0] != channel.n_users or np.any(weights < 0):
        raise ValueError("need one nonnegative weight per user")
    h = channel.h
    sigma2 = channel.sigma2_noise
    m = channel.n_antennas
    ln2 = np.log(2.0)

    def objective(q):
        rx = np.real(np.einsum("ij,jk,ik->i", h, q, h.conj()))
        return float(np.sum(weights * np.log2(1.0 + rx / sigma2)))

    def gradient(q):
        rx = np.real(np.einsum("ij,jk,ik->i", h, q, h.conj()))
        coef = weights / (ln2 * (sigma2 + rx))
        return (h.conj().T * coef) @ h

    q = np.eye(m, dtype=complex) * (power_budget / m)
    f = objective(q)
    step = power_budget
    iterations = 0
    stalled = 0
    while iterations < max_iterations:
        iterations += 1
        grad = gradient(q)
        improved = False
        for _ in range(40):
            cand = _project_psd_trace_ball(q + step * grad, power_budget)
            f_cand = objective(cand)
            gap = float(np.real(np.vdot(grad, cand - q)))
            if f_cand >= f + 1e-4 * gap or f_cand > f:
                improved = f_cand > f
                break
            step *= 0.5
        if not improved:
            break
        rel_gain = (f_cand - f) / max(abs(f), 1e-12)
        q, f = cand, f_cand
        step = min(step * 1.6, 1e6 * power_budget)
        stalled = stalled + 1 if rel_gain < 0.05 * rel_tol else 0
        if stalled >= 5:
            break

    # monotone objective: spend the whole budget
    trace = float(np.real(np.trace(q)))
    if 0 < trace < power_budget:
        q = q * (power_budget / trace)
        f = objective(q)
    q = 0.5 * (q + q.conj().T)
    result = BoundResult(kind="multicast_sumrate", value=f,
                         certificate={"iterations": iterations,
                                      "trace": float(np.real(np.trace(q)))})
    return q, result
