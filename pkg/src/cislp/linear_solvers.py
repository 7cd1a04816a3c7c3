"""Small dense numerical kernels used by the precoders and bounds.

Everything here is sized for desk-scale problems (K, M <= 16): a
phase-fixed complex SVD, Hermitian eigendecomposition, a real linear
solve with a condition guard, a two-phase tableau simplex, a log-barrier
solver for the min-trace covariance SDP, scalar bisection, and a damped
Gauss-Newton solver for the two-angle Givens rotation system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ContractViolationError,
    DegenerateChannelError,
    IllConditionedError,
    InfeasibleError,
    NoSolutionError,
    RotationInfeasibleError,
    SolverFailureError,
    UnsupportedShapeError,
)


def _as_matrix(h) -> np.ndarray:
    """Accept a ChannelMatrix or a plain 2-D array."""
    mat = getattr(h, "h", h)
    return np.asarray(mat, dtype=complex)


# ---------------------------------------------------------------------------
# SVD / eigendecomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SvdFactors:
    """H = S V D with S (K x K) and D (M x M) unitary, V rectangular diagonal."""

    s: np.ndarray
    v: np.ndarray
    d: np.ndarray

    @property
    def singular_values(self) -> np.ndarray:
        k = min(self.v.shape)
        return np.real(self.v[np.arange(k), np.arange(k)]).copy()

    def reconstruct(self) -> np.ndarray:
        return self.s @ self.v @ self.d


def svd_decompose(h) -> SvdFactors:
    """Full SVD with a deterministic phase convention.

    The largest-magnitude entry of each left-singular vector is rotated
    to the positive real axis (compensated in D), so repeated runs and
    platforms agree. Only wide-or-square matrices (K <= M) are accepted.
    """
    mat = _as_matrix(h)
    k, m = mat.shape
    if k > m:
        raise UnsupportedShapeError(f"svd_decompose expects K <= M, got {k} x {m}")
    u, sv, vh = np.linalg.svd(mat, full_matrices=True)
    u = u.copy()
    vh = vh.copy()
    for i in range(k):
        col = u[:, i]
        pivot = int(np.argmax(np.abs(col)))
        ref = col[pivot]
        if abs(ref) > 0:
            phase = ref / abs(ref)
            u[:, i] = col / phase
            vh[i, :] = vh[i, :] * phase
    v = np.zeros((k, m))
    v[np.arange(k), np.arange(k)] = sv
    return SvdFactors(s=u, v=v, d=vh)


def hermitian_eig(a: np.ndarray):
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Raises ContractViolationError when the input is not Hermitian to
    1e-10 (relative to its norm).
    """
    a = np.asarray(a, dtype=complex)
    scale = max(1.0, np.linalg.norm(a))
    if np.linalg.norm(a - a.conj().T) > 1e-10 * scale:
        raise ContractViolationError("matrix is not Hermitian to 1e-10")
    vals, vecs = np.linalg.eigh(a)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def solve_real_linear(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a real square system, rejecting condition estimates above 1e12."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] != b.shape[0]:
        raise ValueError("matrix and right-hand side sizes disagree")
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > 1e12:
        raise IllConditionedError(cond)
    return np.linalg.solve(a, b)


# ---------------------------------------------------------------------------
# linear programming (dense two-phase simplex, Bland's rule)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LpSolution:
    p: np.ndarray
    objective: float
    tight_constraints: tuple


def _simplex_minimize(tableau, basis, n_real, max_iter=10000):
    """Run Bland-rule pivots in place until optimal. Returns the basis."""
    m = tableau.shape[0] - 1
    for _ in range(max_iter):
        costs = tableau[-1, :n_real]
        entering = -1
        for j in range(n_real):
            if costs[j] < -1e-11:
                entering = j
                break
        if entering < 0:
            return basis
        col = tableau[:m, entering]
        best_ratio = None
        leaving = -1
        for i in range(m):
            if col[i] > 1e-11:
                ratio = tableau[i, -1] / col[i]
                if best_ratio is None or ratio < best_ratio - 1e-13 or (
                        abs(ratio - best_ratio) <= 1e-13 and basis[leaving] > basis[i]):
                    best_ratio = ratio
                    leaving = i
        if leaving < 0:
            raise SolverFailureError("simplex detected an unbounded direction")
        pivot = tableau[leaving, entering]
        tableau[leaving, :] /= pivot
        for i in range(tableau.shape[0]):
            if i != leaving and abs(tableau[i, entering]) > 0:
                tableau[i, :] -= tableau[i, entering] * tableau[leaving, :]
        basis[leaving] = entering
    raise SolverFailureError("simplex hit its pivot cap")


def solve_lp_min_sum(g: np.ndarray, zeta: np.ndarray) -> LpSolution:
    """Minimize sum(p) subject to G p >= zeta, p >= 0.

    Dense two-phase tableau simplex with Bland's anticycling rule. G must
    be nonnegative and finite; a zero row paired with a positive target is
    reported as infeasible.
    """
    g = np.asarray(g, dtype=float)
    zeta = np.asarray(zeta, dtype=float).reshape(-1)
    if g.ndim != 2 or g.shape[0] != zeta.shape[0]:
        raise ValueError("constraint matrix and target sizes disagree")
    if not np.all(np.isfinite(g)):
        raise ValueError("constraint matrix must be finite")
    if np.any(zeta < 0):
        raise ValueError("targets must be nonnegative")
    m, n = g.shape

    active = zeta > 0
    if not np.any(active):
        return LpSolution(p=np.zeros(n), objective=0.0, tight_constraints=tuple())
    for i in np.nonzero(active)[0]:
        if np.all(g[i] <= 0):
            raise InfeasibleError(f"constraint row {i} has no positive coefficient but a positive target")

    # standard form: [G, -I] [p; s] = zeta with artificials for the start basis
    n_real = n + m
    a_std = np.hstack([g, -np.eye(m)])
    tableau = np.zeros((m + 1, n_real + m + 1))
    tableau[:m, :n_real] = a_std
    tableau[:m, n_real:n_real + m] = np.eye(m)
    tableau[:m, -1] = zeta
    basis = [n_real + i for i in range(m)]

    # phase 1: drive the artificials to zero
    tableau[-1, :n_real] = -a_std.sum(axis=0)
    tableau[-1, -1] = -zeta.sum()
    basis = _simplex_minimize(tableau, basis, n_real)
    if -tableau[-1, -1] > 1e-9 * max(1.0, zeta.sum()):
        raise InfeasibleError("phase-1 optimum is positive: constraints are unsatisfiable")

    # pivot any still-basic artificial out (degenerate rows), drop dead rows
    for i in range(m):
        if basis[i] >= n_real:
            row = tableau[i, :n_real]
            j = next((jj for jj in range(n_real) if abs(row[jj]) > 1e-11), None)
            if j is not None:
                pivot = tableau[i, j]
                tableau[i, :] /= pivot
                for r in range(tableau.shape[0]):
                    if r != i and abs(tableau[r, j]) > 0:
                        tableau[r, :] -= tableau[r, j] * tableau[i, :]
                basis[i] = j

    # phase 2: objective sum(p)
    cost = np.zeros(n_real)
    cost[:n] = 1.0
    tableau[-1, :] = 0.0
    tableau[-1, :n_real] = cost
    for i, bi in enumerate(basis):
        if bi < n_real and abs(cost[bi]) > 0:
            tableau[-1, :] -= cost[bi] * tableau[i, :]
    basis = _simplex_minimize(tableau, basis, n_real)

    x = np.zeros(n_real)
    for i, bi in enumerate(basis):
        if bi < n_real:
            x[bi] = tableau[i, -1]
    p = np.maximum(x[:n], 0.0)
    slack = g @ p - zeta
    scale = max(1.0, float(np.max(np.abs(zeta))))
    tight = tuple(int(i) for i in range(m) if slack[i] <= 1e-9 * scale)
    return LpSolution(p=p, objective=float(p.sum()), tight_constraints=tight)


# ---------------------------------------------------------------------------
# min-trace covariance SDP (log-barrier on the K-variable dual)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SdpSolution:
    q: np.ndarray
    primal_value: float
    dual_gap: float
    iterations: int


def solve_sdp_min_trace(h_rows: np.ndarray, zeta: np.ndarray, *,
                        gap_tol=1e-5, max_iterations=100000) -> SdpSolution:
    """Minimize tr(Q) over PSD Q subject to h_j Q h_j^H >= zeta_j.

    Solved through the dual (maximize zeta^T lam with sum lam_j h_j^H h_j
    <= I, lam >= 0), which has only K variables. A log-det barrier keeps
    the PSD cap, damped Newton steps follow the central path, and the
    barrier inverse directly recovers a primal-feasible Q, so the duality
    gap is certified at the stated tolerance.
    """
    h_rows = _as_matrix(h_rows)
    zeta = np.asarray(zeta, dtype=float).reshape(-1)
    k, m = h_rows.shape
    if zeta.shape[0] != k:
        raise ValueError("one target per channel row is required")
    if np.any(zeta < 0):
        raise ValueError("targets must be nonnegative")

    active = np.nonzero(zeta > 0)[0]
    if active.size == 0:
        return SdpSolution(q=np.zeros((m, m), dtype=complex), primal_value=0.0,
                           dual_gap=0.0, iterations=0)
    hs = h_rows[active]
    z = zeta[active]
    norms2 = np.sum(np.abs(hs) ** 2, axis=1)
    if np.any(norms2 == 0):
        raise DegenerateChannelError("a user with a positive target has a zero channel row")
    ka = active.size

    eye = np.eye(m, dtype=complex)
    lam = 1.0 / (2.0 * ka * norms2)      # strictly inside the PSD cap

    def cap_matrix(lam_vec):
        return eye - (hs.conj().T * lam_vec) @ hs

    def barrier_value(lam_vec, mu_val):
        if np.any(lam_vec <= 0):
            return -np.inf
        cap = cap_matrix(lam_vec)
        try:
            chol = np.linalg.cholesky(cap)   # also certifies cap > 0
        except np.linalg.LinAlgError:
            return -np.inf
        logdet = 2.0 * float(np.sum(np.log(np.real(np.diag(chol)))))
        return float(z @ lam_vec) + mu_val * logdet + mu_val * float(np.sum(np.log(lam_vec)))

    trace_guess = float(np.max(z / norms2))
    mu = max(0.2 * trace_guess, 1e-12)
    mu_floor = 0.2 * gap_tol * max(trace_guess, 1e-12) / (m + ka)

    iterations = 0
    while True:
        # the Newton decrement needed per stage: loose while mu is large
        stage_tol = 1e-9 if mu <= mu_floor else 1e-4
        for _ in range(200):
            iterations += 1
            if iterations > max_iterations:
                cap = cap_matrix(lam)
                q = mu * np.linalg.inv(cap)
                gap = float(np.real(np.trace(q))) - float(z @ lam)
                raise SolverFailureError(
                    "min-trace SDP hit its iteration cap",
                    diagnostics={"gap": gap, "mu": mu, "iterations": iterations})
            cap = cap_matrix(lam)
            cinv = np.linalg.inv(cap)
            x = hs @ cinv @ hs.conj().T            # k x k, Hermitian
            qform = np.real(np.diag(x))
            grad = z - mu * qform + mu / lam
            hess = mu * (np.abs(x) ** 2) + np.diag(mu / lam ** 2)
            step = np.linalg.solve(hess, grad)

            t = 1.0
            base = barrier_value(lam, mu)
            decr = float(grad @ step)
            accepted = False
            for _ in range(60):
                cand = lam + t * step
                if np.all(cand > 0) and barrier_value(cand, mu) >= base + 0.25 * t * decr:
                    lam = cand
                    accepted = True
                    break
                t *= 0.5
            newton_decrement = math.sqrt(max(decr, 0.0))
            if not accepted or newton_decrement < stage_tol:
                break
        if mu <= mu_floor:
            break
        mu = max(mu * 0.05, mu_floor)

    cap = cap_matrix(lam)
    q_small = mu * np.linalg.inv(cap)
    q_small = 0.5 * (q_small + q_small.conj().T)
    # central-path recovery can undershoot a constraint by O(mu); bump to feasibility
    achieved = np.real(np.einsum("ij,jk,ik->i", hs, q_small, hs.conj()))
    ratio = float(np.max(z / achieved))
    if ratio > 1.0:
        q_small = q_small * ratio
    primal = float(np.real(np.trace(q_small)))
    dual = float(z @ lam)
    return SdpSolution(q=q_small, primal_value=primal, dual_gap=primal - dual,
                       iterations=iterations)


# ---------------------------------------------------------------------------
# bisection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BisectResult:
    t: float
    iterations: int
    value: float


def bisect(predicate, lo: float, hi: float, tol: float) -> BisectResult:
    """Largest feasible point of a monotone predicate, to interval width tol.

    ``predicate(t)`` returns (feasible, value) and must be feasible on the
    low side of some threshold in [lo, hi].
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    ok_lo, val_lo = predicate(lo)
    if not ok_lo:
        raise NoSolutionError(f"predicate infeasible at the lower bracket {lo}")
    ok_hi, val_hi = predicate(hi)
    if ok_hi:
        return BisectResult(t=hi, iterations=0, value=val_hi)
    iterations = 0
    best = (lo, val_lo)
    while hi - lo > tol:
        iterations += 1
        mid = 0.5 * (lo + hi)
        ok, val = predicate(mid)
        if ok:
            lo = mid
            best = (mid, val)
        else:
            hi = mid
    return BisectResult(t=best[0], iterations=iterations, value=best[1])


# ---------------------------------------------------------------------------
# two-angle Givens rotation solve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RotationPairResult:
    alpha: float
    delta: float
    residual: float
    converged: bool
    reduction_factor: float
    targets: tuple


def _aligned_sqrt(value: complex, reference: complex):
    """Principal-or-flipped sqrt of ``value`` whose phase tracks ``reference``.

    Returns the candidate branches: one when the reference pins the sign,
    both when the reference is negligible.
    """
    root = np.sqrt(complex(value))
    if abs(reference) <= 1e-12 * max(1.0, abs(root)):
        return (root, -root) if abs(root) > 0 else (root,)
    return (root,) if np.real(root * np.conj(reference)) >= 0 else (-root,)


def default_rotation_targets(xi_kk, xi_kj, xi_jk, xi_jj):
    """Root-sum-square enlargement targets for the plane diagonal terms."""
    t_k = _aligned_sqrt(xi_kk ** 2 + xi_kj ** 2, xi_kk)
    t_j = _aligned_sqrt(xi_jj ** 2 + xi_jk ** 2, xi_jj)
    return t_k, t_j


# deterministic Newton starts spread over (alpha, delta) in [0, pi) x [0, 2pi)
_ROTATION_STARTS = tuple(
    (a, d)
    for a in (math.pi / 8, 3 * math.pi / 8, 5 * math.pi / 8, 7 * math.pi / 8)
    for d in (math.pi / 2, 3 * math.pi / 2)
)


def _rotation_residual(theta, xi, d_k, d_j, t_k, t_j):
    alpha, delta = theta
    xi_kk, xi_kj, xi_jk, xi_jj = xi
    c, s = math.cos(alpha), math.sin(alpha)
    em = np.exp(-1j * delta)
    ep = np.exp(1j * delta)
    e1 = xi_kk * c * d_k - xi_kj * s * em * d_j - t_k * d_k
    e2 = xi_jk * s * ep * d_k + xi_jj * c * d_j - t_j * d_j
    r = np.array([e1.real, e1.imag, e2.real, e2.imag])
    de1_da = -xi_kk * s * d_k - xi_kj * c * em * d_j
    de1_dd = 1j * xi_kj * s * em * d_j
    de2_da = xi_jk * c * ep * d_k - xi_jj * s * d_j
    de2_dd = 1j * xi_jk * s * ep * d_k
    jac = np.array([
        [de1_da.real, de1_dd.real],
        [de1_da.imag, de1_dd.imag],
        [de2_da.real, de2_dd.real],
        [de2_da.imag, de2_dd.imag],
    ])
    return r, jac


def _normalize_rotation_angles(alpha, delta):
    """Map (alpha, delta) to alpha in [0, pi] preserving cos/sin structure.

    (alpha, delta) and (2*pi - alpha, delta + pi) produce the same plane
    rotation, so the residual is unchanged.
    """
    alpha = alpha % (2 * math.pi)
    if alpha > math.pi:
        alpha = 2 * math.pi - alpha
        delta = delta + math.pi
    return alpha, delta % (2 * math.pi)


def _newton_best_root(xi, d_k, d_j, t_k, t_j, tol, max_iter=40):
    best = None
    for start in _ROTATION_STARTS:
        theta = np.array(start, dtype=float)
        damping = 1e-4
        r, jac = _rotation_residual(theta, xi, d_k, d_j, t_k, t_j)
        cost = float(r @ r)
        for _ in range(max_iter):
            jtj = jac.T @ jac
            rhs = -jac.T @ r
            try:
                step = np.linalg.solve(jtj + damping * np.eye(2), rhs)
            except np.linalg.LinAlgError:
                break
            cand = theta + step
            r2, jac2 = _rotation_residual(cand, xi, d_k, d_j, t_k, t_j)
            cost2 = float(r2 @ r2)
            if cost2 < cost:
                theta, r, jac, cost = cand, r2, jac2, cost2
                damping = max(damping / 3.0, 1e-12)
                if math.sqrt(cost) <= tol:
                    break
            else:
                damping *= 10.0
                if damping > 1e8:
                    break
        if best is None or cost < best[1]:
            best = (theta.copy(), cost)
        if math.sqrt(best[1]) <= tol:
            break
    return best[0], math.sqrt(best[1])


def solve_rotation_pair(xi_kk, xi_kj, xi_jk, xi_jj, d_k, d_j, targets=None, *,
                        residual_tol=1e-8, reduction=0.9,
                        max_reductions=20) -> RotationPairResult:
    """Find plane-rotation angles (alpha, delta) matching two diagonal targets.

    The two complex equations couple both users of one Givens plane, so
    with only two real unknowns an exact root exists only for favourable
    instances. The solver runs damped Gauss-Newton from eight
    deterministic starts; when the full targets admit no root it shrinks
    them geometrically (factor ``reduction``) and finally returns the
    best root found with ``converged`` reporting whether ``residual_tol``
    was met for the returned (possibly reduced) targets.
    """
    vals = [complex(v) for v in (xi_kk, xi_kj, xi_jk, xi_jj)]
    if not all(np.isfinite([v.real for v in vals] + [v.imag for v in vals])):
        raise RotationInfeasibleError("rotation solve received non-finite coefficients")
    d_k = complex(getattr(d_k, "value", d_k))
    d_j = complex(getattr(d_j, "value", d_j))
    if abs(d_k) == 0 or abs(d_j) == 0:
        raise RotationInfeasibleError("rotation solve needs nonzero symbols")
    xi = tuple(vals)

    if targets is not None:
        target_sets = [(complex(targets[0]), complex(targets[1]))]
    else:
        cands_k, cands_j = default_rotation_targets(*vals)
        target_sets = [(tk, tj) for tk in cands_k for tj in cands_j]

    best_full = None
    previous_level = np.inf
    stagnant = 0
    for factor_step in range(max_reductions + 1):
        factor = reduction ** factor_step
        level_best = np.inf
        for t_k0, t_j0 in target_sets:
            t_k, t_j = factor * t_k0, factor * t_j0
            theta, residual = _newton_best_root(xi, d_k, d_j, t_k, t_j, residual_tol)
            alpha, delta = _normalize_rotation_angles(float(theta[0]), float(theta[1]))
            cand = RotationPairResult(
                alpha=alpha, delta=delta,
                residual=residual, converged=residual <= residual_tol,
                reduction_factor=factor, targets=(t_k, t_j))
            if cand.converged:
                return cand
            level_best = min(level_best, residual)
            if factor == 1.0 and (best_full is None or cand.residual < best_full.residual):
                best_full = cand
        # shrinking only helps while it closes in on a root
        stagnant = stagnant + 1 if level_best >= 0.995 * previous_level else 0
        if stagnant >= 2:
            break
        previous_level = level_best
    # no reduction level admits an exact root; report the best attempt at
    # the full targets so callers judge it by what it achieves
    return best_full
