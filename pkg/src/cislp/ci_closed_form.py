"""Closed-form constructive-interference precoders.

CIZF composes channel inversion with a correlation-rotation matrix that
re-aims every crosstalk term at the victim user's own symbol. CIMRT
starts from naive maximum ratio transmission, factors the received
matrix through the channel SVD, and sweeps Givens plane rotations over
the unitary factor to enlarge each user's desired term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CoLinearChannelError, DegenerateChannelError
from .linear_solvers import (
    SvdFactors,
    default_rotation_targets,
    solve_rotation_pair,
    svd_decompose,
)
from .model_core import ChannelMatrix, SymbolVector, TransmitVector, wrap_angle

_COND_CAP = 1e10


@dataclass(frozen=True)
class RotationMatrixPhi:
    """K x K correlation-rotation matrix with entries rho_jk * exp(i phi_jk)."""

    r_phi: np.ndarray

    def __post_init__(self):
        r = np.array(self.r_phi, dtype=complex)
        r.setflags(write=False)
        object.__setattr__(self, "r_phi", r)


@dataclass
class CimrtState:
    """Working state of one CIMRT sweep.

    ``b`` stays unitary after every applied rotation and only the two
    columns of the active plane may change per step.
    """

    factors: SvdFactors
    b: np.ndarray
    g: np.ndarray
    xi: np.ndarray
    applied_rotations: list = field(default_factory=list)
    plane_log: list = field(default_factory=list)

    def refresh_xi(self):
        g_norms = np.linalg.norm(self.g, axis=1)
        self.xi = (self.g @ self.b) / g_norms[:, None]


@dataclass(frozen=True)
class CiPrecoderOutput:
    """Symbol-slot precoder output plus construction diagnostics."""

    x: TransmitVector
    w: np.ndarray
    gamma_or_powers: dict
    noiseless_rx: np.ndarray
    state: CimrtState | None = None


def rotation_matrix_phi(channel: ChannelMatrix, d: SymbolVector) -> RotationMatrixPhi:
    """Entry (j, k) carries rho_jk rotated so rho_jk e^{i phi_jk} d_k lands on d_j's ray."""
    norms = channel.row_norms()
    if np.any(norms == 0):
        raise DegenerateChannelError("correlation rotation needs nonzero channel rows")
    h = channel.h
    rho = (h @ h.conj().T) / np.outer(norms, norms)
    dvals = d.values
    angles_d = np.angle(dvals)
    phi = angles_d[:, None] - np.angle(rho * dvals[None, :])
    return RotationMatrixPhi(np.abs(rho) * np.exp(1j * (np.angle(rho) + phi)))


def cizf_precoder(channel: ChannelMatrix, d: SymbolVector, power_budget: float) -> CiPrecoderOutput:
    """Correlation-rotation zero forcing for one symbol slot.

    Inverts the row-normalized channel and composes it with R_phi, so the
    noiseless receive is y_j = gamma * |h_j| * (1 + sum_{k!=j} |rho_jk|) * d_j:
    every user stays on its own symbol ray and keeps its channel-strength
    ordering. The slot output is rescaled so the per-symbol power equals
    the budget exactly. Co-linear users make the inversion step fail,
    which is reported rather than regularized.
    """
    if power_budget <= 0:
        raise ValueError("power budget must be positive")
    if len(d) != channel.n_users:
        raise ValueError("one symbol per user is required")
    norms = channel.row_norms()
    if np.any(norms == 0):
        raise DegenerateChannelError("correlation rotation needs nonzero channel rows")
    h_unit = channel.h / norms[:, None]
    gram = h_unit @ h_unit.conj().T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > _COND_CAP:
        raise CoLinearChannelError(
            f"co-linear users break the inversion step (condition {cond:.3e})")
    r_phi = rotation_matrix_phi(channel, d).r_phi
    gram_inv_r = np.linalg.solve(gram, r_phi)
    gamma = float(np.sqrt(power_budget / np.real(np.trace(r_phi.conj().T @ gram_inv_r))))
    w = gamma * (h_unit.conj().T @ gram_inv_r)

    x0 = w @ d.values
    norm0 = np.linalg.norm(x0)
    if norm0 == 0:
        raise DegenerateChannelError("zero transmit vector from the inversion step")
    scale = np.sqrt(power_budget) / norm0
    x = TransmitVector(x0 * scale)
    return CiPrecoderOutput(
        x=x, w=w,
        gamma_or_powers={"gamma": gamma, "symbol_scale": float(scale)},
        noiseless_rx=channel.h @ x.x)


def nmrt_factorization(channel: ChannelMatrix) -> CimrtState:
    """SVD-based factorization H W_nMRT = G B of the naive MRT product.

    B starts as S^H (unitary) and G = (H W_nMRT) S, so plane rotations of
    B's columns reshape the received matrix G B while the transmit matrix
    stays W_nMRT S B.
    """
    norms = channel.row_norms()
    if np.any(norms == 0):
        raise DegenerateChannelError("maximum ratio transmission needs nonzero channel rows")
    factors = svd_decompose(channel.h)
    w_nmrt = channel.h.conj().T / norms
    g = (channel.h @ w_nmrt) @ factors.s
    b = factors.s.conj().T.copy()
    state = CimrtState(factors=factors, b=b, g=g, xi=None)
    state.refresh_xi()
    return state


def _plane_target_misfit(xi, k, j, d, alpha, delta) -> float:
    """Distance of the plane's post-rotation diagonal terms from the
    aligned root-sum-square enlargement targets."""
    targets_k, targets_j = default_rotation_targets(xi[k, k], xi[k, j], xi[j, k], xi[j, j])
    c = np.cos(alpha)
    s = np.sin(alpha)
    d_k, d_j = d[k].value, d[j].value
    e1 = xi[k, k] * c * d_k - xi[k, j] * s * np.exp(-1j * delta) * d_j
    e2 = xi[j, k] * s * np.exp(1j * delta) * d_k + xi[j, j] * c * d_j
    return min(
        float(abs(e1 - t_k * d_k) ** 2 + abs(e2 - t_j * d_j) ** 2)
        for t_k in targets_k for t_j in targets_j)


def _apply_plane_rotation(b: np.ndarray, k: int, j: int, alpha: float, delta: float) -> np.ndarray:
    """Right-multiply by the (k, j) Givens rotation, touching only those columns."""
    c = np.cos(alpha)
    s = np.sin(alpha)
    block = np.array([[c, s * np.exp(1j * delta)],
                      [-s * np.exp(-1j * delta), c]], dtype=complex)
    out = b.copy()
    out[:, [k, j]] = b[:, [k, j]] @ block
    return out


def cimrt_precoder(channel: ChannelMatrix, d: SymbolVector, powers, power_budget: float, *,
                   residual_tol=1e-8, reduction=0.9, max_reductions=20,
                   plane_order=None) -> CiPrecoderOutput:
    """Rotated maximum ratio transmission for one symbol slot.

    Sweeps every (k, j) plane (j outer ascending, k inner ascending by
    default), solves the two-angle rotation system for the plane, and
    applies the rotation only when it does not shrink either user's
    diagonal term. The slot output uses the supplied per-user powers
    (normally a constructive-interference genie allocation) and is
    rescaled to the per-symbol budget.
    """
    if power_budget <= 0:
        raise ValueError("power budget must be positive")
    k_users = channel.n_users
    if len(d) != k_users:
        raise ValueError("one symbol per user is required")
    powers = np.asarray(powers, dtype=float).reshape(-1)
    if powers.shape[0] != k_users or np.any(powers < 0):
        raise ValueError("need one nonnegative power per user")

    state = nmrt_factorization(channel)
    dvals = d.values

    if plane_order is None:
        plane_order = [(k, j) for j in range(k_users) for k in range(j + 1, k_users)]
    for k, j in plane_order:
        xi = state.xi
        result = solve_rotation_pair(
            xi[k, k], xi[k, j], xi[j, k], xi[j, j], d[k], d[j],
            residual_tol=residual_tol, reduction=reduction, max_reductions=max_reductions)
        # apply only when the root brings the plane's received pair closer
        # to the aligned-enlarged targets than leaving it alone would
        misfit_root = _plane_target_misfit(xi, k, j, d, result.alpha, result.delta)
        misfit_identity = _plane_target_misfit(xi, k, j, d, 0.0, 0.0)
        if misfit_root < misfit_identity - 1e-12:
            state.b = _apply_plane_rotation(state.b, k, j, result.alpha, result.delta)
            state.refresh_xi()
            state.applied_rotations.append((k, j, result.alpha, result.delta))
            status = "applied" if result.reduction_factor == 1.0 else "reduced"
        else:
            status = "skipped"
        state.plane_log.append({
            "plane": (k, j), "status": status, "residual": result.residual,
            "converged": result.converged, "reduction_factor": result.reduction_factor,
            "misfit_root": misfit_root, "misfit_identity": misfit_identity})

    norms = channel.row_norms()
    w = (channel.h.conj().T / norms) @ state.factors.s @ state.b
    x0 = w @ (np.sqrt(powers) * dvals)
    norm0 = np.linalg.norm(x0)
    if norm0 == 0:
        raise DegenerateChannelError("zero transmit vector; all powers were zero")
    scale = np.sqrt(power_budget) / norm0
    x = TransmitVector(x0 * scale)
    rx = channel.h @ x.x
    angle_errors = np.abs(wrap_angle(np.angle(rx) - np.angle(dvals)))
    return CiPrecoderOutput(
        x=x, w=w,
        gamma_or_powers={"powers": powers, "symbol_scale": float(scale),
                         "angle_errors": angle_errors},
        noiseless_rx=rx, state=state)
