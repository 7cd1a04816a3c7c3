"""Domain types and primitive operations for the MISO downlink model.

Covers the quasi-static K x M channel, M-PSK constellation machinery,
cross-correlation / interference factors, the constructive-interference
classifier and noiseless/noisy reception with sector detection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AmbiguousDetectionError,
    DegenerateChannelError,
    DegenerateInputError,
)

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Wrap an angle (scalar or array) to (-pi, pi]."""
    wrapped = np.mod(np.asarray(theta) + np.pi, TWO_PI) - np.pi
    # mod maps exact +pi to -pi; keep the closed upper end instead
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    if np.isscalar(theta):
        return float(wrapped)
    return wrapped


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelMatrix:
    """K x M complex downlink channel (rows = users) plus noise variance."""

    h: np.ndarray
    sigma2_noise: float = 1.0

    def __post_init__(self):
        h = np.array(self.h, dtype=complex)
        if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
            raise ValueError(f"channel must be a K x M matrix with K, M >= 1, got shape {h.shape}")
        if not np.all(np.isfinite(h.view(float))):
            raise ValueError("channel entries must be finite")
        if self.sigma2_noise < 0:
            raise ValueError("noise variance must be nonnegative")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def n_users(self) -> int:
        return self.h.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.h.shape[1]

    def row(self, j: int) -> np.ndarray:
        return self.h[j]

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.h, axis=1)


@dataclass(frozen=True)
class PskSymbol:
    """One point of an M-PSK constellation.

    ``value`` is the unit-modulus complex point; index 0 sits at angle
    ``offset`` (default 0) and index k at ``2*pi*k/order + offset``.
    """

    order: int
    index: int
    offset: float = 0.0
    value: complex = field(init=False)

    def __post_init__(self):
        if self.order < 2 or self.order & (self.order - 1):
            raise ValueError(f"PSK order must be a power of two >= 2, got {self.order}")
        if not 0 <= self.index < self.order:
            raise ValueError(f"index {self.index} out of range for order {self.order}")
        angle = TWO_PI * self.index / self.order + self.offset
        object.__setattr__(self, "value", complex(math.cos(angle), math.sin(angle)))

    @property
    def angle(self) -> float:
        return float(np.angle(self.value))


@dataclass(frozen=True)
class SymbolVector:
    """Per-user data symbols for one slot; all users share one order."""

    symbols: tuple

    def __post_init__(self):
        symbols = tuple(self.symbols)
        if not symbols:
            raise ValueError("symbol vector must hold at least one symbol")
        order = symbols[0].order
        if any(s.order != order for s in symbols):
            raise ValueError("all symbols in one slot must share the constellation order")
        object.__setattr__(self, "symbols", symbols)

    @classmethod
    def from_indices(cls, order, indices, offset=0.0) -> "SymbolVector":
        return cls(tuple(PskSymbol(order, int(i), offset) for i in indices))

    @classmethod
    def uniform(cls, order, n_users, rng, offset=0.0) -> "SymbolVector":
        """Draw i.i.d. uniform symbols for ``n_users`` users."""
        return cls.from_indices(order, rng.integers(0, order, size=n_users), offset)

    @property
    def order(self) -> int:
        return self.symbols[0].order

    @property
    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.symbols], dtype=complex)

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __getitem__(self, j) -> PskSymbol:
        return self.symbols[j]


@dataclass(frozen=True)
class TransmitVector:
    """One symbol-slot output of the transmit array."""

    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=complex).reshape(-1)
        if not np.all(np.isfinite(x.view(float))):
            raise ValueError("transmit vector entries must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def power(self) -> float:
        return float(np.real(np.vdot(self.x, self.x)))


@dataclass(frozen=True)
class InterferenceReport:
    """Outcome of classifying one cross-stream interference term."""

    psi: complex
    constructive: bool
    angle_margin: float


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def generate_channel(n_users, n_antennas, sigma2_h, seed, sigma2_noise=1.0) -> ChannelMatrix:
    """Draw an i.i.d. circularly-symmetric complex Gaussian channel.

    Entries have variance ``sigma2_h``; the draw is deterministic per seed.
    """
    if n_users < 1 or n_antennas < 1:
        raise ValueError("need at least one user and one antenna")
    if sigma2_h <= 0:
        raise ValueError("channel variance must be positive")
    rng = np.random.default_rng(seed)
    scale = math.sqrt(sigma2_h / 2.0)
    h = scale * (rng.standard_normal((n_users, n_antennas))
                 + 1j * rng.standard_normal((n_users, n_antennas)))
    return ChannelMatrix(h, sigma2_noise=sigma2_noise)


def psk_point(order, index, offset=0.0) -> PskSymbol:
    """Constellation point ``index`` of an ``order``-PSK alphabet."""
    return PskSymbol(int(order), int(index), float(offset))


def cross_correlation(channel: ChannelMatrix, j: int, k: int) -> complex:
    """Normalized inner product h_j h_k^H / (|h_j| |h_k|) between two user rows."""
    h_j = channel.row(j)
    h_k = channel.row(k)
    nj = np.linalg.norm(h_j)
    nk = np.linalg.norm(h_k)
    if nj == 0.0 or nk == 0.0:
        raise DegenerateChannelError(f"channel row {j if nj == 0 else k} has zero norm")
    return complex(np.dot(h_j, h_k.conj()) / (nj * nk))


def interference_factor(h_j: np.ndarray, w_k: np.ndarray) -> complex:
    """Unit-power interference factor h_j w_k / (|h_j| |w_k|)."""
    h_j = np.asarray(h_j, dtype=complex).reshape(-1)
    w_k = np.asarray(w_k, dtype=complex).reshape(-1)
    nh = np.linalg.norm(h_j)
    nw = np.linalg.norm(w_k)
    if nh == 0.0 or nw == 0.0:
        raise DegenerateInputError("interference factor needs nonzero channel row and precoder column")
    return complex(np.dot(h_j, w_k) / (nh * nw))


def classify_interference(d_j: PskSymbol, d_k: PskSymbol, psi_jk: complex) -> InterferenceReport:
    """Decide whether the crosstalk term psi_jk * d_k helps user j.

    The term is constructive when it falls inside the +-pi/M detection
    sector of d_j and its real/imaginary parts are sign-compatible with
    d_j (zero components are compatible with anything). Zero interference
    is constructive by convention with the full sector as margin.
    """
    if d_j.order != d_k.order:
        raise ValueError("both symbols must come from the same constellation")
    sector = math.pi / d_j.order
    psi_jk = complex(psi_jk)
    term = psi_jk * d_k.value
    mag = abs(term)
    if mag <= 1e-15:
        return InterferenceReport(psi=psi_jk, constructive=True, angle_margin=sector)

    offset = wrap_angle(np.angle(term) - d_j.angle)
    margin = sector - abs(offset)
    sector_ok = margin >= -1e-12

    eps = 1e-12 * mag
    sign_ok = (d_j.value.real * term.real >= -eps) and (d_j.value.imag * term.imag >= -eps)

    return InterferenceReport(psi=psi_jk, constructive=bool(sector_ok and sign_ok),
                              angle_margin=float(margin))


def received_signal(channel: ChannelMatrix, x, noise=None) -> np.ndarray:
    """Noisy downlink reception y = H x + z (z omitted means z = 0)."""
    vec = x.x if isinstance(x, TransmitVector) else np.asarray(x, dtype=complex).reshape(-1)
    if vec.shape[0] != channel.n_antennas:
        raise ValueError(f"transmit vector has length {vec.shape[0]}, channel expects {channel.n_antennas}")
    y = channel.h @ vec
    if noise is not None:
        noise = np.asarray(noise, dtype=complex).reshape(-1)
        if noise.shape[0] != channel.n_users:
            raise ValueError("noise vector length must equal the number of users")
        y = y + noise
    return y


def ci_snr(channel: ChannelMatrix, x) -> np.ndarray:
    """Per-user SNR |h_j x|^2 / sigma^2 with all crosstalk counted as signal."""
    if channel.sigma2_noise <= 0:
        raise ValueError("ci_snr needs a positive noise variance")
    y = received_signal(channel, x)
    return np.abs(y) ** 2 / channel.sigma2_noise


def detect_psk(y_j: complex, order: int, offset=0.0) -> int:
    """Map a received sample to the index whose sector contains its angle.

    Sectors are half-open, [point - pi/order, point + pi/order), which
    makes boundary samples deterministic.
    """
    if order < 2 or order & (order - 1):
        raise ValueError(f"PSK order must be a power of two >= 2, got {order}")
    y_j = complex(y_j)
    if y_j == 0:
        raise AmbiguousDetectionError("zero sample has no detection sector")
    step = TWO_PI / order
    return int(math.floor((np.angle(y_j) - offset) / step + 0.5)) % order


def detection_correct(y_j: complex, d_j: PskSymbol) -> bool:
    """True when ``y_j`` demaps to ``d_j`` at d_j's own order."""
    return detect_psk(y_j, d_j.order, d_j.offset) == d_j.index
