"""Geometry and channel synthesis for center-fed, end-fed and multi-waveguide PASS.

Conventions (all indices 0-based):

* port ``m`` (``0 <= m < M``) sits between PA ``m`` and PA ``m + 1``;
* PA ``n <= m`` is reached by the backward-propagating part of port ``m``,
  PA ``n > m`` by the forward part;
* ``Q = S * G`` (entrywise), where ``S`` carries the power-splitting and
  radiation amplitudes and ``G`` the in-waveguide propagation;
* ``H_eff = H @ Q.T`` is ``K x M``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


def dbm_to_watt(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float)) + 30.0


class ArchKind(str, enum.Enum):
    CENTER_FED = "center_fed"
    END_FED = "end_fed"
    MULTI_WAVEGUIDE = "multi_waveguide"

    @classmethod
    def parse(cls, value) -> "ArchKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"centerfed": "center_fed", "cpass": "center_fed", "endfed": "end_fed",
                   "multiwaveguide": "multi_waveguide", "multi": "multi_waveguide"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown architecture kind {value!r}") from None


@dataclass(frozen=True)
class SystemConfig:
    """Physical and scenario constants, in SI units and linear powers."""

    M: int = 4
    K: int = 4
    L: float = 100.0
    f_c: float = 77e9
    n_eff: float = 1.44
    alpha_g: float = 0.0092
    P_T: float = 1.0
    N0: float = 1e-12
    Delta: float = 0.01
    area: float = 100.0
    # x-coordinate of the co-located feed for end-fed and multi-waveguide layouts
    feed_x: float = 0.0
    waveguide_spacing: float = 1.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")
        checks = [
            ("L", self.L > 0), ("f_c", self.f_c > 0), ("n_eff", self.n_eff > 0),
            ("alpha_g", self.alpha_g >= 0), ("P_T", self.P_T > 0), ("N0", self.N0 > 0),
            ("Delta", self.Delta >= 0), ("area", self.area > 0),
            ("waveguide_spacing", self.waveguide_spacing > 0),
        ]
        for name, ok in checks:
            if not ok:
                raise ValueError(f"invalid value for {name}: {getattr(self, name)!r}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "K", int(self.K))

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def k0(self) -> float:
        return 2.0 * np.pi / self.wavelength

    @property
    def kg(self) -> float:
        return self.n_eff * self.k0

    @property
    def guided_wavelength(self) -> float:
        return self.wavelength / self.n_eff

    @property
    def eta(self) -> float:
        return self.wavelength / (4.0 * np.pi)

    @property
    def spacing(self) -> float:
        """Distance between adjacent ports, L/(M+1)."""
        return self.L / (self.M + 1)

    def replace(self, **kw) -> "SystemConfig":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class Layout:
    kind: ArchKind
    port_x: np.ndarray
    pa_x: np.ndarray
    pa_y: np.ndarray
    user_pos: np.ndarray
    pa_x_init: np.ndarray

    @property
    def M(self) -> int:
        return len(self.port_x)

    @property
    def K(self) -> int:
        return len(self.user_pos)

    @property
    def n_pa(self) -> int:
        return len(self.pa_x)

    def with_pa_x(self, pa_x) -> "Layout":
        return replace(self, pa_x=np.asarray(pa_x, dtype=float).copy())

    def with_users(self, user_pos) -> "Layout":
        return replace(self, user_pos=np.atleast_2d(np.asarray(user_pos, dtype=float)))


@dataclass(eq=False)
class PinchingState:
    """Power-splitting angles ``theta`` (M) and PA radiation ratios ``delta`` (M+1).

    ``beta_F = cos(theta)^2``, ``beta_B = sin(theta)^2``. For optimization the
    endpoint ratios are held at 1; the symmetric analysis configuration uses
    1/2 everywhere.
    """

    theta: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.delta = np.asarray(self.delta, dtype=float)
        if np.any(self.delta < 0) or np.any(self.delta > 1) or not np.all(np.isfinite(self.delta)):
            raise ValueError("radiation ratios must lie in [0, 1]")
        if np.any(self.theta < -1e-12) or np.any(self.theta > np.pi / 2 + 1e-12):
            raise ValueError("split angles must lie in [0, pi/2]")

    @classmethod
    def symmetric(cls, M: int) -> "PinchingState":
        return cls(np.full(M, np.pi / 4), np.full(M + 1, 0.5))

    @classmethod
    def initial(cls, M: int, kind=ArchKind.CENTER_FED) -> "PinchingState":
        kind = ArchKind.parse(kind)
        if kind is ArchKind.MULTI_WAVEGUIDE:
            return cls(np.zeros(M), np.ones(M))
        delta = np.full(M + 1, 0.5)
        delta[0] = delta[-1] = 1.0
        theta = np.full(M, np.pi / 4) if kind is ArchKind.CENTER_FED else np.zeros(M)
        return cls(theta, delta)

    @classmethod
    def from_phi(cls, theta, phi) -> "PinchingState":
        """Build from interior radiation angles (``delta_n = cos(phi_n)^2``), endpoints 1."""
        phi = np.asarray(phi, dtype=float)
        delta = np.concatenate(([1.0], np.cos(phi) ** 2, [1.0]))
        return cls(theta, np.clip(delta, 0.0, 1.0))

    @property
    def beta_F(self) -> np.ndarray:
        return np.cos(self.theta) ** 2

    @property
    def beta_B(self) -> np.ndarray:
        return np.sin(self.theta) ** 2

    @property
    def phi(self) -> np.ndarray:
        return np.arccos(np.sqrt(np.clip(self.delta[1:-1], 0.0, 1.0)))

    def copy(self) -> "PinchingState":
        return PinchingState(self.theta.copy(), self.delta.copy())


# ---------------------------------------------------------------------------
# layouts
# ---------------------------------------------------------------------------

def place_users(seed, K: int, area: float) -> np.ndarray:
    """K user positions, i.i.d. uniform on ``[0, area]^2`` (z = 0 plane).

    ``seed`` is an int (fed to numpy's PCG64) or an existing Generator.
    """
    if not area > 0:
        raise ValueError("area must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(seed))
    return rng.uniform(0.0, area, size=(K, 2))


def build_layout(cfg: SystemConfig, kind, user_seed=0, user_pos=None) -> Layout:
    kind = ArchKind.parse(kind)
    M, ell = cfg.M, cfg.spacing
    if user_pos is None:
        user_pos = place_users(user_seed, cfg.K, cfg.area)
    user_pos = np.atleast_2d(np.asarray(user_pos, dtype=float))

    if kind is ArchKind.CENTER_FED:
        port_x = (np.arange(M) + 1.0) * ell
        pa_x = (np.arange(M + 1) + 0.5) * ell
        pa_y = np.zeros(M + 1)
    elif kind is ArchKind.END_FED:
        port_x = np.full(M, cfg.feed_x)
        pa_x = (np.arange(M + 1) + 0.5) * ell
        pa_y = np.zeros(M + 1)
    else:
        port_x = np.full(M, cfg.feed_x)
        pa_x = (np.arange(M) + 0.5) * ell
        pa_y = -np.arange(M) * cfg.waveguide_spacing
    return Layout(kind, port_x, pa_x.copy(), pa_y, user_pos, pa_x.copy())


# ---------------------------------------------------------------------------
# elementary gains
# ---------------------------------------------------------------------------

def inwaveguide_gain(d, cfg: SystemConfig):
    """exp(-(alpha_g + j k_g) d) for in-waveguide run lengths ``d >= 0``."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("in-waveguide distance must be nonnegative")
    g = np.exp(-(cfg.alpha_g + 1j * cfg.kg) * d)
    return g if g.ndim else complex(g)


def freespace_gain(user_pos, pa_pos, cfg: SystemConfig):
    """eta exp(-j k0 d) / d between user(s) and PA(s) (broadcast over leading axes)."""
    diff = np.asarray(user_pos, dtype=float) - np.asarray(pa_pos, dtype=float)
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    if np.any(d == 0):
        raise ValueError("user coincides with a pinching antenna (d = 0)")
    h = cfg.eta * np.exp(-1j * cfg.k0 * d) / d
    return h if h.ndim else complex(h)


# ---------------------------------------------------------------------------
# radiation coefficients
# ---------------------------------------------------------------------------

def sqrt_radiation(c, s):
    """Amplitude radiation matrices from per-PA ``c = sqrt(delta)``, ``s = sqrt(1 - delta)``.

    Returns ``(Sigma_F, Sigma_B)``, each ``M x (M+1)``: entry ``(m, n)`` is the
    emitting amplitude ``c[n]`` times the pass-through amplitudes ``s`` of every
    PA strictly between port ``m`` and PA ``n``.
    """
    c = np.asarray(c, dtype=float)
    s = np.asarray(s, dtype=float)
    N = len(c)
    M = N - 1
    SF = np.zeros((M, N))
    SB = np.zeros((M, N))
    for m in range(M):
        fwd = np.concatenate(([1.0], np.cumprod(s[m + 1:N - 1])))
        SF[m, m + 1:] = c[m + 1:] * fwd
        bwd = np.concatenate(([1.0], np.cumprod(s[m:0:-1])))
        SB[m, :m + 1] = c[:m + 1] * bwd[::-1]
    return SF, SB


def radiation_matrices(state_or_delta, M: int | None = None):
    """``(Sigma_F, Sigma_B)`` with entries ``sqrt(xi)`` for the given radiation ratios."""
    delta = getattr(state_or_delta, "delta", state_or_delta)
    delta = np.asarray(delta, dtype=float)
    if M is not None and len(delta) != M + 1:
        raise ValueError(f"expected {M + 1} radiation ratios, got {len(delta)}")
    if np.any(delta < 0) or np.any(delta > 1):
        raise ValueError("radiation ratios must lie in [0, 1]")
    return sqrt_radiation(np.sqrt(delta), np.sqrt(1.0 - delta))


def general_radiation_coeff(region_deltas, m: int, region: int, index: int, direction: str) -> float:
    """Power radiation coefficient with several PAs per region.

    Parameters
    ----------
    region_deltas : sequence of M+1 sequences
        Radiation ratios of the PAs in each region, ordered by increasing x.
        Port ``m`` sits between region ``m`` and region ``m + 1``.
    m : int
        Feeding port.
    region, index : int
        Target PA: ``index``-th PA of ``region``.
    direction : {"F", "B"}
        Propagation direction; forward targets need ``region > m``,
        backward targets ``region <= m``.
    """
    regions = [np.asarray(r, dtype=float) for r in region_deltas]
    direction = direction.upper()
    if direction not in ("F", "B"):
        raise ValueError("direction must be 'F' or 'B'")
    if not 0 <= m < len(regions) - 1:
        raise ValueError(f"port index {m} out of range")
    if direction == "F" and region <= m:
        raise ValueError("forward radiation needs a target region beyond the port")
    if direction == "B" and region > m:
        raise ValueError("backward radiation needs a target region at or before the port")
    target = regions[region]
    if not 0 <= index < len(target):
        raise ValueError("target PA index out of range")

    if direction == "F":
        between = [regions[r] for r in range(m + 1, region)]
        inside = target[:index]
    else:
        between = [regions[r] for r in range(region + 1, m + 1)]
        inside = target[index + 1:]
    passthrough = np.prod([np.prod(1.0 - r) for r in between]) if between else 1.0
    return float(passthrough * np.prod(1.0 - inside) * target[index])


# ---------------------------------------------------------------------------
# channel matrices
# ---------------------------------------------------------------------------

def amplitude_matrix(kind, state: PinchingState) -> np.ndarray:
    """Real amplitude factor ``S`` of ``Q = S * G``."""
    kind = ArchKind.parse(kind)
    if kind is ArchKind.MULTI_WAVEGUIDE:
        return np.eye(len(state.theta))
    SF, SB = radiation_matrices(state)
    if kind is ArchKind.END_FED:
        return SF
    return np.cos(state.theta)[:, None] * SF + np.sin(state.theta)[:, None] * SB


def build_G(layout: Layout, cfg: SystemConfig) -> np.ndarray:
    d = np.abs(layout.port_x[:, None] - layout.pa_x[None, :])
    return inwaveguide_gain(d, cfg)


def build_Q(layout: Layout, state: PinchingState, cfg: SystemConfig) -> np.ndarray:
    """In-waveguide effective matrix, ``M x (M+1)`` (``M x M`` for multi-waveguide)."""
    M = layout.M
    if len(state.theta) != M:
        raise ValueError(f"expected {M} split angles, got {len(state.theta)}")
    if len(state.delta) != layout.n_pa:
        raise ValueError(f"expected {layout.n_pa} radiation ratios, got {len(state.delta)}")
    return amplitude_matrix(layout.kind, state) * build_G(layout, cfg)


def pa_positions(layout: Layout) -> np.ndarray:
    return np.column_stack([layout.pa_x, layout.pa_y])


def build_H(layout: Layout, cfg: SystemConfig) -> np.ndarray:
    """Free-space PA-to-user gains, ``K x n_pa``."""
    return freespace_gain(layout.user_pos[:, None, :], pa_positions(layout)[None, :, :], cfg)


def effective_channel(H, Q) -> np.ndarray:
    H = np.atleast_2d(H)
    if H.shape[1] != Q.shape[1]:
        raise ValueError(f"H has {H.shape[1]} PA columns but Q has {Q.shape[1]}")
    return H @ Q.T


@dataclass(eq=False)
class ChannelSet:
    G: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    H_eff: np.ndarray = field(init=False)

    def __post_init__(self):
        self.H_eff = effective_channel(self.H, self.Q)


def build_channels(layout: Layout, state: PinchingState, cfg: SystemConfig) -> ChannelSet:
    return ChannelSet(build_G(layout, cfg), build_H(layout, cfg), build_Q(layout, state, cfg))
