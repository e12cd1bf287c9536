"""Capacity, DoF and received-power scaling checks for the symmetric C-PASS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import (
    ArchKind,
    Layout,
    PinchingState,
    SystemConfig,
    build_H,
    build_layout,
    build_Q,
    effective_channel,
    freespace_gain,
    inwaveguide_gain,
    pa_positions,
)

RANK_RTOL = 1e-9


@dataclass
class DofEstimate:
    slope: float
    rank: int
    config: tuple[int, int]
    capacities: tuple[float, float] = (np.nan, np.nan)


@dataclass
class PowerScalingPoint:
    M: int
    P_R: float
    P_bar: float
    A_R_closed: float


def capacity(H_eff, P_T: float, M: int, N0: float) -> float:
    """log2 det(I_K + P_T/(M N0) H_eff H_eff^H), equal power over the M ports."""
    H_eff = np.atleast_2d(H_eff)
    K = H_eff.shape[0]
    gram = np.eye(K) + (P_T / (M * N0)) * (H_eff @ H_eff.conj().T)
    sign, logdet = np.linalg.slogdet(gram)
    return float(logdet / np.log(2.0))


def numeric_rank(A, rtol: float = RANK_RTOL) -> int:
    sv = np.linalg.svd(np.atleast_2d(A), compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv >= rtol * sv[0]))


def symmetric_channel(cfg: SystemConfig, kind=ArchKind.CENTER_FED, user_seed=0, layout=None):
    """Effective channel under beta = 1/2, delta = 1/2 everywhere."""
    if layout is None:
        layout = build_layout(cfg, kind, user_seed)
    state = PinchingState.symmetric(cfg.M)
    return effective_channel(build_H(layout, cfg), build_Q(layout, state, cfg))


def estimate_dof(cfg: SystemConfig, kind=ArchKind.CENTER_FED, at_powers=(1e3, 1e4), user_seed=0,
                 layout=None) -> DofEstimate:
    """High-power capacity slope versus log2(P_T), plus the numeric rank of H_eff."""
    P1, P2 = (float(p) for p in at_powers)
    if not P2 > P1:
        raise ValueError("need two increasing transmit powers")
    H_eff = symmetric_channel(cfg, kind, user_seed, layout)
    c1 = capacity(H_eff, P1, cfg.M, cfg.N0)
    c2 = capacity(H_eff, P2, cfg.M, cfg.N0)
    slope = (c2 - c1) / np.log2(P2 / P1)
    return DofEstimate(slope=float(slope), rank=numeric_rank(H_eff), config=(cfg.M, cfg.K),
                       capacities=(c1, c2))


# ---------------------------------------------------------------------------
# single-user received power
# ---------------------------------------------------------------------------

def received_power_mrt(h, Q, P_T: float) -> float:
    """P_T ||h^T Q^T||^2, the single-user received power under MRT."""
    h = np.asarray(h).reshape(-1)
    return float(P_T * np.sum(np.abs(Q @ h) ** 2))


def mrt_vector(h_eff, P_T: float) -> np.ndarray:
    h_eff = np.asarray(h_eff).reshape(-1)
    nrm = np.linalg.norm(h_eff)
    if nrm == 0:
        raise ValueError("zero effective channel: MRT direction undefined")
    return np.sqrt(P_T) * h_eff.conj() / nrm


def _single_user_power(layout: Layout, state: PinchingState, cfg: SystemConfig) -> float:
    h = build_H(layout, cfg)[0]
    return received_power_mrt(h, build_Q(layout, state, cfg), cfg.P_T)


def _align_from(layout: Layout, cfg: SystemConfig, state: PinchingState, pa_x, n_grid, max_sweeps):
    pa_x = np.asarray(pa_x, dtype=float).copy()
    trial = layout.with_pa_x(pa_x)
    h = build_H(trial, cfg)[0]
    Q = build_Q(trial, state, cfg)
    S = np.abs(build_Q(trial, state, cfg.replace(alpha_g=0.0)))
    user = layout.user_pos[0]
    best = float(np.sum(np.abs(Q @ h) ** 2))

    for _ in range(max_sweeps):
        start = best
        for n in range(layout.n_pa):
            grid = np.linspace(layout.pa_x_init[n] - cfg.Delta, layout.pa_x_init[n] + cfg.Delta, n_grid)
            grid = np.append(grid, pa_x[n])
            rest = Q @ h - Q[:, n] * h[n]
            pos = np.column_stack([grid, np.full_like(grid, layout.pa_y[n])])
            h_n = freespace_gain(user[None, :], pos, cfg)
            q_n = S[:, n][:, None] * inwaveguide_gain(np.abs(layout.port_x[:, None] - grid[None, :]), cfg)
            power = np.sum(np.abs(rest[:, None] + q_n * h_n[None, :]) ** 2, axis=0)
            j = int(np.argmax(power))
            if power[j] > power[-1]:
                pa_x[n] = grid[j]
                h[n] = h_n[j]
                Q[:, n] = q_n[:, j]
                best = float(power[j])
        if best <= start * (1 + 1e-12):
            break
    return pa_x, best


def phase_align_positions(layout: Layout, cfg: SystemConfig, state: PinchingState | None = None,
                          n_grid: int = 2001, max_sweeps: int = 20, restarts: int = 8,
                          seed: int = 0) -> Layout:
    """Micro-adjust PA positions (within +-Delta) to maximize single-user MRT power.

    Cyclic coordinate ascent: each PA in turn is swept over a dense grid on
    ``[init - Delta, init + Delta]`` (the incumbent is always a candidate),
    until a full sweep stops improving. The power landscape has many local
    maxima, so the ascent is also restarted from ``restarts`` seeded random
    offsets and the best result kept.
    """
    if layout.K != 1:
        raise ValueError("phase alignment is defined for a single user")
    if state is None:
        state = PinchingState.symmetric(layout.M)
    if cfg.Delta == 0:
        return layout

    best_x, best_p = _align_from(layout, cfg, state, layout.pa_x, n_grid, max_sweeps)
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(restarts):
        start = layout.pa_x_init + rng.uniform(-cfg.Delta, cfg.Delta, layout.n_pa)
        x, p = _align_from(layout, cfg, state, start, n_grid, max_sweeps)
        if p > best_p:
            best_x, best_p = x, p
    return layout.with_pa_x(best_x)


def received_power_bound(cfg: SystemConfig, d_fr) -> float:
    """Phase-aligned upper bound on the symmetric-configuration MRT power.

    ``d_fr`` holds the M+1 PA-to-user distances.
    """
    M = cfg.M
    d = np.asarray(d_fr, dtype=float).reshape(-1)
    if len(d) != M + 1:
        raise ValueError(f"need {M + 1} distances")
    rho = np.exp(-cfg.L * cfg.alpha_g / (M + 1)) / np.sqrt(2.0)
    total = 0.0
    for m in range(1, M + 1):
        acc = 0.0
        for n in range(1, m + 1):
            acc += rho ** (m - n + 1) / d[n - 1]
        for n in range(m + 1, M + 2):
            acc += rho ** (n - m) / d[n - 1]
        total += acc * acc
    return float(cfg.P_T * cfg.eta ** 2 / 2.0 * np.exp(cfg.L * cfg.alpha_g / (M + 1)) * total)


def a_r_closed_form(M: int, alpha_g: float, L: float) -> float:
    """Closed-form array factor of the equal-distance bound."""
    if M < 1:
        raise ValueError("M must be >= 1")
    rho = np.exp(-L * alpha_g / (M + 1)) / np.sqrt(2.0)
    pre = (rho / (1.0 - rho)) ** 2
    return float(pre * (4 * M + 2 * M * rho ** (M + 1)
                        - 8 * rho * (1 - rho ** M) / (1 - rho)
                        + 2 * rho ** 2 * (1 - rho ** (2 * M)) / (1 - rho ** 2)))


def a_r_direct(M: int, alpha_g: float, L: float) -> float:
    rho = np.exp(-L * alpha_g / (M + 1)) / np.sqrt(2.0)
    total = 0.0
    for m in range(1, M + 1):
        acc = sum(rho ** (m - n + 1) for n in range(1, m + 1))
        acc += sum(rho ** (n - m) for n in range(m + 1, M + 2))
        total += acc * acc
    return float(total)


def equal_distance_bound(cfg: SystemConfig, d: float) -> float:
    """Bound with every PA at distance ``d`` from the user."""
    return float(cfg.P_T * cfg.eta ** 2 / (2.0 * d * d) * np.exp(cfg.L * cfg.alpha_g / (cfg.M + 1))
                 * a_r_closed_form(cfg.M, cfg.alpha_g, cfg.L))


def power_scaling_point(cfg: SystemConfig, user_seed=0, user_pos=None, n_grid: int = 2001,
                        restarts: int = 8) -> PowerScalingPoint:
    """Aligned MRT power and its bound for one single-user drop."""
    cfg1 = cfg.replace(K=1)
    layout = build_layout(cfg1, ArchKind.CENTER_FED, user_seed, user_pos=user_pos)
    state = PinchingState.symmetric(cfg.M)
    aligned = phase_align_positions(layout, cfg1, state, n_grid=n_grid, restarts=restarts)
    P_R = _single_user_power(aligned, state, cfg1)
    d = np.linalg.norm(pa_positions(aligned) - aligned.user_pos[0], axis=1)
    return PowerScalingPoint(M=cfg.M, P_R=P_R, P_bar=received_power_bound(cfg1, d),
                             A_R_closed=a_r_closed_form(cfg.M, cfg.alpha_g, cfg.L))
