"""WMMSE alternating optimization of transmit and pinching beamforming.

One outer iteration runs, in order:

1. closed-form equalizers ``t`` and weights ``kappa``;
2. the precoder ``W`` (regularized normal equations, multiplier by bisection);
3. the power-splitting angles ``theta`` (per-port quartic stationarity);
4. the PA positions (per-PA grid search inside the micro-adjustment window);
5. the interior radiation angles ``phi`` (coarse scan + Brent).

Every block update only accepts a candidate that does not increase the
weighted MSE objective, so the objective trace is monotone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    ArchKind,
    Layout,
    PinchingState,
    SystemConfig,
    amplitude_matrix,
    build_G,
    build_H,
    effective_channel,
    freespace_gain,
    inwaveguide_gain,
    sqrt_radiation,
)
from .rootfind import (
    BracketSpec,
    ConvergenceError,
    bisect_monotone,
    brent_minimize,
    solve_quartic,
)

log = logging.getLogger(__name__)

THETA_GRID_FALLBACK = 4096
USER_GUARD = 1e-6


class OptimizationError(RuntimeError):
    """A block update failed; ``report`` holds the traces up to the failure."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass
class AuxState:
    t: np.ndarray
    kappa: np.ndarray


@dataclass(eq=False)
class BeamformerState:
    W: np.ndarray
    theta: np.ndarray
    delta: np.ndarray
    pa_x: np.ndarray

    @property
    def phi(self) -> np.ndarray:
        return np.arccos(np.sqrt(np.clip(self.delta[1:-1], 0.0, 1.0)))

    @property
    def pinching(self) -> PinchingState:
        return PinchingState(self.theta, self.delta)

    def copy(self) -> "BeamformerState":
        return BeamformerState(self.W.copy(), self.theta.copy(), self.delta.copy(), self.pa_x.copy())


@dataclass
class SolveReport:
    sum_rate_trace: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    # (iteration, block name, objective after the block) with aux held fixed
    block_trace: list = field(default_factory=list)
    # (lambda, transmit power) for every precoder update
    precoder_log: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# rate / MSE bookkeeping
# ---------------------------------------------------------------------------

def sum_rate(H_eff, W, N0: float) -> float:
    A = np.atleast_2d(H_eff) @ W
    p = np.abs(A) ** 2
    sig = np.diag(p)
    interf = p.sum(axis=1) - sig
    return float(np.sum(np.log2(1.0 + sig / (interf + N0))))


def update_aux(H_eff, W, N0: float) -> AuxState:
    """MMSE equalizers and the matching weights ``kappa = 1/eps``."""
    A = np.atleast_2d(H_eff) @ W
    total = np.sum(np.abs(A) ** 2, axis=1) + N0
    a_kk = np.diag(A)
    t = a_kk / total
    eps = 1.0 - np.abs(a_kk) ** 2 / total
    return AuxState(t=t, kappa=1.0 / eps)


def mse(H_eff, W, aux: AuxState, N0: float) -> np.ndarray:
    A = np.atleast_2d(H_eff) @ W
    t = aux.t
    total = np.sum(np.abs(A) ** 2, axis=1) + N0
    return np.abs(t) ** 2 * total - 2.0 * np.real(np.conj(t) * np.diag(A)) + 1.0


def wmmse_objective(H_eff, W, aux: AuxState, N0: float) -> float:
    """sum_k kappa_k eps_k - ln kappa_k."""
    return float(np.sum(aux.kappa * mse(H_eff, W, aux, N0) - np.log(aux.kappa)))


def _reduced_from_products(A, aux: AuxState):
    """Aux-dependent part of the objective for stacked products ``A = H_eff W`` (..., K, K)."""
    wq = aux.kappa * np.abs(aux.t) ** 2
    quad = np.sum(wq * np.sum(np.abs(A) ** 2, axis=-1), axis=-1)
    diag = np.diagonal(A, axis1=-2, axis2=-1)
    lin = np.sum(aux.kappa * np.real(np.conj(aux.t) * diag), axis=-1)
    return quad - 2.0 * lin


def reduced_objective(H_eff, W, aux: AuxState) -> float:
    """The weighted-MSE objective with aux-only constants dropped."""
    return float(_reduced_from_products(np.atleast_2d(H_eff) @ W, aux))


# ---------------------------------------------------------------------------
# precoder
# ---------------------------------------------------------------------------

def mrt_precoder(H_eff, P_T: float) -> np.ndarray:
    """Per-user MRT columns with equal power P_T/K."""
    H_eff = np.atleast_2d(H_eff)
    K = H_eff.shape[0]
    nrm = np.linalg.norm(H_eff, axis=1)
    nrm = np.where(nrm > 0, nrm, 1.0)
    return (np.sqrt(P_T / K) * H_eff.conj() / nrm[:, None]).T


def update_precoder(H_eff, aux: AuxState, P_T: float, tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Minimize the weighted MSE over ``W`` subject to ``||W||_F^2 <= P_T``.

    Returns ``(W, lam)`` where ``lam`` is the power multiplier. The power
    ``||W(lam)||^2`` is monotone in ``lam``; its root is found by
    :func:`bisect_monotone` with relative tolerance ``tol``.
    """
    H_eff = np.atleast_2d(H_eff)
    wq = aux.kappa * np.abs(aux.t) ** 2
    Acov = (H_eff.conj().T * wq) @ H_eff
    Acov = 0.5 * (Acov + Acov.conj().T)
    B = H_eff.conj().T * (aux.kappa * aux.t)

    lam_eig, U = np.linalg.eigh(Acov)
    lam_eig = np.clip(lam_eig, 0.0, None)
    UB = U.conj().T @ B
    num = np.sum(np.abs(UB) ** 2, axis=1)
    # components outside the range of Acov carry no signal
    floor = 1e-13 * max(lam_eig.max(), 1e-300)
    live = lam_eig > floor

    def power(lam):
        return float(np.sum(num[live] / (lam_eig[live] + lam) ** 2))

    lam = bisect_monotone(lambda x: power(x) - P_T, 0.0, 1.0 if lam_eig.max() == 0 else float(lam_eig.max()),
                          tol * P_T)
    coef = np.where(live, 1.0 / (lam_eig + lam + (~live)), 0.0)
    W = U @ (coef[:, None] * UB)
    return W, float(lam)


# ---------------------------------------------------------------------------
# structural helpers
# ---------------------------------------------------------------------------

class _Model:
    """Cached geometry for block updates on one layout."""

    def __init__(self, layout: Layout, cfg: SystemConfig):
        self.layout = layout
        self.cfg = cfg
        self.kind = layout.kind

    def channels(self, state: BeamformerState):
        lay = self.layout.with_pa_x(state.pa_x)
        H = build_H(lay, self.cfg)
        G = build_G(lay, self.cfg)
        S = amplitude_matrix(self.kind, state.pinching)
        return H, G, S

    def h_eff(self, state: BeamformerState):
        H, G, S = self.channels(state)
        return effective_channel(H, S * G)


def _sym_objective_theta(etaF, etaB, C, aux: AuxState, theta):
    """Block objective in one split angle, vectorized over ``theta``."""
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta)[..., None, None]
    s = np.sin(theta)[..., None, None]
    return _reduced_from_products(etaF * c + etaB * s + C, aux)


def split_angle_coefficients(etaF, etaB, C, aux: AuxState):
    """(A, B, C, D) of the stationarity condition A sin2t + B cos2t + C sin t + D cos t = 0."""
    wq = aux.kappa * np.abs(aux.t) ** 2
    tc = np.conj(aux.t)
    A = np.sum(wq * np.sum(np.abs(etaB) ** 2 - np.abs(etaF) ** 2, axis=1))
    B = 2.0 * np.sum(wq * np.sum(np.real(np.conj(etaF) * etaB), axis=1))
    Cc = 2.0 * np.sum(aux.kappa * (-np.abs(aux.t) ** 2 * np.sum(np.real(np.conj(etaF) * C), axis=1)
                                   + np.real(tc * np.diag(etaF))))
    D = 2.0 * np.sum(aux.kappa * (np.abs(aux.t) ** 2 * np.sum(np.real(np.conj(etaB) * C), axis=1)
                                  - np.real(tc * np.diag(etaB))))
    return float(A), float(B), float(Cc), float(D)


def quartic_from_stationarity(A, B, C, D):
    """Weierstrass (z = tan(theta/2)) form of the stationarity condition."""
    return (B - D, -4 * A + 2 * C, -6 * B, 4 * A + 2 * C, B + D)


def solve_split_angle_block(F, Bm, W, theta, m: int, aux: AuxState) -> float:
    """Best ``theta_m`` with every other angle fixed.

    ``F`` and ``Bm`` are the ``K x M`` forward/backward effective channels,
    so that ``H_eff = F diag(cos theta) + Bm diag(sin theta)``.
    """
    etaF = F[:, m, None] * W[m, None, :]
    etaB = Bm[:, m, None] * W[m, None, :]
    Aprod = (F * np.cos(theta) + Bm * np.sin(theta)) @ W
    C = Aprod - np.cos(theta[m]) * etaF - np.sin(theta[m]) * etaB

    coeffs = quartic_from_stationarity(*split_angle_coefficients(etaF, etaB, C, aux))
    cand = [0.0, np.pi / 2, float(theta[m])]
    try:
        roots = solve_quartic(coeffs)
        cand += [2.0 * np.arctan(z) for z in roots.real_in_unit]
    except (ValueError, ArithmeticError):
        log.debug("quartic solve failed for block %d, falling back to grid", m)
        cand += list(np.linspace(0.0, np.pi / 2, THETA_GRID_FALLBACK))
    cand = np.clip(np.array(cand), 0.0, np.pi / 2)
    vals = _sym_objective_theta(etaF, etaB, C, aux, cand)
    j = int(np.argmin(vals))
    # keep the incumbent unless strictly improved
    if not vals[j] < vals[2]:
        j = 2
    return float(cand[j])


def update_split_angles(layout: Layout, cfg: SystemConfig, state: BeamformerState, aux: AuxState,
                        sweeps: int = 1) -> np.ndarray:
    """Cyclic per-port update of the splitting angles (center-fed only)."""
    if layout.kind is not ArchKind.CENTER_FED:
        return state.theta.copy()
    model = _Model(layout, cfg)
    H, G, _ = model.channels(state)
    SF, SB = sqrt_radiation(np.sqrt(state.delta), np.sqrt(1.0 - state.delta))
    F = H @ (SF * G).T
    Bm = H @ (SB * G).T
    theta = state.theta.copy()
    for _ in range(sweeps):
        for m in range(layout.M):
            theta[m] = solve_split_angle_block(F, Bm, state.W, theta, m, aux)
    return theta


# ---------------------------------------------------------------------------
# PA positions
# ---------------------------------------------------------------------------

def _position_grid(layout: Layout, cfg: SystemConfig, n: int, current: float, n_grid: int):
    lo = layout.pa_x_init[n] - cfg.Delta
    hi = layout.pa_x_init[n] + cfg.Delta
    grid = np.linspace(lo, hi, n_grid) if cfg.Delta > 0 else np.empty(0)
    return np.append(grid, current)


def solve_pa_position_block(layout: Layout, cfg: SystemConfig, H, G, S, W, pa_x, n: int,
                            aux: AuxState, n_grid: int = 401):
    """Grid search for PA ``n``; returns ``(x, h_col, g_col)`` of the winner."""
    Q = S * G
    H_eff = H @ Q.T
    C = H_eff - np.outer(H[:, n], Q[:, n])
    CW = C @ W

    grid = _position_grid(layout, cfg, n, pa_x[n], n_grid)
    dx = layout.user_pos[:, 0][None, :] - grid[:, None]
    dy = layout.user_pos[:, 1] - layout.pa_y[n]
    d = np.sqrt(dx * dx + dy[None, :] ** 2)
    ok = np.all(d > USER_GUARD, axis=1)
    ok[-1] = True
    d = np.where(d > 0, d, 1.0)
    h = cfg.eta * np.exp(-1j * cfg.k0 * d) / d                               # (G, K)
    g = inwaveguide_gain(np.abs(layout.port_x[None, :] - grid[:, None]), cfg)  # (G, M)
    v = (S[:, n][None, :] * g) @ W                                             # (G, K)
    A = CW[None, :, :] + h[:, :, None] * v[:, None, :]
    vals = _reduced_from_products(A, aux)
    vals = np.where(ok, vals, np.inf)
    j = int(np.argmin(vals))
    if not vals[j] < vals[-1]:
        j = len(grid) - 1
    return float(grid[j]), h[j], g[j]


def update_pa_positions(layout: Layout, cfg: SystemConfig, state: BeamformerState, aux: AuxState,
                        n_grid: int = 401, sweeps: int = 1) -> np.ndarray:
    """Sequential grid search over every PA inside ``[init - Delta, init + Delta]``."""
    pa_x = state.pa_x.copy()
    if cfg.Delta == 0:
        return pa_x
    H, G, S = _Model(layout, cfg).channels(state)
    H = H.copy()
    G = G.copy()
    for _ in range(sweeps):
        for n in range(layout.n_pa):
            x, hcol, gcol = solve_pa_position_block(layout, cfg, H, G, S, state.W, pa_x, n, aux, n_grid)
            pa_x[n] = x
            H[:, n] = hcol
            G[:, n] = gcol
    return pa_x


# ---------------------------------------------------------------------------
# radiation angles
# ---------------------------------------------------------------------------

def _radiation_pieces(H, G, theta, delta, n: int, kind):
    """Split ``H_eff`` into parts multiplying 1, cos(phi_n), sin(phi_n)."""
    c = np.sqrt(delta)
    s = np.sqrt(1.0 - delta)
    out = []
    for cn, sn in ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)):
        cc, ss = c.copy(), s.copy()
        cc[n], ss[n] = cn, sn
        SF, SB = sqrt_radiation(cc, ss)
        if kind is ArchKind.END_FED:
            S = SF
        else:
            S = np.cos(theta)[:, None] * SF + np.sin(theta)[:, None] * SB
        out.append(H @ (S * G).T)
    E0, E1, E2 = out
    return E0, E1 - E0, E2 - E0


def radiation_block_objective(E0, Ec, Es, W, aux: AuxState, phi):
    phi = np.asarray(phi, dtype=float)
    c = np.cos(phi)[..., None, None]
    s = np.sin(phi)[..., None, None]
    A = (E0 @ W) + c * (Ec @ W) + s * (Es @ W)
    return _reduced_from_products(A, aux)


def solve_radiation_angle_block(H, G, theta, delta, W, n: int, aux: AuxState, kind,
                                tol: float = 1e-4, n_scan: int = 32) -> float:
    """Best ``phi_n`` (``delta_n = cos^2 phi_n``) with every other ratio fixed."""
    E0, Ec, Es = _radiation_pieces(H, G, theta, delta, n, kind)
    E0W, EcW, EsW = E0 @ W, Ec @ W, Es @ W

    def f(p):
        return float(_reduced_from_products(E0W + np.cos(p) * EcW + np.sin(p) * EsW, aux))

    phi_now = float(np.arccos(np.sqrt(np.clip(delta[n], 0.0, 1.0))))
    scan = np.linspace(0.0, np.pi / 2, n_scan)
    vals = radiation_block_objective(E0, Ec, Es, W, aux, scan)
    i = int(np.argmin(vals))
    lo, hi = scan[max(i - 1, 0)], scan[min(i + 1, n_scan - 1)]
    try:
        x, fx = brent_minimize(f, BracketSpec(lo, hi, tol=tol))
    except ConvergenceError as err:
        x, fx = err.best_x, err.best_f
    f_now = f(phi_now)
    best = min(((x, fx), (float(scan[i]), float(vals[i]))), key=lambda p: p[1])
    if not best[1] < f_now:
        return phi_now
    return float(best[0])


def update_radiation_angles(layout: Layout, cfg: SystemConfig, state: BeamformerState, aux: AuxState,
                            tol: float = 1e-4, n_scan: int = 32, max_sweeps: int = 1,
                            sweep_rtol: float = 1e-4) -> np.ndarray:
    """Cyclic update of the interior radiation ratios; endpoints stay at 1."""
    delta = state.delta.copy()
    if layout.kind is ArchKind.MULTI_WAVEGUIDE or layout.M < 2:
        return delta
    model = _Model(layout, cfg)
    H, G, _ = model.channels(state)
    prev = None
    for _ in range(max_sweeps):
        for n in range(1, layout.M):
            phi = solve_radiation_angle_block(H, G, state.theta, delta, state.W, n, aux, layout.kind,
                                              tol=tol, n_scan=n_scan)
            delta[n] = min(max(np.cos(phi) ** 2, 0.0), 1.0)
        S = amplitude_matrix(layout.kind, PinchingState(state.theta, delta))
        cur = reduced_objective(H @ (S * G).T, state.W, aux)
        if prev is not None and (prev - cur) <= sweep_rtol * abs(prev):
            break
        prev = cur
    return delta


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def initial_state(layout: Layout, cfg: SystemConfig) -> BeamformerState:
    """Even split, interior delta = 1/2, PAs at their reference spots, equal-power MRT."""
    pin = PinchingState.initial(layout.M, layout.kind)
    state = BeamformerState(np.zeros((layout.M, layout.K), complex), pin.theta, pin.delta,
                            layout.pa_x_init.copy())
    state.W = mrt_precoder(_Model(layout, cfg).h_eff(state), cfg.P_T)
    return state


@dataclass(frozen=True)
class BlockSchedule:
    """Which blocks each outer iteration updates.

    ``precoder`` is ``"wmmse"`` (optimal), ``"mrt"`` (recomputed MRT) or
    ``"fixed"`` (keep the initial precoder).
    """

    precoder: str = "wmmse"
    split: bool = True
    positions: bool = True
    radiation: bool = True

    def __post_init__(self):
        if self.precoder not in ("wmmse", "mrt", "fixed"):
            raise ValueError(f"unknown precoder mode {self.precoder!r}")


SCHEMES = {
    "proposed": BlockSchedule(),
    "fixed_split": BlockSchedule(split=False),
    "fixed_precoder": BlockSchedule(precoder="mrt"),
    "fixed_positions": BlockSchedule(positions=False),
    "fixed_radiation": BlockSchedule(radiation=False),
    "scheme1": BlockSchedule(precoder="mrt", split=False, radiation=False),
}


def optimize(layout: Layout, cfg: SystemConfig, init: BeamformerState | None = None, eps: float = 1e-3,
             I_max: int = 100, n_grid: int = 401, schedule: BlockSchedule | str = "proposed",
             inner_sweeps: int = 1, brent_tol: float = 1e-4):
    """Alternating optimization of (W, theta, PA positions, delta).

    Stops when the relative sum-rate increment drops below ``eps`` or after
    ``I_max`` iterations. The traces in the returned :class:`SolveReport`
    start with the initial point.
    """
    if isinstance(schedule, str):
        schedule = SCHEMES[schedule]
    state = (init or initial_state(layout, cfg)).copy()
    model = _Model(layout, cfg)
    N0, P_T = cfg.N0, cfg.P_T
    report = SolveReport()

    H_eff = model.h_eff(state)
    rate = sum_rate(H_eff, state.W, N0)
    report.sum_rate_trace.append(rate)
    report.objective_trace.append(wmmse_objective(H_eff, state.W, update_aux(H_eff, state.W, N0), N0))

    for it in range(1, I_max + 1):
        try:
            aux = update_aux(H_eff, state.W, N0)
            report.block_trace.append((it, "aux", reduced_objective(H_eff, state.W, aux)))

            if schedule.precoder == "wmmse":
                W, lam = update_precoder(H_eff, aux, P_T)
                if reduced_objective(H_eff, W, aux) <= reduced_objective(H_eff, state.W, aux):
                    state.W = W
                report.precoder_log.append((lam, float(np.sum(np.abs(W) ** 2))))
            elif schedule.precoder == "mrt":
                state.W = mrt_precoder(H_eff, P_T)
            report.block_trace.append((it, "W", reduced_objective(H_eff, state.W, aux)))

            if schedule.split and layout.kind is ArchKind.CENTER_FED:
                state.theta = update_split_angles(layout, cfg, state, aux, sweeps=inner_sweeps)
                report.block_trace.append((it, "theta", reduced_objective(model.h_eff(state), state.W, aux)))

            if schedule.positions:
                state.pa_x = update_pa_positions(layout, cfg, state, aux, n_grid=n_grid, sweeps=inner_sweeps)
                report.block_trace.append((it, "pa_x", reduced_objective(model.h_eff(state), state.W, aux)))

            if schedule.radiation and layout.kind is not ArchKind.MULTI_WAVEGUIDE and layout.M >= 2:
                state.delta = update_radiation_angles(layout, cfg, state, aux, tol=brent_tol,
                                                      max_sweeps=inner_sweeps)
                report.block_trace.append((it, "delta", reduced_objective(model.h_eff(state), state.W, aux)))
        except Exception as err:
            raise OptimizationError(f"iteration {it} failed: {err}", report) from err

        H_eff = model.h_eff(state)
        new_rate = sum_rate(H_eff, state.W, N0)
        report.sum_rate_trace.append(new_rate)
        report.objective_trace.append(wmmse_objective(H_eff, state.W, aux, N0))
        report.iterations = it
        inc = (new_rate - rate) / rate if rate > 0 else np.inf
        rate = new_rate
        if inc < eps:
            report.converged = True
            break
    return state, report
