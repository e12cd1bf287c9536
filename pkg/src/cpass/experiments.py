"""Experiment specs, seeded trial execution and CSV output."""

from __future__ import annotations

import csv
import io
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .analysis import capacity, numeric_rank, power_scaling_point, symmetric_channel
from .channel import ArchKind, SystemConfig, build_layout, dbm_to_watt, place_users, watt_to_dbm
from .wmmse import SCHEMES, optimize

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "ResultRow",
    "load_spec",
    "parse_spec",
    "run",
    "rows_to_csv",
    "write_csv",
    "place_users",
]

PRNG_NAME = f"numpy-{np.__version__}/PCG64"

EXPERIMENTS = (
    "dof_sweep",
    "power_scaling",
    "convergence",
    "beamforming_ablation",
    "architecture_compare",
    "attenuation_sweep",
)

DEFAULT_EXPERIMENT = "convergence"

# simulation defaults; powers in dBm
DEFAULTS = dict(M=4, K=4, L=100.0, f_c=77e9, n_eff=1.44, alpha_g=0.0092, P_T_dBm=30.0, N0_dBm=-90.0,
                Delta=0.01, area=100.0, feed_x=0.0, waveguide_spacing=1.0)
SOLVER_DEFAULTS = dict(eps=1e-3, I_max=100, N_grid=401, inner_sweeps=1)

SWEEPABLE = ("M", "K", "L", "f_c", "n_eff", "alpha_g", "P_T_dBm", "N0_dBm", "Delta", "area")
INT_KEYS = {"M", "K", "I_max", "N_grid", "trials", "seed_base", "inner_sweeps", "restarts"}

# per-experiment defaults, applied before the file's own settings
EXPERIMENT_DEFAULTS = {
    "dof_sweep": dict(sweep={"P_T_dBm": [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0]},
                      variants=["center_fed", "end_fed"]),
    "power_scaling": dict(sweep={"M": [1, 2, 4, 8, 16, 32, 64]}, variants=["center_fed"]),
    "convergence": dict(sweep={"M": [1, 2, 3, 4]}, variants=["center_fed"]),
    "beamforming_ablation": dict(sweep={"M": [1, 2, 4, 6, 8]}, variants=list(SCHEMES)),
    "architecture_compare": dict(sweep={"K": [1, 4]},
                                 variants=["center_fed", "end_fed", "multi_waveguide"]),
    "attenuation_sweep": dict(sweep={"alpha_g": [0.0, 0.0092, 0.2095], "M": [1, 5, 9, 13, 17]},
                              variants=["center_fed", "multi_waveguide"], K=10),
}

CSV_COLUMNS = ("experiment", "variant", "M", "K", "P_T_dBm", "alpha_g", "seed", "trial", "stat",
               "iteration", "metric", "value", "unit", "n", "iterations", "converged", "wall_time_ms",
               "error", "prng")


class ConfigError(ValueError):
    """Bad experiment file. ``line``/``col`` are 1-based; ``key`` names the field."""

    def __init__(self, msg, line=None, col=None, key=None):
        where = f"line {line}, col {col}: " if line is not None else ""
        super().__init__(where + msg)
        self.line, self.col, self.key = line, col, key


@dataclass
class ExperimentSpec:
    experiment: str
    cfg: SystemConfig
    sweep: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)
    trials: int = 20
    variants: list = field(default_factory=list)
    eps: float = 1e-3
    I_max: int = 100
    N_grid: int = 401
    inner_sweeps: int = 1
    restarts: int = 8

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}", key="experiment")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1", key="trials")
        if not self.seeds:
            self.seeds = list(range(self.trials))
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct", key="seeds")
        if not self.eps > 0:
            raise ConfigError("eps must be positive", key="eps")
        if self.I_max < 1:
            raise ConfigError("I_max must be >= 1", key="I_max")
        if self.N_grid < 2:
            raise ConfigError("N_grid must be >= 2", key="N_grid")
        for name, values in self.sweep.items():
            if name not in SWEEPABLE:
                raise ConfigError(f"cannot sweep {name!r}", key=f"sweep.{name}")
            if not values:
                raise ConfigError("empty sweep", key=f"sweep.{name}")
            for v in values:
                try:
                    _apply(self.cfg, {name: v})
                except ValueError as err:
                    raise ConfigError(f"sweep value {v!r}: {err}", key=f"sweep.{name}") from None
        for v in self.variants:
            if self.experiment == "beamforming_ablation":
                if v not in SCHEMES:
                    raise ConfigError(f"unknown scheme {v!r}", key="variants")
            else:
                try:
                    ArchKind.parse(v)
                except ValueError:
                    raise ConfigError(f"unknown architecture {v!r}", key="variants") from None

    def points(self):
        """Sweep points as dicts, in declared order (last axis fastest)."""
        names = list(self.sweep)
        return [dict(zip(names, combo)) for combo in itertools.product(*(self.sweep[n] for n in names))]


@dataclass
class ResultRow:
    experiment: str
    variant: str
    M: int
    K: int
    P_T_dBm: float
    alpha_g: float
    seed: object
    metric: str
    value: float
    unit: str
    trial: object = ""
    stat: str = "trial"
    n: int = 1
    iteration: object = ""
    iterations: object = ""
    converged: object = ""
    wall_time_ms: object = ""
    error: str = ""

    def as_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["prng"] = PRNG_NAME
        return d


# ---------------------------------------------------------------------------
# spec file parsing
# ---------------------------------------------------------------------------

def _config_from(values: dict) -> SystemConfig:
    return SystemConfig(M=int(values["M"]), K=int(values["K"]), L=float(values["L"]), f_c=float(values["f_c"]),
                        n_eff=float(values["n_eff"]), alpha_g=float(values["alpha_g"]),
                        P_T=float(dbm_to_watt(values["P_T_dBm"])), N0=float(dbm_to_watt(values["N0_dBm"])),
                        Delta=float(values["Delta"]), area=float(values["area"]), feed_x=float(values["feed_x"]),
                        waveguide_spacing=float(values["waveguide_spacing"]))


def _apply(cfg: SystemConfig, point: dict) -> SystemConfig:
    kw = {}
    for k, v in point.items():
        if k == "P_T_dBm":
            kw["P_T"] = float(dbm_to_watt(v))
        elif k == "N0_dBm":
            kw["N0"] = float(dbm_to_watt(v))
        elif k in ("M", "K"):
            kw[k] = int(v)
        else:
            kw[k] = float(v)
    return cfg.replace(**kw)


def _scalar(text, key, line, col):
    try:
        if key in INT_KEYS:
            f = float(text)
            if not f.is_integer():
                raise ValueError
            return int(f)
        return float(text)
    except ValueError:
        raise ConfigError(f"invalid value {text!r} for {key}", line, col, key) from None


def _split_list(text):
    """Comma-separated items with their column offsets inside ``text``."""
    out, pos = [], 0
    for piece in text.split(","):
        lead = len(piece) - len(piece.lstrip())
        out.append((piece.strip(), pos + lead))
        pos += len(piece) + 1
    return out


def parse_spec(text: str, experiment: str | None = None) -> ExperimentSpec:
    """Parse ``key = value`` lines; see :func:`load_spec`."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        if "=" not in body:
            col = len(body) - len(body.lstrip()) + 1
            raise ConfigError("expected 'key = value'", lineno, col)
        key_part, val_part = body.split("=", 1)
        key = key_part.strip()
        kcol = len(key_part) - len(key_part.lstrip()) + 1
        vcol = len(key_part) + 2 + (len(val_part) - len(val_part.lstrip()))
        if not key:
            raise ConfigError("missing key", lineno, kcol)
        if not val_part.strip():
            raise ConfigError(f"missing value for {key}", lineno, vcol, key)
        if key in raw:
            raise ConfigError(f"duplicate key {key}", lineno, kcol, key)
        raw[key] = (val_part.strip(), lineno, kcol, vcol)

    exp = experiment or DEFAULT_EXPERIMENT
    if "experiment" in raw:
        exp = raw.pop("experiment")[0]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}", key="experiment")

    values = dict(DEFAULTS)
    solver = dict(SOLVER_DEFAULTS)
    exp_defaults = dict(EXPERIMENT_DEFAULTS[exp])
    sweep = dict(exp_defaults.pop("sweep"))
    variants = list(exp_defaults.pop("variants"))
    values.update(exp_defaults)
    trials, seeds, seed_base, restarts = 20, None, 0, 8
    custom_sweep = {}

    for key, (val, lineno, kcol, vcol) in raw.items():
        if key in DEFAULTS:
            values[key] = _scalar(val, key, lineno, vcol)
        elif key in SOLVER_DEFAULTS:
            solver[key] = _scalar(val, key, lineno, vcol)
        elif key == "trials":
            trials = _scalar(val, key, lineno, vcol)
        elif key == "seed_base":
            seed_base = _scalar(val, key, lineno, vcol)
        elif key == "restarts":
            restarts = _scalar(val, key, lineno, vcol)
        elif key == "seeds":
            seeds = [_scalar(v, "seed_base", lineno, vcol + off) for v, off in _split_list(val)]
        elif key == "variants":
            variants = [v for v, _ in _split_list(val)]
            if any(not v for v in variants):
                raise ConfigError("empty item in variants", lineno, vcol, key)
        elif key.startswith("sweep."):
            name = key[len("sweep."):]
            if name not in SWEEPABLE:
                raise ConfigError(f"cannot sweep {name!r}", lineno, kcol, key)
            custom_sweep[name] = [_scalar(v, name, lineno, vcol + off) for v, off in _split_list(val)]
        else:
            raise ConfigError(f"unknown key {key!r}", lineno, kcol, key)

    for name in custom_sweep:
        if name in raw:
            _, lineno, kcol, _ = raw[name]
            raise ConfigError(f"{name!r} is both set and swept", lineno, kcol, name)
    if custom_sweep:
        sweep = custom_sweep
    else:
        # an explicit setting replaces the experiment's default sweep over that parameter
        sweep = {k: v for k, v in sweep.items() if k not in raw}
    try:
        cfg = _config_from(values)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    if seeds is None:
        if trials < 1:
            raise ConfigError("trials must be >= 1", key="trials")
        seeds = [seed_base + i for i in range(trials)]
    else:
        trials = len(seeds)
    return ExperimentSpec(experiment=exp, cfg=cfg, sweep=sweep, seeds=seeds, trials=trials, variants=variants,
                          eps=float(solver["eps"]), I_max=int(solver["I_max"]), N_grid=int(solver["N_grid"]),
                          inner_sweeps=int(solver["inner_sweeps"]), restarts=restarts)


def load_spec(path) -> ExperimentSpec:
    """Read an experiment file.

    The format is one ``key = value`` per line, ``#`` starts a comment and
    list values are comma separated. Recognized keys are the system
    parameters (``M``, ``K``, ``L``, ``f_c``, ``n_eff``, ``alpha_g``,
    ``P_T_dBm``, ``N0_dBm``, ``Delta``, ``area``, ``feed_x``,
    ``waveguide_spacing``), solver settings (``eps``, ``I_max``, ``N_grid``,
    ``inner_sweeps``), ``experiment``, ``trials``, ``seed_base``, ``seeds``,
    ``variants``, ``restarts`` and ``sweep.<param>``. Several ``sweep.``
    keys form a product grid. Without an ``experiment`` key the file
    describes a ``convergence`` run.
    """
    return parse_spec(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------

def _base_row(spec, cfg, variant, seed, trial):
    return dict(experiment=spec.experiment, variant=variant, M=cfg.M, K=cfg.K,
                P_T_dBm=round(float(watt_to_dbm(cfg.P_T)), 9), alpha_g=cfg.alpha_g, seed=seed, trial=trial)


def _dof_rows(cfg, variant, seed, prev_point):
    H = symmetric_channel(cfg, variant, user_seed=seed)
    cap = capacity(H, cfg.P_T, cfg.M, cfg.N0)
    rows = [("capacity", cap, "bit/s/Hz", {}), ("rank", float(numeric_rank(H)), "1", {})]
    if prev_point is not None:
        P0 = float(dbm_to_watt(prev_point["P_T_dBm"]))
        slope = (cap - capacity(H, P0, cfg.M, cfg.N0)) / math.log2(cfg.P_T / P0)
        rows.append(("slope", slope, "bit/s/Hz per doubling", {}))
    return rows


def _power_rows(spec, cfg, seed):
    p = power_scaling_point(cfg, user_seed=seed, restarts=spec.restarts)
    return [("P_R", float(watt_to_dbm(p.P_R)), "dBm", {}),
            ("P_bar", float(watt_to_dbm(p.P_bar)), "dBm", {}),
            ("reference_10log10M", 10 * math.log10(cfg.M), "dB", {})]


def _solver_rows(spec, cfg, variant, seed, trace=False):
    if spec.experiment == "beamforming_ablation":
        kind, schedule = ArchKind.CENTER_FED, variant
    else:
        kind, schedule = ArchKind.parse(variant), "proposed"
    layout = build_layout(cfg, kind, user_seed=seed)
    _, rep = optimize(layout, cfg, eps=spec.eps, I_max=spec.I_max, n_grid=spec.N_grid, schedule=schedule,
                      inner_sweeps=spec.inner_sweeps)
    extra = dict(iterations=rep.iterations, converged=int(rep.converged))
    rows = []
    if trace:
        for i, r in enumerate(rep.sum_rate_trace):
            rows.append(("sum_rate", r, "bit/s/Hz", dict(extra, iteration=i)))
    else:
        rows.append(("sum_rate", rep.sum_rate_trace[-1], "bit/s/Hz", extra))
    return rows


def _previous_power(points, p_idx):
    """The preceding point on the same power curve, if any (slope needs two powers)."""
    if p_idx == 0 or "P_T_dBm" not in points[p_idx]:
        return None
    prev, cur = points[p_idx - 1], points[p_idx]
    if any(prev[k] != cur[k] for k in cur if k != "P_T_dBm") or not prev["P_T_dBm"] < cur["P_T_dBm"]:
        return None
    return prev


def _metric_names(spec, points, p_idx):
    if spec.experiment == "dof_sweep":
        names = ["capacity", "rank"]
        return names + (["slope"] if _previous_power(points, p_idx) is not None else [])
    if spec.experiment == "power_scaling":
        return ["P_R", "P_bar", "reference_10log10M"]
    return ["sum_rate"]


def run_trial(task):
    """Execute one (sweep point, variant, seed) task and return its rows as dicts."""
    spec, p_idx, variant, trial, seed, timing = task
    points = spec.points()
    point = points[p_idx]
    cfg = _apply(spec.cfg, point)
    base = _base_row(spec, cfg, variant, seed, trial)
    t0 = time.perf_counter()
    try:
        if spec.experiment == "dof_sweep":
            prev = _previous_power(points, p_idx)
            out = _dof_rows(cfg, variant, seed, prev)
        elif spec.experiment == "power_scaling":
            out = _power_rows(spec, cfg, seed)
        else:
            out = _solver_rows(spec, cfg, variant, seed, trace=spec.experiment == "convergence")
        err = ""
    except Exception as exc:  # recorded per trial, the run goes on
        out = [(m, math.nan, "", {}) for m in _metric_names(spec, points, p_idx)]
        err = f"{type(exc).__name__}: {exc}"
    ms = round((time.perf_counter() - t0) * 1e3, 3) if timing else ""
    rows = []
    for metric, value, unit, extra in out:
        row = ResultRow(metric=metric, value=float(value), unit=unit, wall_time_ms=ms, error=err, **base)
        for k, v in extra.items():
            setattr(row, k, v)
        rows.append(row)
    return rows


def _summaries(rows):
    """Mean/std rows per (metric, iteration) over the successful trials of one group."""
    groups = {}
    for r in rows:
        if r.error or not math.isfinite(r.value):
            continue
        groups.setdefault((r.metric, r.iteration), []).append(r)
    out = []
    for (metric, it), rs in groups.items():
        vals = np.array([r.value for r in rs])
        for stat, v in (("mean", vals.mean()), ("std", vals.std(ddof=1) if len(vals) > 1 else 0.0)):
            out.append(ResultRow(experiment=rs[0].experiment, variant=rs[0].variant, M=rs[0].M, K=rs[0].K,
                                 P_T_dBm=rs[0].P_T_dBm, alpha_g=rs[0].alpha_g, seed="all", metric=metric,
                                 value=float(v), unit=rs[0].unit, stat=stat, n=len(vals), iteration=it))
    return out


def run(spec: ExperimentSpec, out=None, threads: int = 1, timing: bool = False):
    """Run every (sweep point, variant, seed) task of ``spec``.

    Rows come back ordered by sweep point, variant and seed, each group
    followed by its mean/std summary, whatever the execution order. A failed
    trial yields rows with ``value = nan`` and the error text. If ``out`` is
    given the rows are also written there as CSV.
    """
    tasks = [(spec, p, v, t, s, timing)
             for p in range(len(spec.points())) for v in spec.variants for t, s in enumerate(spec.seeds)]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_trial, tasks))
    else:
        results = [run_trial(t) for t in tasks]

    rows = []
    per_group = len(spec.seeds)
    for g in range(0, len(results), per_group):
        group = [r for res in results[g:g + per_group] for r in res]
        rows += group + _summaries(group)
    if out is not None:
        write_csv(rows, out)
    return rows


def _fmt(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        d = r.as_dict()
        w.writerow([_fmt(d[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(rows, path):
    Path(path).write_text(rows_to_csv(rows), encoding="utf-8", newline="")


def has_errors(rows) -> bool:
    return any(r.error for r in rows)
