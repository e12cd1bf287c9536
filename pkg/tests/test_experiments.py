import csv
import io
import math

import numpy as np
import pytest

import cpass.experiments as ex
from cpass.channel import dbm_to_watt
from cpass.experiments import ConfigError, load_spec, parse_spec, rows_to_csv, run


def test_empty_file_gives_defaults(tmp_path):
    f = tmp_path / "empty.cfg"
    f.write_text("")
    spec = load_spec(f)
    cfg = spec.cfg
    assert (cfg.M, cfg.K, cfg.L, cfg.f_c, cfg.n_eff, cfg.alpha_g, cfg.Delta) == (4, 4, 100.0, 77e9, 1.44, 0.0092, 0.01)
    assert cfg.P_T == pytest.approx(1.0)
    assert cfg.N0 == pytest.approx(1e-12)
    assert (spec.eps, spec.I_max, spec.trials) == (1e-3, 100, 20)
    assert spec.seeds == list(range(20))


def test_override_and_comments():
    spec = parse_spec("experiment = attenuation_sweep  # high loss\nalpha_g = 0.2095\n\n# nothing\n")
    assert spec.cfg.alpha_g == 0.2095
    assert spec.cfg.K == 10  # experiment default
    assert "alpha_g" not in spec.sweep and spec.sweep["M"] == [1, 5, 9, 13, 17]


def test_scalar_and_sweep_conflict():
    with pytest.raises(ConfigError) as err:
        parse_spec("K = 2\nsweep.K = 1, 2\n")
    assert err.value.key == "K" and err.value.line == 1


def test_lists_and_sweeps():
    spec = parse_spec("experiment = dof_sweep\nseeds = 3, 5, 9\nsweep.M = 2, 4\nsweep.P_T_dBm = 60, 70\n")
    assert spec.seeds == [3, 5, 9] and spec.trials == 3
    assert spec.points() == [{"M": 2, "P_T_dBm": 60.0}, {"M": 2, "P_T_dBm": 70.0},
                             {"M": 4, "P_T_dBm": 60.0}, {"M": 4, "P_T_dBm": 70.0}]


@pytest.mark.parametrize("text,line,col,key", [
    ("M = 4\nfoo = 1\n", 2, 1, "foo"),
    ("M = 4\n  K 3\n", 2, 3, None),
    ("M = four\n", 1, 5, "M"),
    ("M = 2.5\n", 1, 5, "M"),
    ("trials = 3\nseeds = 1, x\n", 2, 12, "seeds"),
    ("M = 4\nM = 5\n", 2, 1, "M"),
    ("alpha_g =\n", 1, 10, "alpha_g"),
])
def test_parse_errors_report_position(text, line, col, key):
    with pytest.raises(ConfigError) as err:
        parse_spec(text)
    assert (err.value.line, err.value.col) == (line, col)
    if key is not None:
        assert err.value.key == key or err.value.key == "seed_base"


@pytest.mark.parametrize("text,key", [
    ("trials = -2\n", "trials"),
    ("alpha_g = -1\n", None),
    ("experiment = fig9\n", "experiment"),
    ("sweep.alpha_g = 0, -1\n", "sweep.alpha_g"),
    ("variants = ring\nexperiment = architecture_compare\n", "variants"),
    ("eps = 0\n", "eps"),
    ("sweep.f_x = 1\n", "sweep.f_x"),
])
def test_validation_errors(text, key):
    with pytest.raises(ConfigError) as err:
        parse_spec(text)
    if key:
        assert err.value.key == key


def read(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_convergence_rows_nondecreasing():
    spec = parse_spec("experiment = convergence\nseeds = 0, 1\nsweep.M = 2\n")
    rows = read(rows_to_csv(run(spec)))
    for seed in ("0", "1"):
        vals = [float(r["value"]) for r in rows if r["seed"] == seed]
        its = [int(r["iteration"]) for r in rows if r["seed"] == seed]
        assert its == list(range(len(its)))
        assert np.all(np.diff(vals) >= -1e-9 * np.abs(vals[:-1]))


def test_rows_cover_grid_and_are_ordered():
    spec = parse_spec("experiment = architecture_compare\nseeds = 4, 2\nsweep.K = 1, 2\nM = 2\n")
    rows = run(spec)
    trial_rows = [r for r in rows if r.stat == "trial"]
    keys = [(r.K, r.variant, r.seed) for r in trial_rows]
    expect = [(K, v, s) for K in (1, 2) for v in spec.variants for s in (4, 2)]
    assert keys == expect
    summ = [r for r in rows if r.stat == "mean"]
    assert len(summ) == 2 * len(spec.variants)
    assert all(r.seed == "all" and r.n == 2 for r in summ)


def test_csv_is_byte_identical_and_threads_agree(tmp_path):
    spec = parse_spec("experiment = architecture_compare\nseeds = 0, 1\nsweep.K = 2\nM = 2\nI_max = 5\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(spec, out=a)
    run(spec, out=b, threads=2)
    assert a.read_bytes() == b.read_bytes()
    raw = a.read_bytes()
    assert b"\r\n" not in raw
    header = raw.split(b"\n", 1)[0].decode()
    assert header.split(",") == list(ex.CSV_COLUMNS)
    assert "PCG64" in read(a.read_text())[0]["prng"]


def test_timing_column_optional():
    spec = parse_spec("experiment = dof_sweep\nseeds = 0\nsweep.P_T_dBm = 30\n")
    assert all(r.wall_time_ms == "" for r in run(spec))
    assert all(isinstance(r.wall_time_ms, float) for r in run(spec, timing=True) if r.stat == "trial")


def test_failed_trial_is_recorded(monkeypatch):
    def boom(*a, **kw):
        raise RuntimeError("solver blew up")

    monkeypatch.setattr(ex, "optimize", boom)
    spec = parse_spec("experiment = architecture_compare\nseeds = 0, 1\nsweep.K = 1\n")
    rows = run(spec)
    bad = [r for r in rows if r.error]
    assert len(bad) == 2 * len(spec.variants)
    assert all(math.isnan(r.value) and "solver blew up" in r.error for r in bad)
    assert ex.has_errors(rows)


def test_dof_sweep_slope():
    spec = parse_spec("experiment = dof_sweep\nM = 4\nK = 4\nseeds = 1\nsweep.P_T_dBm = 60, 70\nvariants = center_fed\n")
    rows = [r for r in run(spec) if r.stat == "trial"]
    slope = [r.value for r in rows if r.metric == "slope"]
    assert len(slope) == 1 and slope[0] == pytest.approx(4, rel=0.05)
    assert [r.value for r in rows if r.metric == "rank"] == [4.0, 4.0]


def test_power_scaling_rows():
    spec = parse_spec("experiment = power_scaling\nseeds = 0\nsweep.M = 2\nrestarts = 1\n")
    rows = {r.metric: r for r in run(spec) if r.stat == "trial"}
    assert rows["P_R"].unit == "dBm"
    assert rows["P_R"].value <= rows["P_bar"].value + 0.01
    assert rows["reference_10log10M"].value == pytest.approx(10 * math.log10(2))


def test_ablation_variants():
    spec = parse_spec("experiment = beamforming_ablation\nseeds = 0\nsweep.M = 2\nvariants = proposed, scheme1\n")
    rows = {r.variant: r.value for r in run(spec) if r.stat == "trial"}
    assert set(rows) == {"proposed", "scheme1"}
    assert rows["scheme1"] <= rows["proposed"]


def test_high_attenuation_center_fed_beats_multi_waveguide():
    spec = parse_spec("experiment = attenuation_sweep\nseeds = 0\nsweep.alpha_g = 0.2095\nsweep.M = 17\n")
    rows = {r.variant: r.value for r in run(spec) if r.stat == "trial"}
    assert rows["center_fed"] > rows["multi_waveguide"]


def test_power_column_in_dbm():
    spec = parse_spec("experiment = dof_sweep\nseeds = 0\nsweep.P_T_dBm = 10\nvariants = center_fed\n")
    assert run(spec)[0].P_T_dBm == 10.0
    assert ex._apply(spec.cfg, {"P_T_dBm": 10.0}).P_T == pytest.approx(dbm_to_watt(10.0))
