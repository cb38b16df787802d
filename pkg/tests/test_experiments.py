import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phonon_sim.experiments import (CATALOGUE, ExperimentConfig, ExperimentError, ExperimentName,
                                    ResultSet, ScanSpec, TableRow, TomographySettings,
                                    bright_coupling, rabi_first_peaks, regenerate, run,
                                    table1_defaults, thread_count)
from phonon_sim.dynamics import SimParams
from phonon_sim.sequences import single_mode_program

FAST = [ExperimentName.PHASE_SCAN_FOCK, ExperimentName.RABI_FOCK, ExperimentName.DISTRIBUTIONS_FOCK,
        ExperimentName.RABI_UPSILON, ExperimentName.RABI_EXCITED, ExperimentName.TOMO_ROUNDTRIP]


def short(name, points=11, **kw):
    cfg = ExperimentConfig.default(name, **kw)
    d = cfg.scan.to_dict()
    d["points"] = points
    return ExperimentConfig.default(name, scan=ScanSpec(**d), **{k: v for k, v in kw.items()
                                                                  if k != "scan"})


def test_catalogue_covers_every_experiment():
    assert set(CATALOGUE) == set(ExperimentName)


def test_table_rows():
    fock = table1_defaults(TableRow.FOCK)
    assert (fock.g, fock.gamma_m, fock.gamma_e, fock.contrast, fock.offset) == (5.2, 0, 1.5, 0.94, 0.03)
    coh = table1_defaults("COHERENT")
    assert (coh.g, coh.gamma_m, coh.gamma_e, coh.contrast, coh.offset) == (7.1, 0.11, 3.8, 1.0, 0.0)
    ups = table1_defaults(TableRow.UPSILON)
    assert (ups.g, ups.gamma_m, ups.gamma_e, ups.contrast, ups.offset) == (7.3, 0.28, 2.9, 0.68, 0.11)


def test_bright_coupling():
    assert bright_coupling(SimParams(3.0, 4.0)) == pytest.approx(5.0)


@pytest.mark.parametrize("kw", [dict(kind="energy", start=0, stop=1), dict(kind="time", start=1, stop=0),
                                dict(kind="time", start=-1, stop=1), dict(kind="time", start=0, stop=1, points=0),
                                dict(kind="phase", start=0, stop=1, duration=-1)])
def test_scan_validation(kw):
    with pytest.raises(ValueError):
        ScanSpec(**kw)


def test_scan_kind_must_match_experiment():
    with pytest.raises(ValueError):
        ExperimentConfig.default("RABI_FOCK", scan=ScanSpec("phase", 0, 1))


def test_tomography_settings_validation():
    with pytest.raises(ValueError):
        TomographySettings(mode=3)


@pytest.mark.parametrize("name", list(ExperimentName))
def test_config_dict_roundtrip(name):
    cfg = ExperimentConfig.default(name, seed=4, phi0=0.1, preparation=None)
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_config_with_preparation_roundtrip():
    cfg = ExperimentConfig.default("RABI_FOCK", preparation=single_mode_program(1))
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


@given(st.floats(0.5, 20), st.floats(0, 5), st.integers(0, 2 ** 31))
@settings(max_examples=25)
def test_config_roundtrip_property(g, gamma_e, seed):
    cfg = ExperimentConfig.from_dict({"name": "RABI_FOCK", "params": {"g1": g, "g2": g, "gamma_e": gamma_e},
                                      "seed": seed})
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_partial_config_filled_from_defaults():
    cfg = ExperimentConfig.from_dict({"name": "RABI_UPSILON", "params": {"gamma_e": 0.0}})
    assert cfg.params.g1 == 7.3 and cfg.params.gamma_e == 0.0
    assert cfg.space.n_max_1 == 3


@pytest.mark.parametrize("bad,key", [({"name": "RABI_FOCK", "nam": 1}, "nam"),
                                     ({"name": "RABI_FOCK", "params": {"g": 5}}, "'g'"),
                                     ({"name": "RABI_FOCK", "scan": {"stepz": 3}}, "stepz"),
                                     ({"name": "RABI_FOCK", "space": {"n3": 3}}, "n3"),
                                     ({"name": "RABI_FOCK", "tomography": {"shot": 3}}, "shot")])
def test_unknown_keys_named(bad, key):
    with pytest.raises(ValueError, match=key):
        ExperimentConfig.from_dict(bad)


def test_config_needs_name_and_schema():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"name": "RABI_FOCK", "schema_version": 99})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"name": "NOPE"})


def test_hash_changes_with_content():
    a = ExperimentConfig.default("RABI_FOCK")
    assert a.config_hash() != a.with_cutoffs(4, 4).config_hash()
    assert len(a.config_hash()) == 12


@pytest.mark.parametrize("name", FAST)
def test_run_is_deterministic(name):
    cfg = short(name)
    a, b = run(cfg), run(cfg)
    assert a.rows == b.rows
    assert a.to_csv() == b.to_csv()
    assert a.metadata["config_hash"] == cfg.config_hash()


@pytest.mark.parametrize("name", FAST)
def test_regenerate_from_metadata(name):
    res = run(short(name))
    again = regenerate(json.loads(res.sidecar())["metadata"])
    assert again.rows == res.rows


def test_default_scans_have_101_points():
    for name in ExperimentName:
        assert len(ExperimentConfig.default(name).scan.grid()) == 101


def test_rabi_fock_curves():
    res = run(ExperimentConfig.default("RABI_FOCK"))
    assert len(res.rows) == 101
    raw_dark = res.column("dark_raw")
    assert np.max(raw_dark) < 1e-10
    assert res.column("dark") == pytest.approx(0.03 + 0.94 * raw_dark)
    bright, single = res.column("bright_raw"), res.column("single_raw")
    assert np.max(bright) > 0.9
    # |down,0,1> under the two-mode pulse carries half the bright amplitude
    assert np.max(single) == pytest.approx(0.5 * np.max(bright), rel=2e-2)
    assert max(res.metadata["max_trace_drift"].values()) < 1e-8


def test_rabi_excited_transfer_times():
    res = run(ExperimentConfig.default("RABI_EXCITED"))
    tau = res.metadata["ideal_transfer_time_ms"]
    assert tau["bright"] == pytest.approx(1 / (8 * 5.2), rel=1e-8)
    assert tau["dark"] / tau["bright"] == pytest.approx(math.sqrt(2), rel=1e-8)
    assert tau["single"] / tau["bright"] == pytest.approx(1.1348762, abs=1e-6)
    # everything starts in |up>
    assert res.column("bright_raw")[0] == pytest.approx(1)


def test_rabi_upsilon_ordering():
    peaks = rabi_first_peaks(ExperimentConfig.default("RABI_UPSILON"))
    assert peaks["upsilon_0"][0] > peaks["upsilon_pi_2"][0] > peaks["upsilon_pi"][0]
    assert peaks["upsilon_0"][1] > peaks["upsilon_pi_2"][1] > peaks["upsilon_pi"][1]
    res = run(short("RABI_UPSILON"))
    assert res.metadata["preparation_weight"]["upsilon_0"] == pytest.approx(0.5)


def test_phase_scan_fock_shape():
    res = run(ExperimentConfig.default("PHASE_SCAN_FOCK"))
    phi, p = res.column("phi_rad"), res.column("p_up_raw")
    i0, ipi = 0, int(np.argmin(np.abs(phi - math.pi)))
    assert p[i0] > 0.8 and p[ipi] < 1e-10
    # 2 pi periodic over the 4 pi window
    np.testing.assert_allclose(p[:51], p[50:], atol=1e-10)


def test_phase_offset_shifts_scan():
    base = ExperimentConfig.default("PHASE_SCAN_FOCK")
    shifted = ExperimentConfig.from_dict({**base.to_dict(), "phi0": math.pi})
    a, b = run(base).column("p_up_raw"), run(shifted).column("p_up_raw")
    np.testing.assert_allclose(a[:51], b[25:76], atol=1e-10)


def test_distributions_fock():
    res = run(ExperimentConfig.default("DISTRIBUTIONS_FOCK"))
    rows = {(r[0], r[1], r[2]): r for r in res.rows}
    for mode in (1, 2):
        ideal = [rows[("bright_up", mode, n)][5] for n in range(3)]
        assert ideal == pytest.approx([0.25, 0.5, 0.25], abs=1e-8)
        ideal = [rows[("dark_up", mode, n)][5] for n in range(3)]
        assert ideal == pytest.approx([0.5, 0.0, 0.5], abs=1e-8)
        # the dark state does not move
        before = [rows[("dark_down", mode, n)][3] for n in range(3)]
        after = [rows[("dark_down", mode, n)][4] for n in range(3)]
        assert after == pytest.approx(before, abs=1e-10)


def test_tomo_roundtrip_noiseless():
    cfg = ExperimentConfig.default("TOMO_ROUNDTRIP", tomography=TomographySettings(shots=0))
    res = run(cfg)
    err = np.abs(res.column("p_true").astype(float) - res.column("p_fit").astype(float))
    assert err.max() < 1e-4
    assert res.metadata["coherent_fit"]["alpha"] == pytest.approx(1.0, abs=1e-3)


def test_tomo_roundtrip_noisy_seeded():
    a = run(ExperimentConfig.default("TOMO_ROUNDTRIP", seed=1))
    b = run(ExperimentConfig.default("TOMO_ROUNDTRIP", seed=2))
    assert a.rows != b.rows
    err = np.abs(a.column("p_true").astype(float) - a.column("p_fit").astype(float))
    assert err.max() < 0.1


def test_coherent_short_run():
    res = run(short("RABI_COHERENT", points=6))
    assert np.max(res.column("dark_raw")) < 0.05
    # the top Fock level itself holds a few 1e-6; the tail beyond it is far smaller
    assert max(res.metadata["truncation_boundary_population"].values()) < 1e-5


def test_phase_scan_both_fixed_durations():
    cfg = ExperimentConfig.default("PHASE_SCAN_BOTH",
                                   scan=ScanSpec("phase", 0, 2 * math.pi, 5, duration=0.017335,
                                                 reference_duration=0.015809))
    res = run(cfg)
    u, c = res.column("upsilon_raw"), res.column("coherent_raw")
    # bright (phi = 0) couples more strongly than dark (phi = pi) in both families
    assert u[0] > u[2] and c[0] > c[2]
    assert u[0] == pytest.approx(u[4], abs=1e-9)


def test_custom_preparation_series():
    cfg = short("RABI_FOCK", preparation=single_mode_program(1))
    res = run(cfg)
    assert "custom" in res.columns
    np.testing.assert_allclose(res.column("custom"), res.column("single"), atol=1e-9)


def test_run_wraps_failures():
    cfg = ExperimentConfig.default("RABI_COHERENT").with_cutoffs(3, 3)
    with pytest.raises(ExperimentError, match="RABI_COHERENT failed"):
        run(cfg)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("PHONON_SIM_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("PHONON_SIM_THREADS", "zero")
    with pytest.raises(ValueError):
        thread_count()


def test_threading_does_not_change_results(monkeypatch):
    cfg = short("RABI_UPSILON")
    monkeypatch.setenv("PHONON_SIM_THREADS", "1")
    a = run(cfg)
    monkeypatch.setenv("PHONON_SIM_THREADS", "4")
    assert run(cfg).rows == a.rows


def test_result_set_io(tmp_path):
    res = run(short("RABI_FOCK"))
    csv_path, meta_path = res.write(tmp_path, "csv")
    assert csv_path.name == f"rabi_fock-{res.metadata['config_hash']}.csv"
    assert csv_path.read_text().splitlines()[0].startswith("t_ms,bright,bright_raw")
    assert json.loads(meta_path.read_text())["metadata"]["cutoffs"] == [3, 3]
    (json_path,) = res.write(tmp_path, "json")
    back = ResultSet.from_json(json_path.read_text())
    assert back.rows == res.rows and back.units == res.units
    with pytest.raises(ValueError):
        res.write(tmp_path, "xml")
    with pytest.raises(ValueError):
        ResultSet("x", ["a"], [], [], {})


def _fock_observables(cutoff):
    out = {}
    for name in ("RABI_FOCK", "RABI_EXCITED", "RABI_UPSILON"):
        res = run(short(name, points=21).with_cutoffs(cutoff, cutoff))
        out[name] = np.array([r[1:] for r in res.rows])
    out["phase"] = run(ExperimentConfig.default("PHASE_SCAN_FOCK").with_cutoffs(cutoff, cutoff)).column("p_up")
    return out


def test_cutoff_doubling_fock_and_upsilon():
    a, b = _fock_observables(3), _fock_observables(6)
    for key in a:
        assert np.max(np.abs(a[key] - b[key])) < 1e-6, key


@pytest.mark.slow
def test_cutoff_increase_coherent():
    # window covering the first bright maximum; cutoff 20 would cost minutes per series
    scan = ScanSpec("time", 0.0, 0.02, 3)
    a = run(ExperimentConfig.default("RABI_COHERENT", scan=scan))
    b = run(ExperimentConfig.default("RABI_COHERENT", scan=scan).with_cutoffs(14, 14))
    diff = np.max(np.abs(np.array(a.rows) - np.array(b.rows)))
    assert diff < 1e-4


@pytest.mark.slow
def test_phase_scan_both_default_durations():
    res = run(ExperimentConfig.default("PHASE_SCAN_BOTH"))
    d = res.metadata["pulse_duration_ms"]
    assert d["upsilon"] == pytest.approx(0.017335, abs=1e-6)
    assert d["coherent"] == pytest.approx(0.015809, abs=1e-6)
    assert len(res.rows) == 101
