import numpy as np
import pytest

from casimirdiff import fileio as F
from casimirdiff.calibration import ContactPoint, ScanRecord
from casimirdiff.config import PRESETS, default_config, load_config, parse_config
from casimirdiff.errors import ConfigError, DataFormatError
from casimirdiff.lifshitz import ForceCurve
from casimirdiff.roughness import gaussian_distribution
from casimirdiff.stats import RepeatedScans

# --------------------------------------------------------------------------
# configuration


def test_presets_hold_sample_parameters():
    a, b = default_config("sample_a"), default_config("sample_b")
    assert a["geometry"]["radius_um"] == b["geometry"]["radius_um"] == 100.9
    assert a["geometry"]["z_min_nm"] == 61.19 and b["geometry"]["z_min_nm"] == 60.51
    assert a["geometry"]["z_step_nm"] == b["geometry"]["z_step_nm"] == 0.17
    assert a["statistics"]["repetitions"] == 40 and b["statistics"]["repetitions"] == 39
    assert a["calibration"]["fit_z_min_nm"] == 300 and b["calibration"]["fit_z_min_nm"] == 100
    assert a["calibration"]["voltage_count"] == 29
    assert (a["calibration"]["v0_V"], a["calibration"]["km_nN_per_unit"], a["calibration"]["z0_nm"],
            a["calibration"]["m_nm_per_unit"]) == (-0.341, 1.646, 32.4, 47.8)
    assert a["materials"]["plate"] == "si_intrinsic_surrogate" and b["materials"]["plate"] == "si_doped_b"
    assert set(PRESETS) == {"sample_a", "sample_b"}


def test_z_grid():
    z = default_config("sample_a").z_grid_m() * 1e9
    assert z[0] == pytest.approx(61.19) and np.diff(z) == pytest.approx(0.17)
    assert z[-1] <= 150.0


def test_parse_overrides_and_types(tmp_path):
    (tmp_path / "topo.csv").write_text("height_nm\n1\n2\n")
    cfg = parse_config("[run]\npreset = sample_b\nseed = 12\n[geometry]\nz_max_nm = 90  # short\n"
                       "[roughness]\nenabled = yes\nplate_file = topo.csv\n", tmp_path)
    assert cfg["run"]["seed"] == 12
    assert cfg["geometry"]["z_max_nm"] == 90.0
    assert cfg["geometry"]["z_min_nm"] == 60.51
    assert cfg["roughness"]["enabled"] is True
    assert cfg["roughness"]["plate_file"] == str(tmp_path / "topo.csv")


@pytest.mark.parametrize("text,match", [
    ("[bogus]\nx = 1\n", "unknown section"),
    ("[geometry]\nradius_mm = 1\n", "unknown key"),
    ("[geometry]\nradius_um = big\n", "cannot read"),
    ("[roughness]\nenabled = maybe\n", "cannot read"),
    ("[roughness]\nsphere_file = missing.csv\n", "does not exist"),
    ("[materials]\nplate = file:nope.txt\n", "does not exist"),
    ("[run]\npreset = sample_c\n", "unknown preset"),
    ("[statistics]\nband_rule = median\n", "unknown rule"),
    ("[statistics]\nconfidence = 1.5\n", "confidence"),
    ("[calibration]\noffset_mode = guess\n", "offset_mode"),
    ("no section header\n", "ConfigError|section"),
])
def test_config_rejections(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text, tmp_path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_digest_ignores_output_dir_but_tracks_values():
    a = default_config("sample_a")
    b = default_config("sample_a")
    b.values["output"]["dir"] = "/elsewhere"
    assert a.digest == b.digest
    b.values["run"]["seed"] = 3
    assert a.digest != b.digest


def test_bad_grid():
    cfg = default_config()
    cfg.values["geometry"]["z_step_nm"] = 0.0
    with pytest.raises(ConfigError):
        cfg.z_grid_m()


# --------------------------------------------------------------------------
# files


def test_force_curve_round_trip(tmp_path):
    z = np.array([60.0, 61.5, 70.0]) * 1e-9
    c = ForceCurve(z, np.array([-4.01234567e-10, -3.5e-10, -2.5e-10]), np.array([1e-11, 2e-11, 3e-11]))
    p = F.write_force_curve(tmp_path / "f.csv", c, {"units": "pN"}, magnitude=True)
    text = p.read_text()
    assert text.startswith("# units: pN\nz_nm,F_pN,err_pN,absF_pN\n60,-401.235,10,401.235\n")
    back = F.read_force_curve(p)
    np.testing.assert_allclose(back.force, c.force, rtol=5e-6)  # 6 significant digits
    np.testing.assert_allclose(back.error, c.error, rtol=5e-6)


def test_repeated_scans_round_trip(tmp_path):
    rs = RepeatedScans(np.array([60.0, 60.17, 60.34]), np.array([[-1.0, -2.0, -3.0], [-1.5, -2.5, -3.5]]))
    p = F.write_repeated_scans(tmp_path / "r.csv", rs)
    assert p.read_text().splitlines()[0] == "z_nm,F_pN_rep1,F_pN_rep2"
    back = F.read_repeated_scans(p)
    np.testing.assert_array_equal(back.forces_pN, rs.forces_pN)


def test_scan_manifest_and_directory(tmp_path):
    zp = np.arange(100.0, 112.0)
    scans = [ScanRecord(v, zp, -v * np.linspace(1, 2, 12)) for v in (-0.5, -0.3, -0.1)]
    names = []
    for i, s in enumerate(scans):
        F.write_scan(tmp_path / f"s{i}.csv", s, {"synthetic": "true"})
        names.append(f"s{i}.csv")
    F.write_contacts(tmp_path / "contacts.csv", [ContactPoint(-0.5, -1.0, 10.0), ContactPoint(-0.1, -0.2, 5.0)])
    F.write_manifest(tmp_path / "m.txt", names, "contacts.csv")
    got, contacts = F.read_manifest(tmp_path / "m.txt")
    assert [g.voltage for g in got] == [-0.5, -0.3, -0.1]
    np.testing.assert_allclose(got[1].signal, scans[1].signal, rtol=1e-11)  # 12 significant digits
    assert contacts[1] == ContactPoint(-0.1, -0.2, 5.0)
    got_dir, contacts_dir = F.read_manifest(tmp_path)
    assert len(got_dir) == 3 and len(contacts_dir) == 2
    assert F.is_synthetic(tmp_path) and F.is_synthetic(tmp_path / "s0.csv")
    assert not F.is_synthetic(tmp_path / "contacts.csv")


def test_scan_format_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("z_piezo_nm,S_def\n1,2\n")
    with pytest.raises(DataFormatError, match="V="):
        F.read_scan(p)
    p.write_text("# V=0.1\nz,S\n" + "".join(f"{i},0\n" for i in range(12)))
    with pytest.raises(DataFormatError):
        F.read_scan(p)
    p.write_text("# V=0.1\nz_piezo_nm,S_def\n1,x\n")
    with pytest.raises(DataFormatError):
        F.read_scan(p)
    (tmp_path / "m.txt").write_text("frobnicate bad.csv\n")
    with pytest.raises(DataFormatError):
        F.read_manifest(tmp_path / "m.txt")


def test_topography_files(tmp_path):
    raw = tmp_path / "raw.csv"
    raw.write_text("height_nm\n" + "\n".join(str(v) for v in [-1, 1] * 10) + "\n")
    d = F.read_topography(raw, 2)
    np.testing.assert_allclose(d.offsets, [-1e-9, 1e-9])
    g = gaussian_distribution(2e-9, points=11)
    F.write_topography(tmp_path / "bin.csv", g)
    back = F.read_topography(tmp_path / "bin.csv")
    np.testing.assert_allclose(back.offsets, g.offsets, rtol=1e-11, atol=1e-22)
    bad = tmp_path / "bad.csv"
    bad.write_text("height_nm,probability\n0,0.7\n1,0.7\n")
    with pytest.raises(DataFormatError):
        F.read_topography(bad)
