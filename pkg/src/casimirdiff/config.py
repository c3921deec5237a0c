"""Run configuration: ``[section]`` headers with ``key = value`` lines.

Every physical quantity carries its unit in the key name (``radius_um``,
``z_min_nm``, ...).  Unknown sections and keys are rejected, referenced files
must exist when the configuration is loaded, and relative paths are resolved
against the configuration file's directory.

Two presets hold the parameters of the two measured samples::

    [run]
    preset = sample_a
"""

from __future__ import annotations

import configparser
import copy
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

# type tags: f float, i int, s str, b bool, p path (must exist), o path (output),
# m permittivity model (catalog name or ``file:<optical table>``)
SCHEMA: dict[str, dict[str, str]] = {
    "run": {"preset": "s", "label": "s", "seed": "i"},
    "geometry": {"radius_um": "f", "z_min_nm": "f", "z_max_nm": "f", "z_step_nm": "f"},
    "materials": {
        "sphere": "m", "plate": "m", "si_a": "m", "si_b": "m",
        "plate_carrier_density_cm3": "f", "plate_effective_mass_ratio": "f", "plate_resistivity_ohm_cm": "f",
        "gold_wp_ev": "f", "gold_gamma_ev": "f", "kk_low_policy": "s",
    },
    "quadrature": {"relative_tolerance": "f", "xi_cutoff_factor": "f", "y_cutoff": "f", "max_subdivisions": "i"},
    "roughness": {"enabled": "b", "sigma_nm": "f", "sphere_file": "p", "plate_file": "p", "bin_count": "i"},
    "calibration": {
        "scans": "p", "fit_z_min_nm": "f", "fit_z_max_nm": "f", "grid_step_nm": "f",
        "m_nm_per_unit": "f", "offset_mode": "s",
        "v0_V": "f", "km_nN_per_unit": "f", "z0_nm": "f",
        "voltage_count": "i", "v_min_V": "f", "v_max_V": "f",
        "z_piezo_min_nm": "f", "z_piezo_max_nm": "f", "z_piezo_step_nm": "f",
        "noise_signal": "f", "contact_gap_nm": "f", "contact_noise_nm": "f", "casimir_offset": "b",
    },
    "statistics": {
        "confidence": "f", "combine_rule": "s", "band_rule": "s", "systematic_pN": "f",
        "theory_dz_nm": "f", "optical_fraction": "f", "repetitions": "i", "noise_pN": "f",
        "consistency_threshold": "f", "theory_file": "p", "scans_file": "p",
    },
    "output": {"dir": "o", "magnitude_column": "b"},
}

BASE: dict[str, dict] = {
    "run": {"preset": "none", "label": "", "seed": 0},
    "geometry": {"radius_um": 100.9, "z_min_nm": 60.0, "z_max_nm": 150.0, "z_step_nm": 1.0},
    "materials": {
        "sphere": "gold_surrogate", "plate": "si_intrinsic_surrogate",
        "si_a": "si_intrinsic_surrogate", "si_b": "si_doped_b",
        "plate_carrier_density_cm3": 0.0, "plate_effective_mass_ratio": 0.26, "plate_resistivity_ohm_cm": 1.0,
        "gold_wp_ev": 9.0, "gold_gamma_ev": 0.035, "kk_low_policy": "zero",
    },
    "quadrature": {"relative_tolerance": 1e-6, "xi_cutoff_factor": 50.0, "y_cutoff": 60.0, "max_subdivisions": 2000},
    "roughness": {"enabled": False, "sigma_nm": 0.0, "sphere_file": None, "plate_file": None, "bin_count": 64},
    "calibration": {
        "scans": None, "fit_z_min_nm": 300.0, "fit_z_max_nm": 2500.0, "grid_step_nm": 10.0,
        "m_nm_per_unit": None, "offset_mode": "cofit",
        "v0_V": -0.341, "km_nN_per_unit": 1.646, "z0_nm": 32.4,
        "voltage_count": 29, "v_min_V": -0.712, "v_max_V": -0.008,
        "z_piezo_min_nm": 200.0, "z_piezo_max_nm": 2700.0, "z_piezo_step_nm": 1.0,
        "noise_signal": 0.002, "contact_gap_nm": 5.0, "contact_noise_nm": 0.0, "casimir_offset": True,
    },
    "statistics": {
        "confidence": 0.95, "combine_rule": "dominant", "band_rule": "quadrature", "systematic_pN": 1.2,
        "theory_dz_nm": 1.0, "optical_fraction": 0.005, "repetitions": 40, "noise_pN": 12.5,
        "consistency_threshold": 0.95, "theory_file": None, "scans_file": None,
    },
    "output": {"dir": "out", "magnitude_column": True},
}

PRESETS: dict[str, dict[str, dict]] = {
    "sample_a": {
        "geometry": {"z_min_nm": 61.19, "z_step_nm": 0.17, "z_max_nm": 150.0},
        "materials": {"plate": "si_intrinsic_surrogate"},
        "calibration": {
            "fit_z_min_nm": 300.0, "v0_V": -0.341, "km_nN_per_unit": 1.646, "z0_nm": 32.4,
            "m_nm_per_unit": 47.8, "voltage_count": 29, "v_min_V": -0.712, "v_max_V": -0.008,
            "z_piezo_min_nm": 200.0,
        },
        "statistics": {"repetitions": 40, "theory_dz_nm": 1.0, "noise_pN": 12.5},
    },
    "sample_b": {
        "geometry": {"z_min_nm": 60.51, "z_step_nm": 0.17, "z_max_nm": 150.0},
        "materials": {"plate": "si_doped_b"},
        "calibration": {
            "fit_z_min_nm": 100.0, "v0_V": -0.337, "km_nN_per_unit": 1.700, "z0_nm": 32.3,
            "m_nm_per_unit": 47.9, "voltage_count": 25, "v_min_V": -0.611, "v_max_V": -0.008,
            "z_piezo_min_nm": 60.0,
        },
        "statistics": {"repetitions": 39, "theory_dz_nm": 0.8, "noise_pN": 15.6},
    },
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(kind: str, raw: str, where: str, base_dir: Path):
    raw = raw.strip()
    try:
        if kind == "f":
            return float(raw)
        if kind == "i":
            return int(raw)
        if kind == "b":
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r}") from None
    if kind == "m":
        if raw.startswith("file:"):
            return "file:" + _convert("p", raw[5:], where, base_dir)
        return raw
    if kind in ("p", "o"):
        if raw.lower() in ("", "none"):
            return None
        path = Path(raw)
        path = path if path.is_absolute() else base_dir / path
        if kind == "p" and not path.exists():
            raise ConfigError(f"{where}: file {path} does not exist")
        return str(path)
    return raw


@dataclass
class RunConfig:
    values: dict
    source: str = "<defaults>"

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def canonical(self) -> str:
        """Sorted ``key = value`` dump; the output directory is left out of it."""
        lines = []
        for sec in sorted(self.values):
            lines.append(f"[{sec}]")
            for k in sorted(self.values[sec]):
                if (sec, k) != ("output", "dir"):
                    lines.append(f"{k} = {self.values[sec][k]!r}")
        return "\n".join(lines)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def z_grid_m(self) -> np.ndarray:
        g = self["geometry"]
        lo, hi, step = g["z_min_nm"], g["z_max_nm"], g["z_step_nm"]
        if not (lo > 0 and hi >= lo and step > 0):
            raise ConfigError("geometry grid needs 0 < z_min_nm <= z_max_nm and z_step_nm > 0")
        n = int(np.floor((hi - lo) / step + 1e-9)) + 1
        return (lo + step * np.arange(n)) * 1e-9

    @property
    def radius_m(self) -> float:
        return self["geometry"]["radius_um"] * 1e-6


def _merge(dst: dict, src: dict):
    for sec, kv in src.items():
        dst[sec].update(kv)


def default_config(preset: str = "none") -> RunConfig:
    values = copy.deepcopy(BASE)
    if preset != "none":
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; known: {', '.join(sorted(PRESETS))}")
        _merge(values, copy.deepcopy(PRESETS[preset]))
    values["run"]["preset"] = preset
    _validate(values)
    return RunConfig(values, source=f"<preset {preset}>")


def _validate(values: dict):
    st = values["statistics"]
    from .stats import RULES

    for key in ("combine_rule", "band_rule"):
        if st[key] not in RULES:
            raise ConfigError(f"statistics.{key}: unknown rule {st[key]!r}")
    if not 0 < st["confidence"] < 1:
        raise ConfigError("statistics.confidence must lie in (0, 1)")
    if values["calibration"]["offset_mode"] not in ("cofit", "subtract"):
        raise ConfigError("calibration.offset_mode must be cofit or subtract")
    if values["materials"]["kk_low_policy"] not in ("zero", "drude"):
        raise ConfigError("materials.kk_low_policy must be zero or drude")
    if values["geometry"]["radius_um"] <= 0:
        raise ConfigError("geometry.radius_um must be > 0")


def parse_config(text: str, base_dir: Path | str = ".", source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive (units such as V, pN)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}".replace("\n", " ")) from None
    base_dir = Path(base_dir)

    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key in parser[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{source}: unknown key {sec}.{key}")

    preset = parser.get("run", "preset", fallback="none").strip()
    cfg = default_config(preset)
    values = cfg.values
    for sec in parser.sections():
        for key, raw in parser[sec].items():
            values[sec][key] = _convert(SCHEMA[sec][key], raw, f"{source}: {sec}.{key}", base_dir)
    values["run"]["preset"] = preset
    _validate(values)
    return RunConfig(values, source=source)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file {path} does not exist")
    return parse_config(path.read_text(), path.parent, str(path))
