"""Scenario configuration: strict sectioned key = value files.

The format is INI-like with ``#``/``;`` comments.  Every key belongs to
a known section and carries a canonical unit; values may attach one of
the suffixes ``um``, ``nm``, ``mhz`` or ``g`` and are converted to the
canonical unit on parse.  Unknown sections, unknown keys and
wrong-dimension suffixes all fail the parse so typos cannot silently
fall back to defaults.  An empty file is the fully calibrated default
scenario.

A commented reference file with every key lives at the repository root
(``reference_config.ini``).
"""

from __future__ import annotations

import configparser
import difflib
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

__all__ = [
    "ConfigError",
    "ConfigSyntaxError",
    "UnknownKeyError",
    "UnitMismatchError",
    "OpticsSection",
    "FdtdSection",
    "ScanSection",
    "G2Section",
    "OdmrSection",
    "OutputSection",
    "ScenarioConfig",
    "parse_config",
    "default_config",
]


class ConfigError(ValueError):
    """Any configuration problem; subclasses narrow the cause."""


class ConfigSyntaxError(ConfigError):
    pass


class UnknownKeyError(ConfigError):
    pass


class UnitMismatchError(ConfigError):
    pass


@dataclass(frozen=True)
class OpticsSection:
    radius_um: float = 10.0
    n_sphere: float = 2.1
    n_oil: float = 1.518
    depth_um: float = 0.1
    ray_height_um: float = 1.0
    na: float = 1.4
    excitation_wavelength_nm: float = 532.0
    emission_wavelength_nm: float = 700.0


@dataclass(frozen=True)
class FdtdSection:
    enabled: bool = True
    dx_nm: float = 26.0
    domain_width_um: float = 23.0
    domain_height_um: float = 35.3
    substrate_depth_um: float = 14.5
    sphere_radius_um: float = 10.0
    sphere_index: float = 2.0
    wavelength_nm: float = 532.0
    run_periods: int = 0  # 0 selects the solver's settle + average default


@dataclass(frozen=True)
class ScanSection:
    density_per_um2: float = 0.02
    x_min_um: float = -3.0
    x_max_um: float = 3.0
    y_min_um: float = -3.0
    y_max_um: float = 3.0
    pixel_nm: float = 30.0
    dwell_ms: float = 1.0
    power: float = 1.0
    seed: int = 1234
    surface_background: float = 1600.0
    above_background: float = 2000.0
    virtual_background: float = 200.0
    background_decay_um: float = 2.0
    z_plane_um: float = -13.0


@dataclass(frozen=True)
class G2Section:
    rates_cps: tuple[float, ...] = (1.5e6, 5.0e5)
    tau_c_ns: float = 20.0
    blinking: bool = True
    blink_on_rate: float = 1.0e3
    blink_off_rate: float = 1.0e3
    duration_s: float = 1.0
    bin_ns: float = 2.0
    window_ns: float = 200.0


@dataclass(frozen=True)
class OdmrSection:
    field_gauss: float = 50.0
    delta1_mhz: float = 50.0
    delta2_mhz: float = 118.0
    axes: tuple[int, ...] = (0, 1)
    linewidth_mhz: float = 10.0
    contrast: float = 0.15
    contrast_through_sphere: float = 0.25
    freq_min_mhz: float = 2600.0
    freq_max_mhz: float = 3140.0
    freq_step_mhz: float = 0.25


@dataclass(frozen=True)
class OutputSection:
    directory: str = "spherescope_out"
    formats: str = "both"  # csv | svg | both


@dataclass(frozen=True)
class ScenarioConfig:
    optics: OpticsSection = field(default_factory=OpticsSection)
    fdtd: FdtdSection = field(default_factory=FdtdSection)
    scan: ScanSection = field(default_factory=ScanSection)
    g2: G2Section = field(default_factory=G2Section)
    odmr: OdmrSection = field(default_factory=OdmrSection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> None:
        """Re-check section values against the domain-type invariants.

        Imports locally to keep config parsing importable on its own.
        """
        from .odmr import OdmrModel
        from .optics import ImagingSystem, Microsphere
        from .photon import EmitterSpec
        from .scan import BackgroundProfile

        try:
            Microsphere(self.optics.radius_um, self.optics.n_sphere)
            ImagingSystem(oil_index=self.optics.n_oil, objective_na=self.optics.na,
                          excitation_wavelength_nm=self.optics.excitation_wavelength_nm,
                          emission_wavelength_nm=self.optics.emission_wavelength_nm)
            Microsphere(self.fdtd.sphere_radius_um, self.fdtd.sphere_index)
            BackgroundProfile(surface_level=self.scan.surface_background,
                              decay_into_bulk_um=self.scan.background_decay_um,
                              above_surface_level=self.scan.above_background,
                              virtual_plane_level=self.scan.virtual_background)
            blink = ((self.g2.blink_on_rate, self.g2.blink_off_rate)
                     if self.g2.blinking else None)
            for rate in self.g2.rates_cps:
                EmitterSpec(rate, self.g2.tau_c_ns, blink)
            OdmrModel(linewidth_mhz=self.odmr.linewidth_mhz,
                      contrast=self.odmr.contrast)
            OdmrModel(linewidth_mhz=self.odmr.linewidth_mhz,
                      contrast=self.odmr.contrast_through_sphere)
        except ValueError as exc:
            raise ConfigError(f"invalid configuration value: {exc}") from exc
        if self.output.formats not in ("csv", "svg", "both"):
            raise ConfigError(
                f"output.formats must be csv, svg or both, got '{self.output.formats}'")
        if self.scan.x_min_um >= self.scan.x_max_um or self.scan.y_min_um >= self.scan.y_max_um:
            raise ConfigError("scan region must have positive extent")
        if not 1 <= len(self.g2.rates_cps) <= 8:
            raise ConfigError("g2.rates needs between 1 and 8 entries")
        if len(self.odmr.axes) != 2 or not all(0 <= a < 4 for a in self.odmr.axes):
            raise ConfigError("odmr.axes must name two defect axes in 0..3")
        if self.odmr.freq_step_mhz <= 0 or self.odmr.freq_min_mhz >= self.odmr.freq_max_mhz:
            raise ConfigError("odmr frequency grid must be increasing with positive step")


# Canonical unit per key kind -> accepted suffixes and multipliers.
_UNIT_TABLES = {
    "um": {"": 1.0, "um": 1.0, "nm": 1e-3},
    "nm": {"": 1.0, "nm": 1.0, "um": 1e3},
    "mhz": {"": 1.0, "mhz": 1.0},
    "gauss": {"": 1.0, "g": 1.0},
    "plain": {"": 1.0},
}

# section -> key -> (dataclass attribute, kind)
_SCHEMA: dict[str, dict[str, tuple[str, str]]] = {
    "optics": {
        "radius": ("radius_um", "um"),
        "n_sphere": ("n_sphere", "plain"),
        "n_oil": ("n_oil", "plain"),
        "depth": ("depth_um", "um"),
        "ray_height": ("ray_height_um", "um"),
        "na": ("na", "plain"),
        "excitation_wavelength": ("excitation_wavelength_nm", "nm"),
        "emission_wavelength": ("emission_wavelength_nm", "nm"),
    },
    "fdtd": {
        "enabled": ("enabled", "bool"),
        "dx": ("dx_nm", "nm"),
        "domain_width": ("domain_width_um", "um"),
        "domain_height": ("domain_height_um", "um"),
        "substrate_depth": ("substrate_depth_um", "um"),
        "sphere_radius": ("sphere_radius_um", "um"),
        "sphere_index": ("sphere_index", "plain"),
        "wavelength": ("wavelength_nm", "nm"),
        "run_periods": ("run_periods", "int"),
    },
    "scan": {
        "density": ("density_per_um2", "plain"),
        "x_min": ("x_min_um", "um"),
        "x_max": ("x_max_um", "um"),
        "y_min": ("y_min_um", "um"),
        "y_max": ("y_max_um", "um"),
        "pixel": ("pixel_nm", "nm"),
        "dwell_ms": ("dwell_ms", "plain"),
        "power": ("power", "plain"),
        "seed": ("seed", "int"),
        "surface_background": ("surface_background", "plain"),
        "above_background": ("above_background", "plain"),
        "virtual_background": ("virtual_background", "plain"),
        "background_decay": ("background_decay_um", "um"),
        "z_plane": ("z_plane_um", "um"),
    },
    "g2": {
        "rates": ("rates_cps", "floats"),
        "tau_c_ns": ("tau_c_ns", "plain"),
        "blinking": ("blinking", "bool"),
        "blink_on_rate": ("blink_on_rate", "plain"),
        "blink_off_rate": ("blink_off_rate", "plain"),
        "duration_s": ("duration_s", "plain"),
        "bin_ns": ("bin_ns", "plain"),
        "window_ns": ("window_ns", "plain"),
    },
    "odmr": {
        "field": ("field_gauss", "gauss"),
        "delta1": ("delta1_mhz", "mhz"),
        "delta2": ("delta2_mhz", "mhz"),
        "axes": ("axes", "ints"),
        "linewidth": ("linewidth_mhz", "mhz"),
        "contrast": ("contrast", "plain"),
        "contrast_through_sphere": ("contrast_through_sphere", "plain"),
        "freq_min": ("freq_min_mhz", "mhz"),
        "freq_max": ("freq_max_mhz", "mhz"),
        "freq_step": ("freq_step_mhz", "mhz"),
    },
    "output": {
        "directory": ("directory", "str"),
        "formats": ("formats", "str"),
    },
}

_SECTION_TYPES = {
    "optics": OpticsSection,
    "fdtd": FdtdSection,
    "scan": ScanSection,
    "g2": G2Section,
    "odmr": OdmrSection,
    "output": OutputSection,
}

_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}

_NUMBER_RE = re.compile(r"([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([a-zA-Z]*)")


def _parse_number(section: str, key: str, raw: str, kind: str) -> float:
    m = _NUMBER_RE.fullmatch(raw.strip())
    if m is None:
        raise ConfigSyntaxError(f"[{section}] {key}: cannot parse number from '{raw}'")
    value, unit = float(m.group(1)), m.group(2).lower()
    table = _UNIT_TABLES[kind]
    if unit not in table:
        expected = "/".join(u for u in table if u) or "no unit"
        raise UnitMismatchError(
            f"[{section}] {key}: unit '{unit}' does not fit this key "
            f"(expected {expected})"
        )
    return value * table[unit]


def _parse_value(section: str, key: str, raw: str, kind: str):
    raw = raw.strip()
    if kind == "str":
        return raw
    if kind == "bool":
        word = raw.lower()
        if word not in _BOOL_WORDS:
            raise ConfigSyntaxError(f"[{section}] {key}: expected a boolean, got '{raw}'")
        return _BOOL_WORDS[word]
    if kind == "int":
        num = _parse_number(section, key, raw, "plain")
        if num != int(num):
            raise ConfigSyntaxError(f"[{section}] {key}: expected an integer, got '{raw}'")
        return int(num)
    if kind == "floats":
        return tuple(_parse_number(section, key, part, "plain")
                     for part in raw.split(","))
    if kind == "ints":
        return tuple(int(_parse_number(section, key, part, "plain"))
                     for part in raw.split(","))
    return _parse_number(section, key, raw, kind)


def _unknown(name: str, kind: str, known) -> UnknownKeyError:
    close = difflib.get_close_matches(name, list(known), n=1)
    hint = f"; did you mean '{close[0]}'?" if close else ""
    return UnknownKeyError(f"unknown {kind} '{name}'{hint}")


def default_config() -> ScenarioConfig:
    return ScenarioConfig()


def parse_config(path) -> ScenarioConfig:
    """Parse and validate a scenario file; missing keys keep defaults.

    Raises:
        ConfigSyntaxError: Malformed line, reported with its number.
        UnknownKeyError: Section or key not in the schema.
        UnitMismatchError: Suffix of the wrong dimension for a key.
        ConfigError: Values that violate domain invariants.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        # configparser messages already carry line numbers.
        raise ConfigSyntaxError(str(exc)) from exc
    if parser.defaults():
        raise UnknownKeyError("top-level [DEFAULT] keys are not supported")

    sections = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise _unknown(section, "section", _SCHEMA)
        overrides = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise _unknown(f"{section}.{key}", "key", (f"{section}.{k}" for k in _SCHEMA[section]))
            attr, kind = _SCHEMA[section][key]
            overrides[attr] = _parse_value(section, key, raw, kind)
        sections[section] = replace(_SECTION_TYPES[section](), **overrides)

    config = replace(ScenarioConfig(), **sections)
    config.validate()
    return config


def apply_cli_overrides(config: ScenarioConfig, seed: int | None = None,
                        out_dir: str | None = None, formats: str | None = None,
                        no_fdtd: bool = False) -> ScenarioConfig:
    """Fold command-line flags into a parsed configuration."""
    if seed is not None:
        config = replace(config, scan=replace(config.scan, seed=seed))
    if out_dir is not None:
        config = replace(config, output=replace(config.output, directory=out_dir))
    if formats is not None:
        config = replace(config, output=replace(config.output, formats=formats))
    if no_fdtd:
        config = replace(config, fdtd=replace(config.fdtd, enabled=False))
    return config
