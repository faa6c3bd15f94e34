"""
JSON run configuration.

Files may nest sections ({"vcsel": {"beam_waist_um": 20}}) or use dotted keys
({"vcsel.beam_waist_um": 20}). Values resolve in this order: SCHEMA defaults,
the file, VCSEL_RS_<SECTION>__<KEY> environment variables, explicit
overrides. A run manifest is accepted as a config file; its "config" block
is used.
"""

import json
import os
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

from vcsel_rs.channel import BRANCH_POLICIES, MAX_SUM_POWER
from vcsel_rs.errors import ConfigError
from vcsel_rs.geometry import DEFAULT_UNIT_CENTERS, SceneConfig
from vcsel_rs.optics import GAIN_MODELS, GAUSSIAN_BEAM, GainModel, NoiseModel
from vcsel_rs.precoding import COMMON_STRATEGIES, PRINCIPAL_DIRECTION
from vcsel_rs.ratesplit import SCHEMES
from vcsel_rs.scenario import CLUSTERED_GAUSSIAN, PLACEMENT_MODELS, PlacementModel, ScenarioConfig


SCHEMA_VERSION = 1
ENV_PREFIX = "VCSEL_RS_"


@dataclass(frozen=True)
class Option:
    kind: str
    default: Any
    check: Optional[Callable[[Any], bool]] = None
    accepted: str = ""


def _positive(x):
    return x > 0


def _fraction(x):
    return 0 < x <= 1


def _all(check):
    return lambda values: all(check(v) for v in values)


SCHEMA: Dict[str, Option] = {
    "schema": Option("int", SCHEMA_VERSION, lambda x: x == SCHEMA_VERSION, "1"),

    "room.length_m": Option("float", 5.0, _positive, "> 0"),
    "room.width_m": Option("float", 5.0, _positive, "> 0"),
    "room.height_m": Option("float", 3.0, _positive, "> 0"),
    "room.rx_plane_height_m": Option("float", 0.85, _positive, "> 0 and below room.height_m"),

    "transmitter.units": Option(
        "point_list", [list(c) for c in DEFAULT_UNIT_CENTERS], lambda v: len(v) > 0, "nonempty list of [x, y, z]"
    ),
    "transmitter.vcsels_per_unit": Option("int", 10, lambda x: x >= 1, ">= 1"),
    "transmitter.tilt_deg": Option("float", 20.0, lambda x: 0 <= x < 90, "[0, 90)"),

    "vcsel.beam_waist_um": Option("float", 5.0, _positive, "> 0"),
    "vcsel.wavelength_nm": Option("float", 850.0, _positive, "> 0"),
    "vcsel.optical_power_mw": Option("float", 2.5, _positive, "> 0"),
    "vcsel.semi_angle_deg": Option("float", 15.0, lambda x: 0 < x < 90, "(0, 90)"),

    "adr.azimuth_deg": Option("float_list", [0.0, 90.0, 180.0, 270.0], _all(lambda x: 0 <= x < 360), "[0, 360)"),
    "adr.elevation_deg": Option("float_list", [60.0] * 4, _all(lambda x: 0 < x <= 90), "(0, 90]"),
    "adr.fov_deg": Option("float_list", [25.0] * 4, _all(lambda x: 0 < x < 90), "(0, 90)"),
    "adr.area_mm2": Option("float", 20.0, _positive, "> 0"),
    "adr.responsivity_a_per_w": Option("float", 0.4, _positive, "> 0"),

    "noise.current_nsd_pa_per_rthz": Option("float", 4.47, _positive, "> 0"),
    "noise.bandwidth_ghz": Option("float", 5.0, _positive, "> 0"),
    "noise.shot_noise": Option("bool", False),

    "channel.gain_model": Option("str", GAUSSIAN_BEAM, lambda x: x in GAIN_MODELS, " | ".join(GAIN_MODELS)),
    "channel.branch_policy": Option("str", MAX_SUM_POWER, lambda x: x in BRANCH_POLICIES, " | ".join(BRANCH_POLICIES)),

    "precoding.ridge": Option("float", 0.0, lambda x: x >= 0, ">= 0"),
    "precoding.common_strategy": Option(
        "str", PRINCIPAL_DIRECTION, lambda x: x in COMMON_STRATEGIES, " | ".join(COMMON_STRATEGIES)
    ),

    "ratesplit.t": Option("float", 0.8, _fraction, "(0, 1]"),
    "ratesplit.alpha": Option("float", 0.8, _fraction, "(0, 1]"),
    "ratesplit.beta": Option("float", 0.9, _fraction, "(0, 1]"),
    "ratesplit.total_power": Option("float", 1.0, _positive, "> 0"),
    "ratesplit.exclude_unserved_from_common": Option("bool", False),

    "hrs.groups": Option("int_list", [5], lambda v: len(v) > 0 and all(g >= 1 for g in v), "integers >= 1"),

    "scenario.users": Option("int", 10, lambda x: x >= 1, ">= 1"),
    "scenario.schemes": Option(
        "str_list", list(SCHEMES), lambda v: len(v) > 0 and set(v) <= set(SCHEMES), "nonempty subset of rs, hrs"
    ),
    "scenario.trials": Option("int", 200, lambda x: x >= 1, ">= 1"),
    "scenario.master_seed": Option("int", 0, lambda x: 0 <= x < 2 ** 64, "[0, 2^64)"),
    "scenario.workers": Option("int", 1, lambda x: x >= 1, ">= 1"),
    "scenario.keep_trials": Option("bool", False),

    "placement.model": Option(
        "str", CLUSTERED_GAUSSIAN, lambda x: x in PLACEMENT_MODELS, " | ".join(PLACEMENT_MODELS)
    ),
    "placement.cluster_count": Option("int", 5, lambda x: x >= 1, ">= 1"),
    "placement.cluster_sigma_m": Option("float", 0.5, lambda x: x >= 0, ">= 0"),

    "sweep.users": Option("int_list", list(range(2, 21, 2)), _all(lambda x: x >= 1), "ascending integers >= 1"),
    "sweep.beam_waist_um": Option(
        "float_list", [20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0], _all(_positive), "ascending values > 0"
    ),
    "sweep.groups": Option("int_list", [1, 2, 5, 10], _all(lambda x: x >= 1), "ascending integers >= 1"),
}


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _coerce(key, option, value):
    kind = option.kind
    if kind == "int":
        if not _is_int(value):
            raise ConfigError(key, "expected an integer, got {!r}".format(value))
        return value
    if kind == "float":
        if not _is_number(value):
            raise ConfigError(key, "expected a number, got {!r}".format(value))
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(key, "expected true or false, got {!r}".format(value))
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(key, "expected a string, got {!r}".format(value))
        return value

    if kind == "int_list" and _is_int(value):
        value = [value]
    if not isinstance(value, list):
        raise ConfigError(key, "expected a list, got {!r}".format(value))
    if kind == "int_list":
        if not all(_is_int(v) for v in value):
            raise ConfigError(key, "expected a list of integers, got {!r}".format(value))
        return list(value)
    if kind == "float_list":
        if not all(_is_number(v) for v in value):
            raise ConfigError(key, "expected a list of numbers, got {!r}".format(value))
        return [float(v) for v in value]
    if kind == "str_list":
        if not all(isinstance(v, str) for v in value):
            raise ConfigError(key, "expected a list of strings, got {!r}".format(value))
        return list(value)
    if kind == "point_list":
        if not all(isinstance(p, list) and len(p) == 3 and all(_is_number(c) for c in p) for p in value):
            raise ConfigError(key, "expected a list of [x, y, z] points, got {!r}".format(value))
        return [[float(c) for c in p] for p in value]
    raise ConfigError(key, "unsupported option kind {}".format(kind))


def flatten(data, prefix=""):
    flat = {}
    for key, value in data.items():
        name = prefix + key
        if isinstance(value, dict):
            flat.update(flatten(value, prefix=name + "."))
        else:
            flat[name] = value
    return flat


def _parse_env_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def env_overrides(environ=None):
    environ = os.environ if environ is None else environ
    overrides = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower().replace("__", ".")
        overrides[key] = _parse_env_value(raw)
    return overrides


def read_config_file(path):
    with open(path, encoding="utf-8") as r:
        try:
            data = json.load(r)
        except json.JSONDecodeError as e:
            raise ConfigError(str(path), "not valid JSON: {}".format(e))
    if not isinstance(data, dict):
        raise ConfigError(str(path), "top level must be a JSON object")
    if "tool_version" in data and isinstance(data.get("config"), dict):
        data = data["config"]
    return flatten(data)


def _apply(values, updates):
    for key, value in updates.items():
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        option = SCHEMA[key]
        value = _coerce(key, option, value)
        if option.check is not None and not option.check(value):
            raise ConfigError(key, "value {!r} outside accepted range {}".format(value, option.accepted))
        values[key] = value


def _check_cross_keys(values):
    if values["room.rx_plane_height_m"] >= values["room.height_m"]:
        raise ConfigError("room.rx_plane_height_m", "must be below room.height_m={}".format(values["room.height_m"]))
    branch_lists = ("adr.azimuth_deg", "adr.elevation_deg", "adr.fov_deg")
    if len({len(values[k]) for k in branch_lists}) != 1:
        raise ConfigError("adr.azimuth_deg", "adr azimuth, elevation and fov lists must have equal length")
    for key in ("sweep.users", "sweep.beam_waist_um", "sweep.groups"):
        sweep = values[key]
        if any(b <= a for a, b in zip(sweep, sweep[1:])):
            raise ConfigError(key, "values must be strictly ascending")


def load_config(path=None, overrides=None, environ=None) -> Dict[str, Any]:
    """Resolve a flat dotted-key config dict from defaults, file, env and overrides."""
    values = {key: option.default for key, option in SCHEMA.items()}
    if path:
        _apply(values, read_config_file(path))
    _apply(values, env_overrides(environ))
    _apply(values, flatten(overrides or {}))
    _check_cross_keys(values)
    return values


def to_scenario_config(values) -> ScenarioConfig:
    scene = SceneConfig(
        length_m=values["room.length_m"],
        width_m=values["room.width_m"],
        height_m=values["room.height_m"],
        rx_plane_height_m=values["room.rx_plane_height_m"],
        unit_centers=tuple(tuple(c) for c in values["transmitter.units"]),
        vcsels_per_unit=values["transmitter.vcsels_per_unit"],
        tilt_deg=values["transmitter.tilt_deg"],
        beam_waist_m=values["vcsel.beam_waist_um"] * 1e-6,
        wavelength_m=values["vcsel.wavelength_nm"] * 1e-9,
        optical_power_w=values["vcsel.optical_power_mw"] * 1e-3,
        branch_azimuths_deg=tuple(values["adr.azimuth_deg"]),
        branch_elevations_deg=tuple(values["adr.elevation_deg"]),
        branch_fovs_deg=tuple(values["adr.fov_deg"]),
        detector_area_m2=values["adr.area_mm2"] * 1e-6,
        responsivity_a_per_w=values["adr.responsivity_a_per_w"]
    )
    if values["channel.gain_model"] == GAUSSIAN_BEAM:
        gain_model = GainModel.gaussian()
    else:
        gain_model = GainModel.lambertian(values["vcsel.semi_angle_deg"])
    return ScenarioConfig(
        scene=scene,
        gain_model=gain_model,
        branch_policy=values["channel.branch_policy"],
        noise=NoiseModel(
            current_nsd_a_per_rthz=values["noise.current_nsd_pa_per_rthz"] * 1e-12,
            bandwidth_hz=values["noise.bandwidth_ghz"] * 1e9,
            shot_noise=values["noise.shot_noise"]
        ),
        placement=PlacementModel(
            variant=values["placement.model"],
            cluster_count=values["placement.cluster_count"],
            cluster_sigma_m=values["placement.cluster_sigma_m"]
        ),
        users=values["scenario.users"],
        schemes=tuple(values["scenario.schemes"]),
        groups=tuple(values["hrs.groups"]),
        t=values["ratesplit.t"],
        alpha=values["ratesplit.alpha"],
        beta=values["ratesplit.beta"],
        total_power=values["ratesplit.total_power"],
        exclude_unserved_from_common=values["ratesplit.exclude_unserved_from_common"],
        ridge=values["precoding.ridge"],
        common_strategy=values["precoding.common_strategy"],
        trials=values["scenario.trials"],
        master_seed=values["scenario.master_seed"],
        workers=values["scenario.workers"],
        keep_trials=values["scenario.keep_trials"]
    )


def parse_config(path=None, overrides=None, environ=None) -> ScenarioConfig:
    return to_scenario_config(load_config(path, overrides, environ))
