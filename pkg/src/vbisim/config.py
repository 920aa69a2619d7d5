"""Scenario configuration files: TOML parsing, emission, and hashing.

The schema has five sections: ``[bridge]``, one or more ``[[vehicles]]``
tables (model type plus trajectory), optional ``[roughness]`` and
``[traffic]``, and ``[solver]``. Unknown keys are hard errors so typos
cannot silently change a study. Emission uses full-precision floats,
so parse -> dump -> parse reproduces the configuration exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .beam import BridgeModel
from .coupling import ScenarioConfig, TrafficSpec, Trajectory
from .errors import ConfigError
from .roughness import RoughnessSpec
from .vehicle import MODEL_TAGS, VehicleModel

_BRIDGE_KEYS = {
    "span_length",
    "support_positions",
    "elastic_modulus",
    "second_moment",
    "area",
    "mass_per_length",
    "damping_ratio",
    "num_elements",
}
_TRAJECTORY_KEYS = {"speed", "entry_time"}
_ROUGHNESS_KEYS = {"class", "coefficient", "x0", "x_max", "dx", "seed", "smoothing_window"}
_TRAFFIC_KEYS = {"n_vehicles", "unit_mass", "seed"}
_SOLVER_KEYS = {"dt", "t_end", "mode", "tol", "max_iter", "seed", "hermitian_interp", "gravity"}


def _check_keys(table: dict, allowed: set, section: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")


def _require(table: dict, key: str, section: str):
    try:
        return table[key]
    except KeyError:
        raise ConfigError(f"missing key {key!r} in [{section}]") from None


def _vehicle_from_table(table: dict, index: int) -> tuple[VehicleModel, Trajectory]:
    section = f"vehicles[{index}]"
    tag = _require(table, "type", section)
    try:
        cls = MODEL_TAGS[tag]
    except KeyError:
        raise ConfigError(f"unknown vehicle type {tag!r} in [{section}]") from None
    fields = {f for f in cls.__dataclass_fields__}
    _check_keys(table, fields | _TRAJECTORY_KEYS | {"type"}, section)
    params = {k: float(v) for k, v in table.items() if k in fields}
    try:
        model = cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {tag} in [{section}]: {exc}") from None
    traj = Trajectory(
        speed=float(_require(table, "speed", section)),
        entry_time=float(table.get("entry_time", 0.0)),
    )
    return model, traj


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from a parsed TOML document."""
    _check_keys(doc, {"bridge", "vehicles", "roughness", "traffic", "solver"}, "root")

    bridge_tab = _require(doc, "bridge", "root")
    _check_keys(bridge_tab, _BRIDGE_KEYS, "bridge")
    try:
        bridge = BridgeModel(
            span_length=float(_require(bridge_tab, "span_length", "bridge")),
            support_positions=tuple(
                float(s) for s in _require(bridge_tab, "support_positions", "bridge")
            ),
            elastic_modulus=float(_require(bridge_tab, "elastic_modulus", "bridge")),
            second_moment=float(_require(bridge_tab, "second_moment", "bridge")),
            area=float(bridge_tab.get("area", 2.0)),
            mass_per_length=float(_require(bridge_tab, "mass_per_length", "bridge")),
            damping_ratio=float(bridge_tab.get("damping_ratio", 0.0)),
            num_elements=int(_require(bridge_tab, "num_elements", "bridge")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [bridge] section: {exc}") from None

    vehicle_tabs = doc.get("vehicles", [])
    if not vehicle_tabs:
        raise ConfigError("at least one [[vehicles]] table is required")
    vehicles = tuple(_vehicle_from_table(t, i) for i, t in enumerate(vehicle_tabs))

    rough = None
    if "roughness" in doc:
        tab = doc["roughness"]
        _check_keys(tab, _ROUGHNESS_KEYS, "roughness")
        if ("class" in tab) == ("coefficient" in tab):
            raise ConfigError("[roughness] needs exactly one of 'class' or 'coefficient'")
        rough = RoughnessSpec(
            class_or_coefficient=tab.get("class", tab.get("coefficient")),
            span=bridge.span_length,
            x0=float(_require(tab, "x0", "roughness")),
            x_max=float(_require(tab, "x_max", "roughness")),
            dx=float(tab.get("dx", 0.05)),
            seed=int(_require(tab, "seed", "roughness")),
            smoothing_window=(
                int(tab["smoothing_window"]) if "smoothing_window" in tab else None
            ),
        )

    traffic = None
    if "traffic" in doc:
        tab = doc["traffic"]
        _check_keys(tab, _TRAFFIC_KEYS, "traffic")
        traffic = TrafficSpec(
            n_vehicles=int(_require(tab, "n_vehicles", "traffic")),
            unit_mass=float(tab.get("unit_mass", 2000.0)),
            seed=int(tab.get("seed", 0)),
        )

    solver = _require(doc, "solver", "root")
    _check_keys(solver, _SOLVER_KEYS, "solver")
    return ScenarioConfig(
        bridge=bridge,
        vehicles=vehicles,
        roughness=rough,
        traffic=traffic,
        dt=float(_require(solver, "dt", "solver")),
        t_end=float(_require(solver, "t_end", "solver")),
        mode=str(solver.get("mode", "coupled")),
        tol=float(solver.get("tol", 1e-6)),
        max_iter=int(solver.get("max_iter", 50)),
        seed=int(solver.get("seed", 0)),
        hermitian_interp=bool(solver.get("hermitian_interp", False)),
        gravity=float(solver.get("gravity", 9.81)),
    )


def load_scenario(path) -> ScenarioConfig:
    """Parse a scenario TOML file."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    return scenario_from_dict(doc)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    """Plain-dict form of a scenario, matching the TOML schema."""
    b = cfg.bridge
    doc: dict = {
        "bridge": {
            "span_length": b.span_length,
            "support_positions": list(b.support_positions),
            "elastic_modulus": b.elastic_modulus,
            "second_moment": b.second_moment,
            "area": b.area,
            "mass_per_length": b.mass_per_length,
            "damping_ratio": b.damping_ratio,
            "num_elements": b.num_elements,
        },
        "vehicles": [],
    }
    for model, traj in cfg.vehicles:
        tab = {"type": model.tag}
        tab.update(asdict(model))
        tab["speed"] = traj.speed
        tab["entry_time"] = traj.entry_time
        doc["vehicles"].append(tab)
    if cfg.roughness is not None:
        r = cfg.roughness
        tab = {"x0": r.x0, "x_max": r.x_max, "dx": r.dx, "seed": r.seed}
        if isinstance(r.class_or_coefficient, str):
            tab["class"] = r.class_or_coefficient
        else:
            tab["coefficient"] = r.class_or_coefficient
        if r.smoothing_window is not None:
            tab["smoothing_window"] = r.smoothing_window
        doc["roughness"] = tab
    if cfg.traffic is not None:
        doc["traffic"] = {
            "n_vehicles": cfg.traffic.n_vehicles,
            "unit_mass": cfg.traffic.unit_mass,
            "seed": cfg.traffic.seed,
        }
    doc["solver"] = {
        "dt": cfg.dt,
        "t_end": cfg.t_end,
        "mode": cfg.mode,
        "tol": cfg.tol,
        "max_iter": cfg.max_iter,
        "seed": cfg.seed,
        "hermitian_interp": cfg.hermitian_interp,
        "gravity": cfg.gravity,
    }
    return doc


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(float(value))  # plain repr also for numpy scalars
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize {type(value).__name__} to TOML")


def dump_scenario(cfg: ScenarioConfig) -> str:
    """Emit the scenario as TOML text (round-trips bit-exactly)."""
    doc = scenario_to_dict(cfg)
    lines: list[str] = []
    for section in ("bridge", "roughness", "traffic", "solver"):
        if section not in doc:
            continue
        lines.append(f"[{section}]")
        for k, v in doc[section].items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    for tab in doc["vehicles"]:
        lines.append("[[vehicles]]")
        for k, v in tab.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    return "\n".join(lines)


def config_hash(cfg: ScenarioConfig) -> str:
    """Stable SHA-256 over the canonical JSON form of the scenario."""
    doc = scenario_to_dict(cfg)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
