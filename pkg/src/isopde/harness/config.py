"""
Experiment configuration: TOML text in, validated :class:`ExperimentConfig` out.

Minimal example (flat cylinder, affine nonlinearity)::

    name = "affine"
    scenario = "AffineSymmetry"
    seed = 0
    c1 = 0.0
    c2 = 1.0
    n_r = [15, 31, 63]
    n_f = [16, 32, 64]

    [geometry]
    dim_m = 2
    r1 = 0.0
    r2 = 1.0
    sigma = {kind = "constant", value = 1.0}
    phi = {kind = "constant", value = 0.0}
    fiber = {kind = "circle", lengths = [6.283185307179586]}

    [nonlinearity]
    kind = "affine"
    slope = -1.0
    intercept = 1.0

Scenario-specific knobs go in an optional ``[params]`` table.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from ..errors import ConfigError, IsopdeError
from ..functions import from_spec
from ..geometry import Coupling, FiberSpec, WarpedGeometry
from ..nlsolve import Nonlinearity, nonlinearity_from_spec

SCENARIOS = (
    "AffineSymmetry",
    "ConcaveSymmetry",
    "UniquenessMultistart",
    "ThresholdSharpness",
    "CommutationSuite",
    "GaussianSlab",
    "RefinementStudy",
    "InfiniteAnnulusDiag",
)

# scenarios that solve the two-boundary problem and need c1, c2 and f
SOLVING = {"AffineSymmetry", "ConcaveSymmetry", "UniquenessMultistart", "GaussianSlab", "RefinementStudy"}
NEEDS_GRIDS = SOLVING | {"CommutationSuite"}


@dataclass
class ExperimentConfig:
    name: str
    scenario: str
    geometry: WarpedGeometry
    n_r: list
    n_f: list
    nonlinearity: Nonlinearity | None = None
    c1: float | None = None
    c2: float | None = None
    seed: int = 0
    tol: float = 1e-10
    params: dict = field(default_factory=dict)
    out_dir: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def grids(self) -> list:
        return list(zip(self.n_r, self.n_f))

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def parse_geometry(spec: dict, errors: list) -> WarpedGeometry | None:
    missing = [k for k in ("r1", "r2") if k not in spec]
    if missing:
        errors.append(f"geometry: missing field(s) {missing}")
        return None
    try:
        fiber_spec = dict(spec.get("fiber", {"kind": "point"}))
        kind = fiber_spec.get("kind", "point")
        gamma = tuple(from_spec(g) for g in fiber_spec.get("gamma", []))
        lengths = fiber_spec.get("lengths", [2 * math.pi] if kind == "circle" else [])
        fiber = FiberSpec(kind, tuple(lengths), gamma)
        coupling = None
        if "coupling" in spec:
            c = spec["coupling"]
            coupling = Coupling(from_spec(c["radial"]), from_spec(c["angular"]))
        return WarpedGeometry(
            int(spec.get("dim_m", 2)),
            float(spec["r1"]),
            float(spec["r2"]),
            from_spec(spec.get("sigma", {"kind": "constant", "value": 1.0})),
            from_spec(spec.get("phi", {"kind": "constant", "value": 0.0})),
            fiber,
            coupling,
        )
    except ConfigError as exc:
        errors.extend(f"geometry: {m}" for m in exc.messages)
    except (IsopdeError, KeyError, TypeError, ValueError) as exc:
        errors.append(f"geometry: {exc}")
    return None


def _as_list(value, name, errors):
    if value is None:
        return None
    if isinstance(value, int):
        return [value]
    if not isinstance(value, list) or not all(isinstance(v, int) for v in value):
        errors.append(f"{name} must be an integer or a list of integers")
        return None
    return value


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    """Validate a parsed config; collects every violation before raising."""
    errors: list[str] = []
    scenario = data.get("scenario")
    if scenario not in SCENARIOS:
        errors.append(f"scenario must be one of {list(SCENARIOS)}, got {scenario!r}")
    name = data.get("name")
    if not isinstance(name, str) or not name:
        errors.append("name: missing or empty")

    geom = None
    if "geometry" not in data:
        errors.append("geometry: missing table")
    else:
        geom = parse_geometry(data["geometry"], errors)

    n_r = _as_list(data.get("n_r"), "n_r", errors)
    n_f = _as_list(data.get("n_f"), "n_f", errors)
    if scenario in NEEDS_GRIDS and n_r is None:
        errors.append("n_r: missing grid sizes")
    if n_r is not None:
        if any(b <= a for a, b in zip(n_r, n_r[1:])):
            errors.append(f"n_r: grid sizes {n_r} are not increasing")
        if n_f is None:
            n_f = [1] * len(n_r)
        elif len(n_f) == 1:
            n_f = n_f * len(n_r)
        if len(n_f) != len(n_r):
            errors.append("n_f: needs one entry per n_r entry (or a single value)")
        elif any(b < a for a, b in zip(n_f, n_f[1:])):
            errors.append(f"n_f: grid sizes {n_f} are decreasing")
    n_r = n_r or []
    n_f = n_f or []

    f = None
    if scenario in SOLVING:
        for key in ("c1", "c2"):
            if key not in data:
                errors.append(f"{key}: missing boundary value for two-boundary scenario {scenario}")
            elif not isinstance(data[key], (int, float)):
                errors.append(f"{key}: must be a number")
        if "nonlinearity" not in data:
            errors.append("nonlinearity: missing table")
        else:
            spec = dict(data["nonlinearity"])
            try:
                f = nonlinearity_from_spec(spec)
                problems = f.check()
                errors.extend(f"nonlinearity: {p}" for p in problems if "disagrees" in p)
            except ConfigError as exc:
                errors.extend(exc.messages)

    params = data.get("params", {})
    if not isinstance(params, dict):
        errors.append("params: must be a table")
        params = {}
    if scenario in ("UniquenessMultistart", "ConcaveSymmetry", "GaussianSlab"):
        starts = params.get("starts", 5)
        if not isinstance(starts, int) or starts < 1:
            errors.append("params.starts must be a positive integer")
    if scenario == "InfiniteAnnulusDiag":
        r_max = params.get("r_max")
        if not isinstance(r_max, (int, float, list)):
            errors.append("params.r_max: missing (number or list of numbers)")
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        errors.append("seed must be an integer")
    tol = data.get("tol", 1e-10)
    if not isinstance(tol, (int, float)) or tol <= 0:
        errors.append("tol must be a positive number")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        name=name,
        scenario=scenario,
        geometry=geom,
        n_r=n_r,
        n_f=n_f,
        nonlinearity=f,
        c1=float(data["c1"]) if "c1" in data else None,
        c2=float(data["c2"]) if "c2" in data else None,
        seed=seed,
        tol=float(tol),
        params=params,
        out_dir=data.get("output", {}).get("dir"),
        raw=data,
    )


def validate_config(raw_text: str) -> ExperimentConfig:
    """Parse TOML text and validate it."""
    try:
        data = tomllib.loads(raw_text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}") from exc
    return config_from_dict(data)
