"""Experiment configuration: a single TOML file describing domain, potential,
nonlinearity, data measures, truncation schedule, tolerances and checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .grid import SHAPES, GridDomain
from .measures import BoundaryMeasure, InteriorMeasure
from .semilinear import NONLINEARITY_KINDS


class ConfigError(ValueError):
    """Malformed experiment configuration."""


DEFAULT_TOLERANCES = {
    "solve": 1e-9,
    "ladder": 1e-11,
    "trace_rtol": 1e-4,
    "decay_threshold": 0.3,
    "check": 1e-6,
    "eigen": 1e-10,
}


@dataclass
class ExperimentConfig:
    shape: str
    n_cells: int
    gamma: float
    singular_set_spec: object  # "all" | list of indices | list of arcs/points
    nonlinearity_kind: str
    nonlinearity_params: dict
    tau_terms: list
    nu_terms: list
    truncation_base: float
    truncation_ratio: float
    truncation_levels: int
    tolerances: dict
    checks: list[str]
    seed: int
    output_dir: str
    exhaustion_levels: int = 8
    raw: dict = field(default_factory=dict)


def parse_config(path: str) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    domain = raw.get("domain", {})
    shape = domain.get("shape", "interval")
    if shape not in SHAPES:
        raise ConfigError(f"domain.shape must be one of {SHAPES}, got {shape!r}")
    n_cells = int(domain.get("n_cells", 64))
    if n_cells < 8:
        raise ConfigError("domain.n_cells must be at least 8")

    potential = raw.get("potential", {})
    gamma = float(potential.get("gamma", 0.0))
    singular = potential.get("singular_set", "all")

    nl = raw.get("nonlinearity", {"kind": "zero"})
    kind = nl.get("kind", "zero")
    if kind not in NONLINEARITY_KINDS:
        raise ConfigError(
            f"nonlinearity.kind must be one of {sorted(NONLINEARITY_KINDS)}"
        )
    params = {k: v for k, v in nl.items() if k != "kind"}

    data = raw.get("data", {})
    tau_terms = data.get("tau", {}).get("terms", [])
    nu_terms = data.get("nu", {}).get("terms", [])

    trunc = raw.get("truncation", {})
    base = float(trunc.get("base", 1.0))
    ratio = float(trunc.get("ratio", 2.0))
    levels = int(trunc.get("levels", 16))
    if base <= 0 or ratio <= 1.0 or levels < 1:
        raise ConfigError("truncation schedule must be positive and strictly increasing")

    tols = dict(DEFAULT_TOLERANCES)
    for key, value in raw.get("tolerances", {}).items():
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown tolerance {key!r}")
        value = float(value)
        if value <= 0:
            raise ConfigError(f"tolerance {key!r} must be positive, got {value:g}")
        tols[key] = value

    run = raw.get("run", {})
    checks = list(run.get("checks", []))
    seed = int(run.get("seed", 0))
    output_dir = str(run.get("output_dir", "out"))
    exhaustion_levels = int(run.get("exhaustion_levels", 8))

    return ExperimentConfig(
        shape=shape,
        n_cells=n_cells,
        gamma=gamma,
        singular_set_spec=singular,
        nonlinearity_kind=kind,
        nonlinearity_params=params,
        tau_terms=tau_terms,
        nu_terms=nu_terms,
        truncation_base=base,
        truncation_ratio=ratio,
        truncation_levels=levels,
        tolerances=tols,
        checks=checks,
        seed=seed,
        output_dir=output_dir,
        exhaustion_levels=exhaustion_levels,
        raw=raw,
    )


_EXPR_NAMES = {
    "pi": math.pi,
    "e": math.e,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "where": np.where,
}


def _eval_density(expr: str, domain: GridDomain) -> np.ndarray:
    names = dict(_EXPR_NAMES)
    names["x"] = domain.interior_xy[:, 0]
    if domain.dim == 2:
        names["y"] = domain.interior_xy[:, 1]
    names["delta"] = domain.delta
    try:
        values = eval(expr, {"__builtins__": {}}, names)  # config-owned expression
    except Exception as exc:
        raise ConfigError(f"bad density expression {expr!r}: {exc}") from exc
    return np.broadcast_to(np.asarray(values, dtype=float), (domain.n_interior,)).copy()


def resolve_singular_set(spec, domain: GridDomain) -> np.ndarray:
    """Boundary node indices for a singular-set description.

    Accepts "all", explicit indices, points (nearest boundary node each), or
    angular arcs [theta0, theta1] for the disk.
    """
    if spec is None or spec == "all":
        return np.arange(domain.n_boundary)
    if isinstance(spec, dict):
        if "indices" in spec:
            return np.asarray(spec["indices"], dtype=int)
        if "points" in spec:
            return np.array(
                sorted({domain.nearest_boundary_node(p) for p in spec["points"]}),
                dtype=int,
            )
        if "arcs" in spec:
            if domain.shape != "disk":
                raise ConfigError("angular arcs only make sense on the disk")
            angles = np.arctan2(domain.boundary_xy[:, 1], domain.boundary_xy[:, 0])
            mask = np.zeros(domain.n_boundary, dtype=bool)
            for lo, hi in spec["arcs"]:
                mask |= (angles >= lo) & (angles <= hi)
            return np.nonzero(mask)[0]
        raise ConfigError("singular_set table needs indices, points or arcs")
    return np.asarray(spec, dtype=int)


def _atom_node(spec, domain: GridDomain, n_nodes: int, where: str) -> int:
    if "node" in spec:
        node = int(spec["node"])
        if not 0 <= node < n_nodes:
            raise ConfigError(f"{where} atom node {node} outside the domain")
        return node
    return (
        domain.nearest_interior_node(spec["point"])
        if where == "interior"
        else domain.nearest_boundary_node(spec["point"])
    )


def build_interior_measure(terms, domain: GridDomain) -> InteriorMeasure:
    density = np.zeros(domain.n_interior)
    atoms: list[tuple[int, float]] = []
    for term in terms:
        if "uniform" in term:
            density += float(term["uniform"])
        elif "density" in term:
            density += _eval_density(term["density"], domain)
        elif "atom" in term:
            node = _atom_node(term["atom"], domain, domain.n_interior, "interior")
            atoms.append((node, float(term["atom"]["mass"])))
        else:
            raise ConfigError(f"unknown interior measure term {term!r}")
    return InteriorMeasure(density, dict()) + InteriorMeasure.from_atoms(
        domain.n_interior, atoms
    )


def build_boundary_measure(terms, domain: GridDomain) -> BoundaryMeasure:
    masses = np.zeros(domain.n_boundary)
    for term in terms:
        if "uniform" in term:
            masses += float(term["uniform"]) * domain.surface_weights
        elif "atom" in term:
            node = _atom_node(term["atom"], domain, domain.n_boundary, "boundary")
            masses[node] += float(term["atom"]["mass"])
        else:
            raise ConfigError(f"unknown boundary measure term {term!r}")
    return BoundaryMeasure(masses)
