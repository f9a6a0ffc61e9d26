"""Signed measures on the grid: interior measures as density plus atoms,
boundary measures as per-node masses.

The grid proxy for the diffuse/concentrated dichotomy: the density component
is the diffuse part (vanishing on null sets in the continuum), atoms are the
concentrated part.  Every report that leans on this proxy says so.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CAPACITY_PROXY_NOTE = (
    "grid capacity proxy: diffuse = density component, concentrated = atoms"
)


def _atoms_as_dict(atoms) -> dict[int, float]:
    out: dict[int, float] = {}
    for idx, mass in atoms:
        idx = int(idx)
        out[idx] = out.get(idx, 0.0) + float(mass)
    return {k: v for k, v in sorted(out.items()) if v != 0.0}


@dataclass(frozen=True)
class InteriorMeasure:
    """Measure on interior nodes: signed nodal density plus point atoms."""

    density: np.ndarray
    atoms: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "density", np.asarray(self.density, dtype=float))
        object.__setattr__(self, "atoms", _atoms_as_dict(self.atoms.items()))

    @classmethod
    def zero(cls, n: int) -> "InteriorMeasure":
        return cls(density=np.zeros(n))

    @classmethod
    def from_atoms(cls, n: int, atoms) -> "InteriorMeasure":
        return cls(density=np.zeros(n), atoms=_atoms_as_dict(atoms))

    @property
    def n_nodes(self) -> int:
        return self.density.shape[0]

    def atom_vector(self) -> np.ndarray:
        v = np.zeros(self.n_nodes)
        for idx, mass in self.atoms.items():
            v[idx] = mass
        return v

    def __add__(self, other: "InteriorMeasure") -> "InteriorMeasure":
        _check_same_size(self, other)
        merged = dict(self.atoms)
        for idx, mass in other.atoms.items():
            merged[idx] = merged.get(idx, 0.0) + mass
        return InteriorMeasure(self.density + other.density, merged)

    def __sub__(self, other: "InteriorMeasure") -> "InteriorMeasure":
        return self + (-1.0) * other

    def __mul__(self, scalar: float) -> "InteriorMeasure":
        s = float(scalar)
        return InteriorMeasure(
            self.density * s, {k: v * s for k, v in self.atoms.items()}
        )

    __rmul__ = __mul__

    def __neg__(self) -> "InteriorMeasure":
        return self * (-1.0)


@dataclass(frozen=True)
class BoundaryMeasure:
    """Finite signed measure on boundary nodes: one mass per node."""

    masses: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "masses", np.asarray(self.masses, dtype=float))

    @classmethod
    def zero(cls, n: int) -> "BoundaryMeasure":
        return cls(masses=np.zeros(n))

    @classmethod
    def from_atoms(cls, n: int, atoms) -> "BoundaryMeasure":
        masses = np.zeros(n)
        for idx, mass in atoms:
            masses[int(idx)] += float(mass)
        return cls(masses=masses)

    @property
    def n_nodes(self) -> int:
        return self.masses.shape[0]

    def total_variation(self) -> float:
        return float(np.sum(np.abs(self.masses)))

    def __add__(self, other: "BoundaryMeasure") -> "BoundaryMeasure":
        _check_same_size(self, other)
        return BoundaryMeasure(self.masses + other.masses)

    def __sub__(self, other: "BoundaryMeasure") -> "BoundaryMeasure":
        return BoundaryMeasure(self.masses - other.masses)

    def __mul__(self, scalar: float) -> "BoundaryMeasure":
        return BoundaryMeasure(self.masses * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "BoundaryMeasure":
        return BoundaryMeasure(-self.masses)


@dataclass(frozen=True)
class MeasureCouple:
    """Interior and boundary data for one boundary value problem."""

    tau: InteriorMeasure
    nu: BoundaryMeasure

    def __add__(self, other: "MeasureCouple") -> "MeasureCouple":
        return MeasureCouple(self.tau + other.tau, self.nu + other.nu)

    def __mul__(self, scalar: float) -> "MeasureCouple":
        return MeasureCouple(self.tau * scalar, self.nu * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "MeasureCouple":
        return MeasureCouple(-self.tau, -self.nu)


def _check_same_size(a, b):
    if a.n_nodes != b.n_nodes:
        raise ValueError(
            f"measures live on different grids ({a.n_nodes} vs {b.n_nodes} nodes)"
        )


def jordan_split(m):
    """Nodewise positive/negative parts; m = plus - minus with disjoint support."""
    if isinstance(m, BoundaryMeasure):
        return (
            BoundaryMeasure(np.maximum(m.masses, 0.0)),
            BoundaryMeasure(np.maximum(-m.masses, 0.0)),
        )
    plus = InteriorMeasure(
        np.maximum(m.density, 0.0), {k: v for k, v in m.atoms.items() if v > 0}
    )
    minus = InteriorMeasure(
        np.maximum(-m.density, 0.0), {k: -v for k, v in m.atoms.items() if v < 0}
    )
    return plus, minus


def positive_part(m):
    return jordan_split(m)[0]


def negative_part(m):
    return jordan_split(m)[1]


def couple_jordan_split(c: MeasureCouple) -> tuple[MeasureCouple, MeasureCouple]:
    tp, tm = jordan_split(c.tau)
    np_, nm = jordan_split(c.nu)
    return MeasureCouple(tp, np_), MeasureCouple(tm, nm)


def diffuse_concentrated_split(
    m: InteriorMeasure,
) -> tuple[InteriorMeasure, InteriorMeasure]:
    """Split into diffuse (density) and concentrated (atoms) components.

    This is the declared grid proxy for the capacity-based decomposition;
    see CAPACITY_PROXY_NOTE.
    """
    diffuse = InteriorMeasure(m.density.copy())
    concentrated = InteriorMeasure(np.zeros(m.n_nodes), dict(m.atoms))
    return diffuse, concentrated


def measure_leq(a, b, tol: float = 0.0) -> bool:
    """Nodewise a <= b, densities and atoms compared componentwise."""
    if isinstance(a, BoundaryMeasure) != isinstance(b, BoundaryMeasure):
        raise TypeError("cannot compare interior and boundary measures")
    _check_same_size(a, b)
    if isinstance(a, BoundaryMeasure):
        return bool(np.all(a.masses <= b.masses + tol))
    if not np.all(a.density <= b.density + tol):
        return False
    keys = set(a.atoms) | set(b.atoms)
    return all(a.atoms.get(k, 0.0) <= b.atoms.get(k, 0.0) + tol for k in keys)


def couple_leq(a: MeasureCouple, b: MeasureCouple, tol: float = 0.0) -> bool:
    """Partial order on couples: interior and boundary components both <=."""
    return measure_leq(a.tau, b.tau, tol) and measure_leq(a.nu, b.nu, tol)


def restrict(nu: BoundaryMeasure, node_subset) -> BoundaryMeasure:
    """Restriction of a boundary measure to a subset of boundary nodes."""
    subset = np.asarray(node_subset, dtype=int)
    if subset.size and (subset.min() < 0 or subset.max() >= nu.n_nodes):
        raise ValueError("subset contains indices outside the boundary")
    masses = np.zeros(nu.n_nodes)
    masses[subset] = nu.masses[subset]
    return BoundaryMeasure(masses)


def interior_norm(m: InteriorMeasure, weight: np.ndarray, cell_volume: float) -> float:
    """Weighted norm sum |density| * weight * h^dim + sum |atom| * weight(node)."""
    total = float(np.sum(np.abs(m.density) * weight) * cell_volume)
    for idx, mass in m.atoms.items():
        total += abs(mass) * float(weight[idx])
    return total


def interior_pairing(
    m: InteriorMeasure, values: np.ndarray, cell_volume: float
) -> float:
    """Integral of a nodal field against the measure."""
    total = float(np.sum(m.density * values) * cell_volume)
    for idx, mass in m.atoms.items():
        total += mass * float(values[idx])
    return total
