"""Discretized domains: tensor grids for the unit interval, unit square and unit disk.

Interior nodes carry the exact analytic distance-to-boundary field; boundary
nodes sit on the geometric boundary and carry quadrature weights for surface
integrals.  Strips (level sets of the distance field) and exhaustions
(increasing families of subdomains) are extracted from the same structure.

The disk is realized as the lattice points strictly inside the unit circle.
Each interior node adjacent to the exterior owns exactly one boundary node,
placed at its radial projection onto the circle; this keeps the boundary
coupling matrix orthogonal column-wise, which the trace estimators rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SHAPES = ("interval", "square", "disk")

#: level sets of the distance field are usable between ~2h and half the inradius
MIN_CELLS = 8


@dataclass(frozen=True)
class GridDomain:
    """Immutable discretization of a bounded domain.

    Attributes:
        shape: one of "interval", "square", "disk".
        dim: 1 or 2.
        n_cells: cells per axis (h = axis length / n_cells).
        h: mesh width.
        interior_xy: (n_int, dim) coordinates of interior nodes.
        boundary_xy: (n_bdry, dim) coordinates of boundary nodes (on the boundary).
        delta: (n_int,) exact analytic distance to the boundary, > 0.
        surface_weights: (n_bdry,) quadrature weights; sum approximates the
            boundary measure (2 for the interval, perimeter/circumference in 2D).
        reference_node: interior index of the node nearest the centroid.
        inradius: inradius of the continuum shape.
        interior_edges: (rows, cols) ordered pairs of stencil-adjacent interior nodes.
        boundary_links: (interior_row, boundary_col, multiplicity) stencil edges
            from interior nodes into boundary nodes.
    """

    shape: str
    dim: int
    n_cells: int
    h: float
    interior_xy: np.ndarray
    boundary_xy: np.ndarray
    delta: np.ndarray
    surface_weights: np.ndarray
    reference_node: int
    inradius: float
    interior_edges: tuple[np.ndarray, np.ndarray] = field(repr=False)
    boundary_links: tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False)

    @property
    def n_interior(self) -> int:
        return self.interior_xy.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary_xy.shape[0]

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def usable_beta_range(self) -> tuple[float, float]:
        """Strip levels that the grid can resolve: [2h, inradius/2]."""
        return (2.0 * self.h, 0.5 * self.inradius)

    def coupled_boundary_mask(self) -> np.ndarray:
        """Boundary nodes that appear in at least one stencil link.

        Square corners are geometric boundary nodes with no stencil coupling;
        they carry surface weight but no harmonic mass.
        """
        mask = np.zeros(self.n_boundary, dtype=bool)
        mask[self.boundary_links[1]] = True
        return mask

    def nearest_interior_node(self, point) -> int:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        d2 = np.sum((self.interior_xy - p[None, :]) ** 2, axis=1)
        return int(np.argmin(d2))

    def nearest_boundary_node(self, point) -> int:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        d2 = np.sum((self.boundary_xy - p[None, :]) ** 2, axis=1)
        return int(np.argmin(d2))


@dataclass(frozen=True)
class Strip:
    """Nodes approximating the level set {distance = beta}, with weights."""

    beta: float
    node_indices: np.ndarray
    weights: np.ndarray

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class Subdomain:
    """One level of an exhaustion: node set plus Dirichlet sites.

    ``dirichlet_nodes`` are interior indices when the level stops strictly
    inside the domain; the final level uses the true boundary instead
    (``uses_true_boundary``), which is what lets the family exhaust every
    interior node.
    """

    nodes: np.ndarray
    dirichlet_nodes: np.ndarray
    uses_true_boundary: bool
    beta: float


@dataclass(frozen=True)
class Exhaustion:
    levels: list[Subdomain]

    def __len__(self) -> int:
        return len(self.levels)


def build_domain(shape: str, n_cells: int) -> GridDomain:
    """Build a GridDomain for one of the supported shapes.

    Args:
        shape: "interval" ([0,1]), "square" ([0,1]^2) or "disk" (unit disk).
        n_cells: number of cells per axis; must be >= 8 so strips resolve.
    """
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; expected one of {SHAPES}")
    if n_cells < MIN_CELLS:
        raise ValueError(f"n_cells={n_cells} too coarse; need at least {MIN_CELLS}")
    if shape == "interval":
        return _build_interval(n_cells)
    if shape == "square":
        return _build_square(n_cells)
    return _build_disk(n_cells)


def _build_interval(n: int) -> GridDomain:
    h = 1.0 / n
    x = np.arange(1, n) * h
    interior_xy = x[:, None]
    boundary_xy = np.array([[0.0], [1.0]])
    delta = np.minimum(x, 1.0 - x)

    rows = np.concatenate([np.arange(0, n - 2), np.arange(1, n - 1)])
    cols = np.concatenate([np.arange(1, n - 1), np.arange(0, n - 2)])
    b_rows = np.array([0, n - 2])
    b_cols = np.array([0, 1])
    b_mult = np.array([1, 1])

    ref = int(np.argmin(np.abs(x - 0.5)))
    return GridDomain(
        shape="interval",
        dim=1,
        n_cells=n,
        h=h,
        interior_xy=interior_xy,
        boundary_xy=boundary_xy,
        delta=delta,
        surface_weights=np.array([1.0, 1.0]),
        reference_node=ref,
        inradius=0.5,
        interior_edges=(rows, cols),
        boundary_links=(b_rows, b_cols, b_mult),
    )


def _build_square(n: int) -> GridDomain:
    h = 1.0 / n
    m = n - 1  # interior nodes per axis
    ii, jj = np.meshgrid(np.arange(1, n), np.arange(1, n), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    interior_xy = np.column_stack([ii * h, jj * h])
    delta = np.min(
        np.stack([ii * h, 1.0 - ii * h, jj * h, 1.0 - jj * h]), axis=0
    )

    def idx(i, j):
        return (i - 1) * m + (j - 1)

    rows, cols = [], []
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni, nj = ii + di, jj + dj
        ok = (ni >= 1) & (ni <= m) & (nj >= 1) & (nj <= m)
        rows.append(idx(ii[ok], jj[ok]))
        cols.append(idx(ni[ok], nj[ok]))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)

    # perimeter walk, counterclockwise from the origin corner
    bpos = []
    for k in range(n):
        bpos.append((k, 0))
    for k in range(n):
        bpos.append((n, k))
    for k in range(n):
        bpos.append((n - k, n))
    for k in range(n):
        bpos.append((0, n - k))
    bindex = {p: q for q, p in enumerate(bpos)}
    boundary_xy = np.array([[i * h, j * h] for i, j in bpos])

    b_rows, b_cols = [], []
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni, nj = ii + di, jj + dj
        out = (ni < 1) | (ni > m) | (nj < 1) | (nj > m)
        for i, j, bi, bj in zip(ii[out], jj[out], ni[out], nj[out]):
            b_rows.append(idx(i, j))
            b_cols.append(bindex[(bi, bj)])
    b_rows = np.asarray(b_rows, dtype=int)
    b_cols = np.asarray(b_cols, dtype=int)
    b_mult = np.ones(len(b_rows), dtype=int)

    centroid = np.array([0.5, 0.5])
    ref = int(np.argmin(np.sum((interior_xy - centroid) ** 2, axis=1)))
    return GridDomain(
        shape="square",
        dim=2,
        n_cells=n,
        h=h,
        interior_xy=interior_xy,
        boundary_xy=boundary_xy,
        delta=delta,
        surface_weights=np.full(len(bpos), h),
        reference_node=ref,
        inradius=0.5,
        interior_edges=(rows, cols),
        boundary_links=(b_rows, b_cols, b_mult),
    )


def _build_disk(n: int) -> GridDomain:
    h = 2.0 / n
    k = np.arange(0, n + 1)
    coords = (2.0 * k - n) / n  # exact 1.0 endpoints
    X, Y = np.meshgrid(coords, coords, indexing="ij")
    # mesh-quality cut: lattice points closer than h/2 to the circle are
    # absorbed into the boundary, keeping dist^-2 potentials assemblable
    inside = X**2 + Y**2 < (1.0 - 0.5 * h) ** 2

    lattice_index = -np.ones((n + 1, n + 1), dtype=int)
    pts_i, pts_j = np.nonzero(inside)
    lattice_index[pts_i, pts_j] = np.arange(len(pts_i))
    interior_xy = np.column_stack([coords[pts_i], coords[pts_j]])
    delta = 1.0 - np.sqrt(np.sum(interior_xy**2, axis=1))

    rows, cols = [], []
    exterior_count = np.zeros(len(pts_i), dtype=int)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni, nj = pts_i + di, pts_j + dj
        valid = (ni >= 0) & (ni <= n) & (nj >= 0) & (nj <= n)
        neighbor = np.full(len(pts_i), -1, dtype=int)
        neighbor[valid] = lattice_index[ni[valid], nj[valid]]
        is_int = neighbor >= 0
        rows.append(np.nonzero(is_int)[0])
        cols.append(neighbor[is_int])
        exterior_count += ~is_int
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)

    first_layer = np.nonzero(exterior_count > 0)[0]
    proj = interior_xy[first_layer]
    radii = np.sqrt(np.sum(proj**2, axis=1))
    boundary_xy = proj / radii[:, None]
    angles = np.arctan2(boundary_xy[:, 1], boundary_xy[:, 0])
    order = np.argsort(angles, kind="stable")
    boundary_xy = boundary_xy[order]
    angles = angles[order]

    b_cols = np.empty(len(first_layer), dtype=int)
    b_cols[order] = np.arange(len(first_layer))
    b_rows = first_layer
    b_mult = exterior_count[first_layer]

    # angular shares: half the gap to each circular neighbor
    gaps = np.diff(angles, append=angles[0] + 2.0 * np.pi)
    prev_gaps = np.roll(gaps, 1)
    surface_weights = 0.5 * (gaps + prev_gaps)

    ref = int(np.argmin(np.sum(interior_xy**2, axis=1)))
    return GridDomain(
        shape="disk",
        dim=2,
        n_cells=n,
        h=h,
        interior_xy=interior_xy,
        boundary_xy=boundary_xy,
        delta=delta,
        surface_weights=surface_weights,
        reference_node=ref,
        inradius=1.0,
        interior_edges=(rows, cols),
        boundary_links=(b_rows, b_cols, b_mult),
    )


def extract_strip(domain: GridDomain, beta: float) -> Strip:
    """Nodes within h/2 of the distance level beta, weighted to approximate
    the surface measure of the level set.

    Requires h <= beta <= inradius/2; an empty strip is an error.
    """
    if not (domain.h <= beta <= 0.5 * domain.inradius):
        raise ValueError(
            f"beta={beta:g} outside usable range [{domain.h:g}, {0.5 * domain.inradius:g}]"
        )
    half = 0.5 * domain.h
    sel = (domain.delta >= beta - half) & (domain.delta < beta + half)
    idx = np.nonzero(sel)[0]
    if idx.size == 0:
        raise ValueError(f"strip at beta={beta:g} is empty")
    weights = np.full(idx.size, domain.h ** (domain.dim - 1))
    return Strip(beta=float(beta), node_indices=idx, weights=weights)


def default_strip_levels(domain: GridDomain, count: int = 8) -> np.ndarray:
    """Geometric sequence of usable strip levels, ascending."""
    lo, hi = domain.usable_beta_range()
    hi = 0.5 * hi  # keep strips well inside the usable band
    if hi <= lo:
        hi = 2.0 * lo
    return np.geomspace(lo, hi, count)


def build_exhaustion(domain: GridDomain, levels: int) -> Exhaustion:
    """Increasing subdomains D_j = {distance > beta_j} with beta_j decreasing
    geometrically; the final level is the full interior with Dirichlet sites
    on the true boundary.

    Requires levels >= 2; raises if any level is empty or the family fails
    to grow strictly.
    """
    if levels < 2:
        raise ValueError("an exhaustion needs at least 2 levels")
    beta_hi = 0.5 * domain.inradius
    beta_lo = max(2.0 * domain.h, 1e-12)
    n_strict = levels - 1
    if n_strict == 1:
        betas = np.array([beta_hi])
    else:
        betas = np.geomspace(beta_hi, beta_lo, n_strict)

    adjacency_rows, adjacency_cols = domain.interior_edges
    subdomains: list[Subdomain] = []
    prev_size = 0
    for beta in betas:
        inside = domain.delta > beta
        nodes = np.nonzero(inside)[0]
        if nodes.size == 0:
            raise ValueError(f"exhaustion level at beta={beta:g} is empty")
        if nodes.size <= prev_size:
            continue  # level set did not grow at this resolution; skip it
        touches = inside[adjacency_rows] & ~inside[adjacency_cols]
        dirichlet = np.unique(adjacency_cols[touches])
        subdomains.append(
            Subdomain(
                nodes=nodes,
                dirichlet_nodes=dirichlet,
                uses_true_boundary=False,
                beta=float(beta),
            )
        )
        prev_size = nodes.size

    if prev_size >= domain.n_interior:
        raise ValueError("strict exhaustion levels already cover the interior")
    subdomains.append(
        Subdomain(
            nodes=np.arange(domain.n_interior),
            dirichlet_nodes=np.arange(domain.n_boundary),
            uses_true_boundary=True,
            beta=0.0,
        )
    )
    if domain.delta[domain.reference_node] <= betas[0]:
        raise ValueError("reference node fell outside the first exhaustion level")
    return Exhaustion(levels=subdomains)
