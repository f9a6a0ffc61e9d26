"""Boundary-singular potentials gamma / dist(x, E)^2 and their admissibility.

Admissibility has two parts.  The growth bound (finite a_bar with
|V| <= a_bar / delta^2) is read off the assembled values.  The quadratic-form
inequality (Dirichlet energy dominates the V-weighted mass form) is tested as
a symmetric eigenvalue problem on the stencil matrix: the form inequality
holds exactly when the smallest eigenvalue of (-Laplacian - V) is nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import GridDomain


@dataclass(frozen=True)
class Potential:
    """Nodal potential values with singular-set bookkeeping.

    a_bar is the smallest constant with |V| <= a_bar / delta^2, computed
    exactly as max |V| * delta^2 over interior nodes.
    """

    values: np.ndarray
    gamma: float
    singular_set: np.ndarray  # boundary node indices
    a_bar: float

    @classmethod
    def zero(cls, domain: GridDomain) -> "Potential":
        return cls(
            values=np.zeros(domain.n_interior),
            gamma=0.0,
            singular_set=np.arange(domain.n_boundary),
            a_bar=0.0,
        )

    @classmethod
    def from_values(cls, domain: GridDomain, values: np.ndarray) -> "Potential":
        values = np.asarray(values, dtype=float)
        a_bar = float(np.max(np.abs(values) * domain.delta**2)) if values.size else 0.0
        return cls(values=values, gamma=float("nan"), singular_set=np.array([], dtype=int), a_bar=a_bar)


@dataclass(frozen=True)
class FormCheck:
    """Outcome of the quadratic-form admissibility test."""

    satisfied: bool
    margin: float  # smallest eigenvalue of the form difference
    converged: bool


def singular_distance(domain: GridDomain, singular_set: np.ndarray) -> np.ndarray:
    """Distance from each interior node to the singular boundary set E.

    When E is the whole boundary this is the analytic distance field itself,
    so the bound constant comes out as exactly |gamma|.
    """
    singular_set = np.asarray(singular_set, dtype=int)
    if singular_set.size == domain.n_boundary:
        return domain.delta.copy()
    pts = domain.boundary_xy[singular_set]
    diffs = domain.interior_xy[:, None, :] - pts[None, :, :]
    return np.min(np.sqrt(np.sum(diffs**2, axis=2)), axis=1)


def build_hardy_potential(
    domain: GridDomain, gamma: float, singular_set=None
) -> Potential:
    """Assemble V = gamma / dist(x, E)^2 for a boundary subset E.

    Args:
        domain: grid domain.
        gamma: strength coefficient; positive gamma is the attracting case.
        singular_set: boundary node indices; None or "all" means the whole boundary.
    """
    if singular_set is None or (
        isinstance(singular_set, str) and singular_set == "all"
    ):
        singular_set = np.arange(domain.n_boundary)
    singular_set = np.asarray(singular_set, dtype=int)
    if singular_set.size == 0:
        raise ValueError("singular set E must be nonempty")
    if singular_set.min() < 0 or singular_set.max() >= domain.n_boundary:
        raise ValueError("singular set contains invalid boundary indices")
    dist = singular_distance(domain, singular_set)
    values = gamma / dist**2
    a_bar = float(np.max(np.abs(values) * domain.delta**2)) if values.size else 0.0
    return Potential(
        values=values, gamma=float(gamma), singular_set=singular_set, a_bar=a_bar
    )


def stiffness_matrix(domain: GridDomain, potential: Potential) -> sp.csc_matrix:
    """Interior stencil matrix of (-Laplacian - V) with Dirichlet condition.

    Off-diagonal entries are -1/h^2 per stencil edge; the diagonal is
    2*dim/h^2 - V.  Symmetric; an M-matrix whenever it is positive definite.
    """
    n = domain.n_interior
    inv_h2 = 1.0 / domain.h**2
    rows, cols = domain.interior_edges
    data = np.full(rows.shape[0], -inv_h2)
    diag = np.full(n, 2.0 * domain.dim * inv_h2) - potential.values
    A = sp.coo_matrix(
        (np.concatenate([data, diag]), (np.concatenate([rows, np.arange(n)]),
                                        np.concatenate([cols, np.arange(n)]))),
        shape=(n, n),
    )
    return A.tocsc()


def smallest_form_eigenvalue(
    domain: GridDomain, potential: Potential, dense_cutoff: int = 2500
) -> tuple[float, bool]:
    """Smallest eigenvalue of the form difference (Dirichlet energy - V mass).

    Uses a dense symmetric eigensolve on small grids, Lanczos (smallest
    algebraic) otherwise.  Returns (eigenvalue, converged).
    """
    A = stiffness_matrix(domain, potential)
    n = A.shape[0]
    if n <= dense_cutoff:
        w = np.linalg.eigvalsh(A.toarray())
        return float(w[0]), True
    try:
        w = spla.eigsh(A, k=1, which="SA", return_eigenvectors=False, maxiter=5000)
        return float(w[0]), True
    except spla.ArpackNoConvergence as exc:
        partial = exc.eigenvalues
        if partial is not None and len(partial):
            return float(partial[0]), False
        return float("nan"), False


def check_form_inequality(domain: GridDomain, potential: Potential) -> FormCheck:
    """Test whether the Dirichlet form dominates the V-weighted mass form.

    Satisfied exactly when the smallest eigenvalue (the margin) is >= 0.
    A non-converged eigensolve is reported, never silently passed.
    """
    margin, converged = smallest_form_eigenvalue(domain, potential)
    if not converged:
        raise RuntimeError(
            "eigensolver did not converge while testing the form inequality"
        )
    return FormCheck(satisfied=bool(margin >= 0.0), margin=margin, converged=converged)


def estimate_hardy_constant(
    domain: GridDomain,
    singular_set=None,
    rel_tol: float = 1e-3,
    gamma_cap: float = 64.0,
) -> float:
    """Largest gamma for which gamma / dist(.,E)^2 passes the form inequality.

    Bisection between a passing and a failing strength; gamma = 0 always
    passes.  If no failing strength is found below gamma_cap, the cap is
    returned (the singular set is too thin for the grid to see).
    """
    def passes(g: float) -> bool:
        pot = build_hardy_potential(domain, g, singular_set)
        return check_form_inequality(domain, pot).satisfied

    lo = 0.0
    hi = 0.25
    while passes(hi):
        lo = hi
        hi *= 2.0
        if hi > gamma_cap:
            return gamma_cap
    while (hi - lo) > rel_tol * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo
