"""Monotone nonlinearities and the semilinear solver.

The solver works on the integral form of the problem: a damped fixed point
u <- (1-theta) u + theta (w - G[f(u)]) with w the linear solution of the
data.  For monotone f the underlying flow contracts in the operator energy
norm, so a small enough damping always converges; theta is halved whenever
the residual increases.  Divergence (the grid signature of bad data) is a
reported outcome, not an exception.

The exhaustion solver rebuilds the solution as the limit of truncated
problems on growing subdomains with Dirichlet data taken from a
supersolution, and serves as an independent cross-check of the fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Exhaustion
from .measures import BoundaryMeasure, InteriorMeasure, MeasureCouple
from .spectral import Workspace


@dataclass(frozen=True)
class Nonlinearity:
    """Continuous nondecreasing function with f(0) = 0."""

    fn: callable = field(repr=False)
    name: str = "f"
    monotone: bool = True
    truncation_level: float | None = None
    vanishes_on_nonpositive: bool = False

    def __call__(self, t):
        return self.fn(np.asarray(t, dtype=float))

    def reflected(self) -> "Nonlinearity":
        """The mirror nonlinearity t -> -f(-t); an involution."""
        inner = self.fn
        return Nonlinearity(
            fn=lambda t: -inner(-np.asarray(t, dtype=float)),
            name=f"reflect({self.name})",
            monotone=self.monotone,
            truncation_level=self.truncation_level,
            vanishes_on_nonpositive=False,
        )

    def clamped(self, level: float) -> "Nonlinearity":
        """Symmetric truncation at +-level; bounded, still nondecreasing."""
        if level <= 0:
            raise ValueError("truncation level must be positive")
        inner = self.fn
        return Nonlinearity(
            fn=lambda t: np.clip(inner(np.asarray(t, dtype=float)), -level, level),
            name=f"{self.name}|{level:g}",
            monotone=self.monotone,
            truncation_level=float(level),
            vanishes_on_nonpositive=self.vanishes_on_nonpositive,
        )

    def validate(self, span: float = 10.0, samples: int = 401) -> bool:
        """Sampled check of monotonicity and the zero fixed point."""
        t = np.linspace(-span, span, samples)
        vals = self(t)
        zero_ok = abs(float(self(0.0))) < 1e-12
        return bool(zero_ok and np.all(np.diff(vals) >= -1e-12))


def reflect(f: Nonlinearity) -> Nonlinearity:
    return f.reflected()


def truncate(f: Nonlinearity, level: float) -> Nonlinearity:
    return f.clamped(level)


def zero_nonlinearity() -> Nonlinearity:
    return Nonlinearity(fn=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                        name="zero", vanishes_on_nonpositive=True)


def linear_nonlinearity(slope: float = 1.0) -> Nonlinearity:
    return Nonlinearity(fn=lambda t: slope * np.asarray(t, dtype=float),
                        name=f"linear({slope:g})")


def power_nonlinearity(p: float) -> Nonlinearity:
    """Odd power |t|^(p-1) t."""
    if p < 1:
        raise ValueError("power exponent must be >= 1")
    return Nonlinearity(
        fn=lambda t: np.sign(t) * np.abs(np.asarray(t, dtype=float)) ** p,
        name=f"power({p:g})",
    )


def positive_power_nonlinearity(p: float) -> Nonlinearity:
    """max(t,0)^p; vanishes on the nonpositive axis."""
    if p < 1:
        raise ValueError("power exponent must be >= 1")
    return Nonlinearity(
        fn=lambda t: np.maximum(np.asarray(t, dtype=float), 0.0) ** p,
        name=f"positive_power({p:g})",
        vanishes_on_nonpositive=True,
    )


def exponential_nonlinearity() -> Nonlinearity:
    return Nonlinearity(fn=lambda t: np.expm1(np.asarray(t, dtype=float)), name="exp-1")


NONLINEARITY_KINDS = {
    "zero": lambda **kw: zero_nonlinearity(),
    "linear": lambda slope=1.0, **kw: linear_nonlinearity(slope),
    "power": lambda p=3.0, **kw: power_nonlinearity(p),
    "positive_power": lambda p=3.0, **kw: positive_power_nonlinearity(p),
    "exp": lambda **kw: exponential_nonlinearity(),
}


def make_nonlinearity(kind: str, **params) -> Nonlinearity:
    try:
        factory = NONLINEARITY_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown nonlinearity kind {kind!r}") from None
    f = factory(**params)
    if params.get("truncation_level"):
        f = f.clamped(float(params["truncation_level"]))
    return f


@dataclass
class SolveOptions:
    tol: float = 1e-9             # target relative residual
    accept_tol: float = 1e-9      # residual accepted on stagnation
    max_iter: int = 50_000
    theta: float = 0.5
    theta_min: float = 1e-7
    blowup: float = 1e12
    stagnation_window: int = 500
    secant_fallback: bool = True  # implicit-slope rescue for steep nonlinearities
    start: np.ndarray | None = None


@dataclass
class SolveResult:
    u: np.ndarray
    iterations: int
    residual: float
    f_integral: float
    converged: bool
    diverged: bool = False
    theta: float = float("nan")
    message: str = ""


def _secant_newton(
    solve_density,
    matrix: sp.spmatrix,
    w_lin: np.ndarray,
    f: Nonlinearity,
    opts: SolveOptions,
    start: np.ndarray,
    max_steps: int = 60,
) -> SolveResult:
    """Implicit-slope iteration for u + G[f(u)] = w.

    Each step solves (A + S) d = -(A u + f(u) - A w) with S the diagonal of
    central secant slopes of f at the iterate; monotone f keeps A + S a
    Stieltjes matrix, so the step is always well defined.  Derivative-free
    and robust where the damped fixed point crawls (slopes near the clamp
    scale of a truncated nonlinearity).
    """
    scale = float(max(np.max(np.abs(w_lin)), 1e-300))
    b = matrix @ w_lin  # differential-form right-hand side
    u = start.copy()
    best_res = float("inf")
    best_u = u.copy()
    res = float("inf")
    for step in range(1, max_steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            fu = np.asarray(f(u))
        if not np.all(np.isfinite(fu)):
            return SolveResult(
                u=best_u, iterations=step, residual=best_res,
                f_integral=float("nan"), converged=False, diverged=True,
                message="nonlinearity overflow in secant step",
            )
        res = float(np.max(np.abs(u + solve_density(fu) - w_lin)) / scale)
        if res < best_res:
            best_res = res
            best_u = u.copy()
        if res < opts.tol:
            return SolveResult(
                u=u, iterations=step, residual=res,
                f_integral=float("nan"), converged=True,
                message="secant",
            )
        d = max(1e-8 * float(np.max(np.abs(u))), 1e-12)
        with np.errstate(over="ignore", invalid="ignore"):
            slopes = (np.asarray(f(u + d)) - np.asarray(f(u - d))) / (2.0 * d)
        slopes = np.where(np.isfinite(slopes), np.maximum(slopes, 0.0), 0.0)
        system = (matrix + sp.diags(slopes)).tocsc()
        defect = matrix @ u + fu - b
        direction = spla.splu(system).solve(defect)
        alpha = 1.0
        for _ in range(30):
            candidate = u - alpha * direction
            with np.errstate(over="ignore", invalid="ignore"):
                fc = np.asarray(f(candidate))
            if np.all(np.isfinite(fc)):
                cres = float(
                    np.max(np.abs(candidate + solve_density(fc) - w_lin)) / scale
                )
                if cres < res:
                    break
            alpha *= 0.5
        u = u - alpha * direction
    converged = best_res <= opts.accept_tol
    return SolveResult(
        u=best_u, iterations=max_steps, residual=best_res,
        f_integral=float("nan"), converged=converged,
        message="secant cap reached" if not converged else "secant",
    )


def picard_fixed_point(
    solve_density,
    w_lin: np.ndarray,
    f: Nonlinearity,
    opts: SolveOptions,
    matrix: sp.spmatrix | None = None,
) -> SolveResult:
    """Damped fixed point for u + G[f(u)] = w on an arbitrary solve handle.

    Returns the best iterate seen; convergence means its relative residual
    met the target (or the acceptance tolerance after stagnation).  When the
    damped map stalls short of the tolerance and the stencil matrix is
    available, the implicit-slope iteration takes over.
    """
    scale = float(max(np.max(np.abs(w_lin)), 1e-300))
    blow = opts.blowup * max(scale, 1.0)
    u = w_lin.copy() if opts.start is None else opts.start.copy()
    theta = opts.theta
    best_res = float("inf")
    best_u = u
    prev_res = float("inf")
    anchor_res = float("inf")
    anchor_iter = 0
    iterations = 0
    for iterations in range(1, opts.max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            fu = f(u)
        if not np.all(np.isfinite(fu)):
            bad = int(np.argmax(~np.isfinite(fu)))
            return SolveResult(
                u=best_u, iterations=iterations, residual=best_res,
                f_integral=float("nan"), converged=False, diverged=True,
                theta=theta, message=f"nonlinearity overflow at node {bad}",
            )
        residual_field = u + solve_density(fu) - w_lin
        res = float(np.max(np.abs(residual_field)) / scale)
        if res < best_res:
            best_res = res
            best_u = u.copy()
        if res < opts.tol:
            return SolveResult(
                u=u, iterations=iterations, residual=res,
                f_integral=float("nan"), converged=True, theta=theta,
            )
        if not np.isfinite(res) or np.max(np.abs(u)) > blow:
            return SolveResult(
                u=best_u, iterations=iterations, residual=best_res,
                f_integral=float("nan"), converged=False, diverged=True,
                theta=theta, message="iterate blow-up",
            )
        if res > prev_res and theta > opts.theta_min:
            theta = max(0.5 * theta, opts.theta_min)
        prev_res = res
        # stagnation means no real net progress over a whole window
        if iterations - anchor_iter >= opts.stagnation_window:
            if best_res > 0.9 * anchor_res:
                if best_res <= opts.accept_tol:
                    return SolveResult(
                        u=best_u, iterations=iterations, residual=best_res,
                        f_integral=float("nan"), converged=True, theta=theta,
                        message="stagnated at round-off floor",
                    )
                if opts.secant_fallback and matrix is not None:
                    rescue = _secant_newton(
                        solve_density, matrix, w_lin, f, opts, best_u
                    )
                    rescue.iterations += iterations
                    return rescue
                return SolveResult(
                    u=best_u, iterations=iterations, residual=best_res,
                    f_integral=float("nan"), converged=False, theta=theta,
                    message="stagnated",
                )
            anchor_res = best_res
            anchor_iter = iterations
        u = u - theta * residual_field
    if best_res > opts.tol and opts.secant_fallback and matrix is not None:
        rescue = _secant_newton(solve_density, matrix, w_lin, f, opts, best_u)
        rescue.iterations += iterations
        return rescue
    converged = best_res <= opts.accept_tol
    return SolveResult(
        u=best_u, iterations=iterations, residual=best_res,
        f_integral=float("nan"), converged=converged, theta=theta,
        message="iteration cap reached" if not converged else "",
    )


def interior_load_vector(ws: Workspace, tau: InteriorMeasure) -> np.ndarray:
    """Nodal density carried by an interior measure (atoms as mass/cell)."""
    rhs = tau.density.copy()
    if tau.atoms:
        inv_vol = 1.0 / ws.domain.cell_volume
        for idx, mass in tau.atoms.items():
            rhs[idx] += mass * inv_vol
    return rhs


def boundary_data_vector(ws: Workspace, nu: BoundaryMeasure) -> np.ndarray:
    """Nodal Dirichlet values realizing a boundary measure's harmonic extension."""
    g = np.zeros(ws.domain.n_boundary)
    coupled = ws.martin.coupled
    g[coupled] = nu.masses[coupled] / ws.martin.reference_values[coupled]
    return g


def solve_bvp(
    ws: Workspace,
    f: Nonlinearity,
    tau: InteriorMeasure,
    nu: BoundaryMeasure,
    opts: SolveOptions | None = None,
) -> SolveResult:
    """Solve the semilinear problem with measure data.

    The converged iterate satisfies u + G[f(u)] = G[tau] + K[nu] to the
    reported relative residual; a diverged run is flagged, with the iterate
    left at the best residual seen.
    """
    opts = opts or SolveOptions()
    w_lin = ws.linear_solution(tau, nu)
    result = picard_fixed_point(
        ws.green.apply_density, w_lin, f, opts, matrix=ws.operator.matrix
    )
    with np.errstate(over="ignore", invalid="ignore"):
        result.f_integral = float(
            np.sum(np.abs(f(result.u)) * ws.phi) * ws.cell_volume
        )
    return result


def representation_residual(
    ws: Workspace,
    u: np.ndarray,
    f: Nonlinearity,
    tau: InteriorMeasure,
    nu: BoundaryMeasure,
) -> float:
    """Relative sup-norm defect of u + G[f(u)] = G[tau] + K[nu]."""
    w_lin = ws.linear_solution(tau, nu)
    scale = float(max(np.max(np.abs(w_lin)), 1e-300))
    return float(np.max(np.abs(u + ws.green.apply_density(f(u)) - w_lin)) / scale)


def compare_sub_super(
    ws: Workspace,
    f: Nonlinearity,
    u_sub: np.ndarray,
    data_sub: MeasureCouple,
    u_super: np.ndarray,
    data_super: MeasureCouple,
    tol: float = 1e-8,
) -> bool:
    """Ordering oracle: does the subsolution stay below the supersolution?

    The claimed sub/supersolution structure is verified nodewise first
    (stencil inequality against the data), then the fields are compared.
    """
    B = ws.operator.boundary_coupling
    scale = float(max(np.max(np.abs(u_sub)), np.max(np.abs(u_super)), 1.0))
    slack = tol * scale * ws.domain.n_cells**2

    def stencil_defect(u, data):
        load = interior_load_vector(ws, data.tau)
        bc = B @ boundary_data_vector(ws, data.nu)
        return ws.operator.apply(u) + f(u) - load - bc

    sub_defect = float(np.max(stencil_defect(u_sub, data_sub)))
    super_defect = float(np.min(stencil_defect(u_super, data_super)))
    if sub_defect > slack:
        raise ValueError(
            f"claimed subsolution violates its stencil inequality by {sub_defect:.3e}"
        )
    if super_defect < -slack:
        raise ValueError(
            f"claimed supersolution violates its stencil inequality by {-super_defect:.3e}"
        )
    return bool(np.all(u_sub <= u_super + tol * scale))


def kato_check(ws: Workspace, w: np.ndarray) -> dict:
    """Worst nodewise violation of the discrete positive-part inequality.

    Computed in a cancellation-free form: the gap between the stencil acting
    on the positive part and the sign-restricted stencil action is a sum of
    same-signed off-diagonal terms, so the reported violation is a true
    bound, not a round-off artifact.
    """
    A = ws.operator.matrix
    diag = A.diagonal()
    A_off = A - sp.diags(diag)
    w = np.asarray(w, dtype=float)
    w_pos = np.maximum(w, 0.0)
    w_neg = np.maximum(-w, 0.0)
    gap_pos_rows = A_off @ w_neg
    gap_neg_rows = A_off @ w_pos
    gap = np.where(w > 0, gap_pos_rows, gap_neg_rows)
    worst = float(np.max(gap))
    return {
        "worst_violation": worst,
        "node": int(np.argmax(gap)),
        "all_nonpositive": bool(worst <= 0.0),
    }


@dataclass
class ExhaustionLevelResult:
    beta: float
    n_nodes: int
    residual: float
    converged: bool
    max_increase: float


@dataclass
class ExhaustionResult:
    u: np.ndarray
    per_level: list[ExhaustionLevelResult]
    monotone_ok: bool
    converged: bool
    covers_interior: bool


def solve_by_exhaustion(
    ws: Workspace,
    f: Nonlinearity,
    tau: InteriorMeasure,
    supersolution: np.ndarray,
    exhaustion: Exhaustion,
    boundary_data: BoundaryMeasure | None = None,
    opts: SolveOptions | None = None,
    monotone_slack: float = 1e-8,
) -> ExhaustionResult:
    """Monotone construction of the solution over an exhaustion.

    Each strictly interior level solves the problem with Dirichlet data
    taken from the supersolution; the per-level solutions decrease.  The
    final (full interior) level needs the actual boundary measure
    (boundary_data); without it the construction stops at the last strict
    level and the outer band keeps the supersolution values.
    """
    opts = opts or SolveOptions()
    domain = ws.domain
    A = ws.operator.matrix
    tau_load = interior_load_vector(ws, tau)

    current = supersolution.copy()
    per_level: list[ExhaustionLevelResult] = []
    monotone_ok = True
    converged = True
    covers = False
    prev_nodes: np.ndarray | None = None

    for lv in exhaustion.levels:
        nodes = lv.nodes
        if lv.uses_true_boundary:
            if boundary_data is None:
                break
            bc_load = ws.operator.boundary_coupling @ boundary_data_vector(
                ws, boundary_data
            )
            sub_matrix = A
            local_rhs = tau_load + bc_load
            solve = ws.operator.solve
            covers = True
        else:
            sub_matrix = A[nodes][:, nodes].tocsc()
            coupling = -A[nodes][:, lv.dirichlet_nodes]
            bc_load = coupling @ current[lv.dirichlet_nodes]
            local_rhs = tau_load[nodes] + np.asarray(bc_load).ravel()
            solve = spla.splu(sub_matrix).solve
        w_lin = solve(local_rhs)
        level_opts = replace(opts, start=current[nodes])
        res = picard_fixed_point(solve, w_lin, f, level_opts, matrix=sub_matrix)
        converged = converged and res.converged
        max_increase = 0.0
        if prev_nodes is not None:
            in_prev = np.isin(nodes, prev_nodes, assume_unique=True)
            new_on_prev = res.u[in_prev]
            old_on_prev = current[nodes[in_prev]]
            max_increase = float(np.max(new_on_prev - old_on_prev, initial=0.0))
            scale = float(max(np.max(np.abs(current)), 1.0))
            if max_increase > monotone_slack * scale:
                monotone_ok = False
        current = current.copy()
        current[nodes] = res.u
        per_level.append(
            ExhaustionLevelResult(
                beta=lv.beta,
                n_nodes=int(nodes.size),
                residual=res.residual,
                converged=res.converged,
                max_increase=max_increase,
            )
        )
        prev_nodes = nodes

    return ExhaustionResult(
        u=current,
        per_level=per_level,
        monotone_ok=monotone_ok,
        converged=converged,
        covers_interior=covers,
    )
