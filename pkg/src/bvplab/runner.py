"""Experiment runner: assemble the pipeline from a config, execute the
requested theorem checks, and emit machine-readable results.

Every run reports the admissibility block (growth constant, form margin,
ground-state diagnostics) before any nonlinear result.  results.json is
byte-deterministic for a fixed config and seed: timing lives only in the
human-readable summary.

Checks share only the immutable workspace and each gets its own generator
seeded from (run seed, check name), so their results do not depend on
execution order; this implementation runs them sequentially.
"""

from __future__ import annotations

import csv
import json
import os
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from .config import (
    ExperimentConfig,
    build_boundary_measure,
    build_interior_measure,
    resolve_singular_set,
)
from .grid import build_domain, build_exhaustion
from .hardy import Potential, build_hardy_potential, check_form_inequality, estimate_hardy_constant
from .measures import (
    BoundaryMeasure,
    InteriorMeasure,
    MeasureCouple,
    jordan_split,
)
from .reduced import (
    reduced_couple,
    reduced_signed,
    verify_independence,
    verify_l1_convergence,
    verify_lattice,
    verify_positive_part_characterization,
    verify_sandwich_goodness,
)
from .semilinear import (
    SolveOptions,
    kato_check,
    make_nonlinearity,
    solve_bvp,
    solve_by_exhaustion,
)
from .spectral import (
    Workspace,
    build_workspace,
    check_ground_state_boundary,
    verify_weighted_estimates,
)
from .trace import check_trace_equivalence, trace_normalized


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class CheckResult:
    name: str
    passed: bool
    evidence: dict


@dataclass
class RunReport:
    config_echo: dict
    admissibility: dict
    checks: list[CheckResult]
    artifacts: list[str] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json_dict(self) -> dict:
        return {
            "config": self.config_echo,
            "admissibility": self.admissibility,
            "checks": [
                {"name": c.name, "passed": c.passed, "evidence": c.evidence}
                for c in self.checks
            ],
            "artifacts": sorted(self.artifacts),
        }


@dataclass
class RunContext:
    config: ExperimentConfig
    ws: Workspace
    f: object
    tau: InteriorMeasure
    nu: BoundaryMeasure
    _exhaustion: object = None

    @property
    def exhaustion(self):
        if self._exhaustion is None:
            self._exhaustion = build_exhaustion(
                self.ws.domain, self.config.exhaustion_levels
            )
        return self._exhaustion

    def ladder_options(self) -> SolveOptions:
        return SolveOptions(
            tol=self.config.tolerances["ladder"],
            accept_tol=self.config.tolerances["solve"],
        )

    def data_scales(self) -> tuple[float, float]:
        return (
            max(self.ws.interior_measure_norm(self.tau), 1e-300),
            max(self.nu.total_variation(), 1e-300),
        )


def _json_safe(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    return value


def _check_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


# ---------------------------------------------------------------------------
# checks


def _check_lambda_identity(ctx: RunContext, rng) -> CheckResult:
    ws = ctx.ws
    n = ws.domain.n_interior
    worst = 0.0
    for _ in range(50):
        density = rng.uniform(-1.0, 1.0, n)
        atom_node = int(rng.integers(0, n))
        tau = InteriorMeasure(density, {atom_node: float(rng.uniform(-1, 1))})
        lhs = ws.eigenvalue * ws.grid_inner(ws.green.apply(tau), ws.phi)
        rhs = ws.measure_pairing(tau, ws.phi)
        worst = max(worst, abs(lhs - rhs) / max(ws.interior_measure_norm(tau), 1e-300))
    tol = 1e-8
    return CheckResult(
        "lambda_identity",
        passed=bool(worst <= tol),
        evidence={"worst_scaled_gap": worst, "tolerance": tol, "draws": 50},
    )


def _check_representation(ctx: RunContext, rng) -> CheckResult:
    opts = SolveOptions(tol=ctx.config.tolerances["solve"])
    residuals = []
    conv = []
    for f_case in (ctx.f, ctx.f.clamped(4.0), ctx.f.clamped(64.0)):
        res = solve_bvp(ctx.ws, f_case, ctx.tau, ctx.nu, opts)
        conv.append(res.converged)
        if res.converged:
            residuals.append(res.residual)
    tol = ctx.config.tolerances["solve"]
    worst = max(residuals) if residuals else float("inf")
    return CheckResult(
        "representation",
        passed=bool(residuals and worst <= tol),
        evidence={
            "worst_residual": worst,
            "tolerance": tol,
            "converged_flags": conv,
        },
    )


def _check_trace_recovery(ctx: RunContext, rng) -> CheckResult:
    ws = ctx.ws
    tol = ctx.config.tolerances["trace_rtol"]
    tau_scale, nu_scale = ctx.data_scales()
    u_k = ws.martin.apply(ctx.nu)
    rep_k = trace_normalized(ws, u_k, rtol=tol,
                             decay_threshold=ctx.config.tolerances["decay_threshold"])
    k_err = (rep_k.estimated_measure - ctx.nu).total_variation() / nu_scale
    u_g = ws.green.apply(ctx.tau)
    from .semilinear import interior_load_vector

    rep_g_raw = trace_normalized(ws, u_g, rtol=tol)
    rep_g = trace_normalized(
        ws, u_g, interior_load=interior_load_vector(ws, ctx.tau), rtol=tol
    )
    g_raw = rep_g_raw.estimated_measure.total_variation() / tau_scale
    g_sub = rep_g.estimated_measure.total_variation() / tau_scale
    return CheckResult(
        "trace_recovery",
        passed=bool(k_err <= tol and g_sub <= tol),
        evidence={
            "kernel_recovery_tv": k_err,
            "potential_phantom_tv": g_sub,
            "potential_phantom_tv_raw_reading": g_raw,
            "kernel_verdict": rep_k.verdict,
            "tolerance": tol,
        },
    )


def _check_trace_equivalence(ctx: RunContext, rng) -> CheckResult:
    ws = ctx.ws
    away = ws.domain.delta > 0.25 * ws.domain.inradius
    worst = 0.0
    n_draws = 5
    for _ in range(n_draws):
        masses = rng.uniform(0.1, 1.0, ws.domain.n_boundary) * ws.martin.coupled
        nu = BoundaryMeasure(masses)
        tau = InteriorMeasure(rng.uniform(0.0, 1.0, ws.domain.n_interior) * away)
        u = ws.martin.apply(nu) + ws.green.apply(tau)
        out = check_trace_equivalence(ws, u, ctx.exhaustion)
        worst = max(worst, out["tv_discrepancy"] / nu.total_variation())
    evidence = {"worst_relative_discrepancy": worst, "draws": n_draws}
    if ctx.ws.potential.a_bar == 0.0:
        tol = 1e-3
    else:
        # the harmonic-measure estimator resolves fractional boundary modes
        # of singular potentials only to leading order at desk resolution
        tol = 5e-2
        evidence["note"] = "degraded tolerance: singular-potential boundary modes"
    evidence["tolerance"] = tol
    return CheckResult(
        "trace_equivalence",
        passed=bool(worst <= tol),
        evidence=evidence,
    )


def _check_kato(ctx: RunContext, rng) -> CheckResult:
    worst = -float("inf")
    for _ in range(100):
        w = rng.standard_normal(ctx.ws.domain.n_interior)
        worst = max(worst, kato_check(ctx.ws, w)["worst_violation"])
    tol = 1e-12
    return CheckResult(
        "kato",
        passed=bool(worst <= tol),
        evidence={"worst_violation": worst, "tolerance": tol, "fields": 100},
    )


def _check_monotone_reduction(ctx: RunContext, rng) -> CheckResult:
    result = reduced_couple(
        ctx.ws, ctx.f, ctx.tau, ctx.nu,
        levels=ctx.config.truncation_levels,
        schedule_base=ctx.config.truncation_base,
        schedule_ratio=ctx.config.truncation_ratio,
        opts=ctx.ladder_options(),
    )
    tau_scale, nu_scale = ctx.data_scales()
    rep_ok = result.representation_residual <= 1e-8
    passed = bool(
        result.monotone_ok
        and result.tau_within_input
        and result.nu_within_input
        and rep_ok
    )
    return CheckResult(
        "monotone_reduction",
        passed=passed,
        evidence={
            "monotone_ok": result.monotone_ok,
            "cauchy_ok": result.cauchy_ok,
            "tau_within_input": result.tau_within_input,
            "nu_within_input": result.nu_within_input,
            "representation_residual": result.representation_residual,
            "bound_constant": result.bound_constant,
            "levels_run": len(result.per_level),
            "per_level_diff": [d.diff_norm for d in result.per_level],
            "per_level_f_integral": [d.f_integral for d in result.per_level],
            "reduced": result.to_dict(),
        },
    )


def _check_independence(ctx: RunContext, rng) -> CheckResult:
    out = verify_independence(
        ctx.ws, ctx.f, ctx.tau, ctx.nu, levels=ctx.config.truncation_levels
    )
    tol = ctx.config.tolerances["check"]
    nu_rel = out["nu_independence_gap"] / out["nu_scale"]
    tau_rel = out["tau_independence_gap"] / max(out["tau_scale"], 1e-300)
    return CheckResult(
        "independence",
        passed=bool(nu_rel <= tol and tau_rel <= tol),
        evidence={
            "nu_gap_relative": nu_rel,
            "tau_gap_relative": tau_rel,
            "tolerance": tol,
        },
    )


def _check_lattice(ctx: RunContext, rng) -> CheckResult:
    n_b = ctx.ws.domain.n_boundary
    half = np.arange(n_b // 2)
    other = np.arange(n_b // 2, n_b)
    out = verify_lattice(
        ctx.ws, ctx.f, ctx.nu, [half, other], rng,
        levels=ctx.config.truncation_levels,
    )
    tol = ctx.config.tolerances["check"]
    rel = max(out["equality_gaps"] + [out["additivity_gap"]]) / max(
        out["nu_scale"], 1e-300
    )
    return CheckResult(
        "lattice",
        passed=bool(rel <= tol and out["minimality_ok"]),
        evidence={
            "worst_relative_gap": rel,
            "minimality_ok": out["minimality_ok"],
            "certified_candidates": out["certified_candidates"],
            "tolerance": tol,
        },
    )


def _check_diffuse_preservation(ctx: RunContext, rng) -> CheckResult:
    result = reduced_couple(
        ctx.ws, ctx.f, ctx.tau, ctx.nu,
        levels=ctx.config.truncation_levels,
        opts=ctx.ladder_options(),
    )
    exact = bool(np.array_equal(result.tau_sharp.density, ctx.tau.density))
    return CheckResult(
        "diffuse_preservation",
        passed=exact,
        evidence={
            "density_preserved_exactly": exact,
            "offsupport_defect": result.offsupport_defect,
            "capacity_proxy": "diffuse=density, concentrated=atoms",
        },
    )


def _signed_variant(ctx: RunContext):
    """Deterministic signed data bounded by the config data."""
    sign_i = np.where(np.arange(ctx.ws.domain.n_interior) % 2 == 0, 1.0, -1.0)
    sign_b = np.where(np.arange(ctx.ws.domain.n_boundary) % 2 == 0, 1.0, -1.0)
    tau_signed = InteriorMeasure(
        ctx.tau.density * sign_i,
        {k: v * (1 if k % 2 == 0 else -1) for k, v in ctx.tau.atoms.items()},
    )
    nu_signed = BoundaryMeasure(ctx.nu.masses * sign_b)
    return tau_signed, nu_signed


def _check_signed_sandwich(ctx: RunContext, rng) -> CheckResult:
    tau_s, nu_s = _signed_variant(ctx)
    tp, tm = jordan_split(tau_s)
    np_, nm = jordan_split(nu_s)
    out = reduced_signed(
        ctx.ws, ctx.f, tau_s, nu_s, (tm, nm, tp, np_),
        levels=ctx.config.truncation_levels,
        opts=ctx.ladder_options(),
    )
    tau_scale, nu_scale = ctx.data_scales()
    tol = ctx.config.tolerances["check"]
    nu_eq = (out.nu_tilde - nu_s).total_variation() / max(nu_scale, 1e-300)
    tau_eq = ctx.ws.interior_measure_norm(out.tau_tilde - tau_s) / max(
        tau_scale, 1e-300
    )
    passed = bool(
        out.sandwich_ok and out.max_squeeze_violation <= 1e-8
        and nu_eq <= tol and tau_eq <= tol
    )
    return CheckResult(
        "signed_sandwich",
        passed=passed,
        evidence={
            "max_squeeze_violation": out.max_squeeze_violation,
            "sandwich_ok": out.sandwich_ok,
            "good_bounds_nu_equality": nu_eq,
            "good_bounds_tau_equality": tau_eq,
            "cauchy_ok": out.cauchy_ok,
            "oscillation": out.oscillation,
            "tolerance": tol,
        },
    )


def _check_exhaustion_crosscheck(ctx: RunContext, rng) -> CheckResult:
    f_bounded = ctx.f.clamped(8.0)
    opts = ctx.ladder_options()
    direct = solve_bvp(ctx.ws, f_bounded, ctx.tau, ctx.nu, opts)
    w_sup = ctx.ws.linear_solution(ctx.tau, ctx.nu)
    out = solve_by_exhaustion(
        ctx.ws, f_bounded, ctx.tau, w_sup, ctx.exhaustion,
        boundary_data=ctx.nu, opts=opts,
    )
    scale = max(float(np.max(np.abs(direct.u))), 1e-300)
    rel = float(np.max(np.abs(out.u - direct.u))) / scale
    tol = ctx.config.tolerances["check"]
    return CheckResult(
        "exhaustion_crosscheck",
        passed=bool(rel <= tol and out.monotone_ok and direct.converged),
        evidence={
            "relative_difference": rel,
            "monotone_ok": out.monotone_ok,
            "covers_interior": out.covers_interior,
            "tolerance": tol,
        },
    )


def _check_l1_convergence(ctx: RunContext, rng) -> CheckResult:
    out = verify_l1_convergence(
        ctx.ws, ctx.f, ctx.tau, ctx.nu,
        levels=ctx.config.truncation_levels,
        solve_opts=ctx.ladder_options(),
    )
    tau_scale, nu_scale = ctx.data_scales()
    scale = tau_scale + nu_scale
    tol = ctx.config.tolerances["check"]
    passed = bool(
        out["final_gap"] <= tol * scale
        and max(out["identity_gaps"]) <= 1e-6 * scale
        and out["decreasing_tail"]
    )
    return CheckResult(
        "l1_convergence",
        passed=passed,
        evidence={
            "final_gap": out["final_gap"],
            "identity_gap_max": max(out["identity_gaps"]),
            "l1_gaps": out["l1_gaps"],
            "decreasing_tail": out["decreasing_tail"],
            "tolerance": tol,
        },
    )


def _check_weighted_estimates(ctx: RunContext, rng) -> CheckResult:
    out = verify_weighted_estimates(ctx.ws, rng)
    passed = bool(
        out["kernel_two_sided"]
        and out["green_strip_decays"]
        and np.isfinite(out["potential_ratio_max"])
    )
    return CheckResult("weighted_estimates", passed=passed, evidence=out)


def _check_goodness_sandwich(ctx: RunContext, rng) -> CheckResult:
    tau_s, nu_s = _signed_variant(ctx)
    tp, tm = jordan_split(tau_s)
    np_, nm = jordan_split(nu_s)
    t = float(rng.uniform(0.2, 0.8))
    candidate = MeasureCouple(
        t * tp + (t - 1.0) * tm, t * np_ + (t - 1.0) * nm
    )
    out = verify_sandwich_goodness(
        ctx.ws, ctx.f, candidate, (tm, nm, tp, np_),
        levels=ctx.config.truncation_levels,
    )
    return CheckResult(
        "goodness_sandwich",
        passed=bool(out["candidate_converged"] and not out["red_flag"]),
        evidence=out,
    )


def _check_positive_part(ctx: RunContext, rng) -> CheckResult:
    tau_s, nu_s = _signed_variant(ctx)
    out = verify_positive_part_characterization(
        ctx.ws, ctx.f, tau_s, nu_s, levels=ctx.config.truncation_levels
    )
    passed = bool(
        out["negative_parts_good"]
        and out["reduced_plus_good"]
        and out["prediction_consistent"]
    )
    return CheckResult("positive_part", passed=passed, evidence=out)


def _check_hardy_constant(ctx: RunContext, rng) -> CheckResult:
    domain = ctx.ws.domain
    singular = resolve_singular_set(ctx.config.singular_set_spec, domain)
    estimate = estimate_hardy_constant(domain, singular)
    gamma = ctx.config.gamma
    consistent = bool(gamma <= 0 or gamma <= estimate)
    return CheckResult(
        "hardy_constant",
        passed=consistent,
        evidence={"estimate": estimate, "config_gamma": gamma},
    )


CHECKS = {
    "lambda_identity": _check_lambda_identity,
    "representation": _check_representation,
    "trace_recovery": _check_trace_recovery,
    "trace_equivalence": _check_trace_equivalence,
    "kato": _check_kato,
    "monotone_reduction": _check_monotone_reduction,
    "independence": _check_independence,
    "lattice": _check_lattice,
    "diffuse_preservation": _check_diffuse_preservation,
    "signed_sandwich": _check_signed_sandwich,
    "exhaustion_crosscheck": _check_exhaustion_crosscheck,
    "l1_convergence": _check_l1_convergence,
    "weighted_estimates": _check_weighted_estimates,
    "goodness_sandwich": _check_goodness_sandwich,
    "positive_part": _check_positive_part,
    "hardy_constant": _check_hardy_constant,
}


def list_checks() -> list[str]:
    return sorted(CHECKS)


# ---------------------------------------------------------------------------
# pipeline


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except Exception as exc:
                raise StageError(name, exc) from exc

        return inner

    return wrap


def build_context(config: ExperimentConfig) -> tuple[RunContext, dict]:
    domain = _stage("domain")(build_domain)(config.shape, config.n_cells)
    if config.gamma == 0.0:
        potential = Potential.zero(domain)
    else:
        singular = resolve_singular_set(config.singular_set_spec, domain)
        potential = _stage("potential")(build_hardy_potential)(
            domain, config.gamma, singular
        )
    form = _stage("admissibility")(check_form_inequality)(domain, potential)
    if not form.satisfied:
        raise StageError(
            "admissibility",
            RuntimeError(f"form inequality violated (margin {form.margin:.3e})"),
        )
    ws = _stage("spectral")(build_workspace)(
        domain, potential, eig_tolerance=config.tolerances["eigen"]
    )
    boundary_report = check_ground_state_boundary(ws)
    admissibility = {
        "growth_constant": potential.a_bar,
        "form_margin": form.margin,
        "eigenvalue": ws.eigenvalue,
        "eigen_residual": ws.spectral.residual,
        "ground_state_boundary": boundary_report.to_dict(),
    }
    f = _stage("nonlinearity")(make_nonlinearity)(
        config.nonlinearity_kind, **config.nonlinearity_params
    )
    tau = _stage("data")(build_interior_measure)(config.tau_terms, domain)
    nu = _stage("data")(build_boundary_measure)(config.nu_terms, domain)
    return RunContext(config=config, ws=ws, f=f, tau=tau, nu=nu), admissibility


def run_experiment(config: ExperimentConfig, write: bool = True) -> RunReport:
    """Execute the configured checks; optionally write artifacts."""
    t_start = time.perf_counter()
    ctx, admissibility = build_context(config)
    timings = {"setup": time.perf_counter() - t_start}
    checks: list[CheckResult] = []
    for name in config.checks:
        if name not in CHECKS:
            raise StageError("checks", ValueError(f"unknown check {name!r}"))
        t0 = time.perf_counter()
        result = _stage(f"check:{name}")(CHECKS[name])(
            ctx, _check_rng(config.seed, name)
        )
        result.evidence = _json_safe(result.evidence)
        timings[name] = time.perf_counter() - t0
        checks.append(result)
    report = RunReport(
        config_echo=_json_safe(config.raw),
        admissibility=_json_safe(admissibility),
        checks=checks,
        timings=timings,
    )
    if write:
        write_artifacts(report, config.output_dir)
    return report


def _atomic_write(path: str, payload: str):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def write_artifacts(report: RunReport, output_dir: str) -> None:
    root = os.environ.get("BVPLAB_OUTPUT_ROOT", "")
    out = os.path.join(root, output_dir) if root else output_dir
    os.makedirs(out, exist_ok=True)

    results_path = os.path.join(out, "results.json")
    _atomic_write(
        results_path,
        json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n",
    )
    report.artifacts.append(results_path)

    for check in report.checks:
        csv_path = os.path.join(out, f"check_{check.name}.csv")
        tmp = csv_path + ".tmp"
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["key", "value"])
            writer.writerow(["passed", check.passed])
            for key, value in sorted(check.evidence.items()):
                writer.writerow([key, value])
        os.replace(tmp, csv_path)
        report.artifacts.append(csv_path)

    summary = [
        f"passed: {report.all_passed}",
        f"admissibility: {json.dumps(report.admissibility, sort_keys=True)}",
    ]
    for check in report.checks:
        verdict = "PASS" if check.passed else "FAIL"
        summary.append(
            f"[{verdict}] {check.name} ({report.timings.get(check.name, 0.0):.2f}s)"
        )
    summary.append(f"total setup time: {report.timings.get('setup', 0.0):.2f}s")
    _atomic_write(os.path.join(out, "summary.txt"), "\n".join(summary) + "\n")
    report.artifacts.append(os.path.join(out, "summary.txt"))

    # rewrite results.json now that the artifact list is complete
    _atomic_write(
        results_path,
        json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n",
    )


def compare_runs(results_a: dict, results_b: dict) -> dict:
    """Per-check numeric diff of two results.json payloads."""
    names_a = [c["name"] for c in results_a.get("checks", [])]
    names_b = [c["name"] for c in results_b.get("checks", [])]
    if names_a != names_b:
        raise ValueError(f"check lists differ: {names_a} vs {names_b}")

    def walk(a, b, path, out):
        if isinstance(a, dict) and isinstance(b, dict):
            for key in sorted(set(a) | set(b)):
                walk(a.get(key), b.get(key), f"{path}.{key}", out)
        elif isinstance(a, list) and isinstance(b, list) and len(a) == len(b):
            for i, (x, y) in enumerate(zip(a, b)):
                walk(x, y, f"{path}[{i}]", out)
        elif isinstance(a, (int, float)) and isinstance(b, (int, float)) \
                and not isinstance(a, bool) and not isinstance(b, bool):
            if a != b:
                out[path] = {"a": a, "b": b, "diff": abs(float(a) - float(b))}
        elif a != b:
            out[path] = {"a": a, "b": b, "diff": None}

    diffs: dict = {}
    for ca, cb in zip(results_a["checks"], results_b["checks"]):
        walk(ca["evidence"], cb["evidence"], ca["name"], diffs)
        if ca["passed"] != cb["passed"]:
            diffs[f"{ca['name']}.passed"] = {
                "a": ca["passed"], "b": cb["passed"], "diff": None,
            }
    numeric = [v["diff"] for v in diffs.values() if v["diff"] is not None]
    return {
        "differences": diffs,
        "n_differences": len(diffs),
        "max_abs_diff": max(numeric) if numeric else 0.0,
    }
