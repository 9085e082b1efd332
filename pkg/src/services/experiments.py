#!/usr/bin/env python3
# src/services/experiments.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
src/services/experiments.py
Experiment service: wires models, solver, norms, rays, identities and the
waveguide into named runs and writes report.json, CSV tables and
provenance.json. A failed run removes what it wrote.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import ExperimentConfig, get_config
from ..core.eikonal_rays import (
    QUERY_HEADER,
    STATUS_CAUSTIC,
    STATUS_NO_CONVERGENCE,
    TRAJECTORY_HEADER,
    EikonalField,
    build_bundle,
    curl_check,
    field_gradient,
    hj_report,
)
from ..core.errors import CausticSuspected, NoConvergence, PreconditionError
from ..core.helmholtz_fd import (
    FIELD_HEADER,
    BoundaryCondition,
    ComplexField,
    PolarGrid,
    Solution,
    assemble,
    field_table,
    gaussian_source,
    read_field_csv,
    ring_source,
    solve,
)
from ..core.identities import (
    angular_weight,
    ball_weight,
    check_flux,
    check_morawetz,
    check_variational,
    constant_weight,
    gaussian_weight,
    multiplier_from_name,
    psi_q_decomposition,
)
from ..core.index_models import IndexModel, TiltIndex, assumption_report, build_model
from ..core.norms import (
    FLUX_HEADER,
    ScalarPhase,
    VectorPhase,
    annulus_mass,
    besov_norm,
    concentration_integral,
    duality_check,
    dyadic_decomposition,
    flux_report,
    gradient_energy,
    morawetz_report,
    sommerfeld_liminf,
    sommerfeld_residual,
    weighted_integral,
    weighted_source_norm,
)
from ..core.waveguide import (
    WaveguideParams,
    conjugated_energy,
    coulomb_ratio,
    phase_diagnostic,
    source_norms,
    tangential_blowup,
)
from ..helpers.utils import ArtifactWriter, mapper, ordered_map, provenance

logger = logging.getLogger(__name__)

TRAJECTORY_DUMPS = 8


@dataclass
class RunResult:
    experiment: str
    output_dir: Path
    files: List[Path]
    report: Dict[str, Any] = field(default_factory=dict)


class ExperimentService:
    """Runs one validated ExperimentConfig into an output directory."""

    def __init__(self, config: ExperimentConfig, output_dir: Path, show_progress: bool = True):
        self.config = config
        self.output_dir = Path(output_dir)
        self.show_progress = show_progress
        self.writer = ArtifactWriter(self.output_dir)
        self.grid_meta: Optional[Dict[str, Any]] = None

    # -- shared building blocks ----------------------------------------------

    def model(self) -> IndexModel:
        return build_model(self.config.model)

    def grid(self, L: Optional[float] = None) -> PolarGrid:
        g = self.config.grid
        if L is None or L == g.L:
            return PolarGrid(g.Nr, g.Ntheta, g.L)
        # keep the radial spacing of the configured grid
        return PolarGrid(max(4, int(round(g.Nr * L / g.L))), g.Ntheta, L)

    def source(self, grid: PolarGrid) -> ComplexField:
        s = self.config.source
        if s.kind == "ring":
            return ring_source(grid, s.r0, s.width, s.amplitude)
        if s.kind == "gaussian":
            return gaussian_source(grid, s.center, s.sigma, s.amplitude)
        return read_field_csv(Path(s.path), grid)

    def boundary(self, model: IndexModel) -> BoundaryCondition:
        if self.config.bc == "outgoing":
            return BoundaryCondition.outgoing(model.limit)
        return BoundaryCondition.dirichlet0()

    def solve(self, model: IndexModel, grid: PolarGrid, f: ComplexField, epsilon: float) -> Solution:
        if self.config.bc == "dirichlet0" and epsilon * grid.L < 4.0:
            logger.warning(
                f"epsilon*L = {epsilon * grid.L:.3g} < 4 with dirichlet0: boundary reflections "
                "are weakly damped"
            )
        system = assemble(grid, model, epsilon, self.boundary(model))
        s = self.config.solver
        return solve(system, f, s.method, s.tol, s.max_iter, s.preconditioner)

    def map(self, fn: Callable, items: Sequence, desc: str) -> List:
        return ordered_map(fn, items, self.config.workers, desc, self.show_progress)

    def _solution_summary(self, solution: Solution) -> Dict[str, Any]:
        return {"residual": solution.residual, "iterations": solution.iterations}

    # -- experiments ---------------------------------------------------------

    def run_solve(self) -> Dict[str, Any]:
        model, grid = self.model(), self.grid()
        f = self.source(grid)
        solution = self.solve(model, grid, f, self.config.epsilon)
        self.grid_meta = grid.to_dict()
        self.writer.write_csv("u.csv", FIELD_HEADER, field_table(solution.u))
        self.writer.write_csv("f.csv", FIELD_HEADER, field_table(f))
        self.writer.write_json("grid.json", grid.to_dict())
        report: Dict[str, Any] = {"solution": self._solution_summary(solution), "model": repr(model)}
        if model.limit is not None:
            report["assumptions"] = assumption_report(model).to_dict()
        return report

    def run_norms(self) -> Dict[str, Any]:
        cfg = self.config
        model, grid = self.model(), self.grid()
        f = self.source(grid)
        solution = self.solve(model, grid, f, cfg.epsilon)
        u = solution.u
        self.grid_meta = grid.to_dict()

        report = morawetz_report(u, model, cfg.norms.R0)
        report.a = cfg.norms.a
        report.besov_f = besov_norm(f, report.R0)
        report.weighted_f = weighted_source_norm(f, cfg.norms.a)
        profile = model.limit
        if profile is not None and not profile.is_constant:
            report.concentration = concentration_integral(u, profile, max(report.R0, grid.r_inner))

        r_min = cfg.norms.r_min
        candidates = {"n_radial": ScalarPhase.from_model(grid, model)}
        if profile is not None:
            candidates["ninf_radial"] = ScalarPhase.from_profile(grid, profile)
        energy = gradient_energy(u, cfg.norms.weight, r_min)
        report.sommerfeld = {
            name: {
                "residual": sommerfeld_residual(u, phase, cfg.norms.weight, r_min),
                "liminf": sommerfeld_liminf(u, phase),
            }
            for name, phase in candidates.items()
        }
        report.sommerfeld["gradient_energy"] = energy

        radii = cfg.norms.radii or [0.5 * grid.L, 0.8 * grid.L]
        if profile is not None:
            rows = flux_report(u, f, model, profile, radii)
            report.flux_pairs = [row.__dict__ for row in rows]
            self.writer.write_csv("flux.csv", FLUX_HEADER, [row.as_tuple() for row in rows])

        dyadic = dyadic_decomposition(f, report.R0)
        self.writer.write_csv(
            "dyadic.csv",
            "j,lower,upper,value,clipped",
            [(t.j, t.lower, t.upper, t.value, float(t.clipped)) for t in dyadic.terms],
        )
        duality = duality_check(f, u)
        return {
            "solution": self._solution_summary(solution),
            "norms": report.to_dict(),
            "duality": duality.__dict__,
        }

    def run_eps_sweep(self) -> Dict[str, Any]:
        cfg = self.config
        model, grid = self.model(), self.grid()
        f = self.source(grid)
        self.grid_meta = grid.to_dict()
        x1, x2 = grid.cartesian
        n = model.n(x1, x2)
        _, n2 = model.split(x1, x2)
        n2_sup = float(np.max(np.abs(n2)))
        weighted_f = ComplexField(grid, f.values / np.sqrt(n), "source")

        def one(epsilon: float) -> Tuple[float, ...]:
            solution = self.solve(model, grid, f, epsilon)
            nr = morawetz_report(solution.u, model, cfg.norms.R0)
            besov = besov_norm(weighted_f, nr.R0)
            denominator = (epsilon + n2_sup) * besov**2
            ratio = nr.M2 / denominator if denominator > 0.0 else float("nan")
            return (epsilon, nr.M2, nr.triple_u, nr.triple_nu, nr.tangential_energy, besov, ratio)

        rows = self.map(one, cfg.epsilon_list, "eps-sweep")
        self.writer.write_csv("eps_sweep.csv", "epsilon,M2,triple_u,triple_nu,tangential,besov,ratio", rows)
        m2 = [row[1] for row in rows]
        variation = (max(m2) / min(m2) - 1.0) if min(m2) > 0.0 else 0.0
        return {
            "rows": [dict(zip(("epsilon", "M2", "triple_u", "triple_nu", "tangential", "besov", "ratio"), r)) for r in rows],
            "n2_sup": n2_sup,
            "M2_variation": variation,
        }

    def _ray_gradient(self, model: IndexModel, grid: PolarGrid, r_min: float) -> Tuple[np.ndarray, np.ndarray, int]:
        """grad phi on grid nodes with r >= r_min (zero elsewhere) and the failure count."""
        x1, x2 = grid.cartesian
        rr, _ = grid.mesh
        outer = rr >= r_min
        g1, g2 = np.zeros(grid.shape), np.zeros(grid.shape)
        if isinstance(model, TiltIndex):
            _, c1, c2 = model.closed_form_phase(x1[outer], x2[outer])
            g1[outer], g2[outer] = c1, c2
            return g1, g2, 0
        lam = self.config.rays.lam if self.config.rays.lam is not None else model.lam
        if model.perturbation_bounds() == (0.0, 0.0):
            root = math.sqrt(model.lam / lam)
            g1[outer], g2[outer] = root * x1[outer] / rr[outer], root * x2[outer] / rr[outer]
            return g1, g2, 0
        field_ = EikonalField(build_bundle(model, self.config.rays), self.config.rays.tol)
        result = field_.query(np.stack([x1[outer], x2[outer]], axis=1))
        grad = np.where(result.ok[:, None], result.grad, 0.0)
        g1[outer], g2[outer] = grad[:, 0], grad[:, 1]
        return g1, g2, int(np.count_nonzero(~result.ok))

    def run_sommerfeld_compare(self) -> Dict[str, Any]:
        cfg = self.config
        model, grid = self.model(), self.grid()
        f = self.source(grid)
        solution = self.solve(model, grid, f, cfg.epsilon)
        u = solution.u
        self.grid_meta = grid.to_dict()
        r_min = cfg.norms.r_min if cfg.norms.r_min is not None else 0.5 * grid.L
        weight = cfg.norms.weight
        lam = cfg.rays.lam if cfg.rays.lam is not None else model.lam
        root_lam = math.sqrt(lam)

        g1, g2, failed = self._ray_gradient(model, grid, r_min)
        if failed:
            logger.warning(f"{failed} grid node(s) without a ray phase; their candidate is zero")
        ray_phase = VectorPhase.from_cartesian(grid, root_lam * g1, root_lam * g2)
        candidates = {
            "n_radial": ScalarPhase.from_model(grid, model),
            "ray_phase": ray_phase,
            "incoming_control": ScalarPhase.from_model(grid, model, sign=-1.0),
        }
        if model.limit is not None:
            candidates["ninf_radial"] = ScalarPhase.from_profile(grid, model.limit)

        energy = gradient_energy(u, weight, r_min)
        rows = []
        table: Dict[str, Any] = {}
        for k, (name, phase) in enumerate(candidates.items()):
            residual = sommerfeld_residual(u, phase, weight, r_min)
            ratio = residual / energy if energy > 0.0 else 0.0
            table[name] = {"residual": residual, "ratio": ratio}
            rows.append((k, residual, ratio))
        self.writer.write_csv("sommerfeld.csv", "candidate,residual,ratio", rows)

        bridging = weighted_integral(grid, np.abs(ray_phase.tangential) ** 2 * u.abs2, "shifted", r_min)
        rr, _ = grid.mesh
        outer = rr >= r_min
        x1, x2 = grid.cartesian
        n = model.n(x1, x2)
        tangential2 = ray_phase.tangential**2
        gap = np.abs(ray_phase.radial - np.sqrt(n))
        resolved = outer & (tangential2 > 1e-12)
        algebraic = float(np.max(gap[resolved] / tangential2[resolved])) if np.any(resolved) else 0.0
        return {
            "solution": self._solution_summary(solution),
            "r_min": r_min,
            "weight": weight,
            "candidates": list(candidates),
            "residuals": table,
            "gradient_energy": energy,
            "tangential_bridge": bridging,
            "radial_gap_constant": algebraic,
            "phase_failures": failed,
        }

    def run_concentration(self) -> Dict[str, Any]:
        cfg = self.config
        model = self.model()
        profile = model.limit
        if profile is None:
            raise PreconditionError("concentration experiment needs an angular limit profile")
        critical = profile.critical_angles()
        window = math.radians(cfg.concentration.window_deg)

        def one(L: float) -> Dict[str, Any]:
            grid = self.grid(L)
            f = self.source(grid)
            u = self.solve(model, grid, f, cfg.epsilon).u
            conc = concentration_integral(u, profile, 0.5 * L)
            mass = annulus_mass(u, 0.5 * L, L)
            shell = u.abs2[-1]
            total = float(np.sum(shell))
            density = shell / total if total > 0.0 else np.zeros_like(shell)
            if critical.size:
                distance = np.abs(np.angle(np.exp(1j * (grid.theta[:, None] - critical[None, :]))))
                in_window = np.min(distance, axis=1) <= window
                window_mass = float(np.sum(density[in_window]))
                baseline = float(np.mean(in_window))
            else:
                window_mass = baseline = None
            flux = flux_report(u, f, model, profile, [cfg.concentration.flux_fraction * L])[0]
            return {
                "L": L,
                "Nr": grid.Nr,
                "concentration": conc,
                "annulus_mass": mass,
                "ratio": conc / mass if mass > 0.0 else 0.0,
                "window_mass": window_mass,
                "window_baseline": baseline,
                "flux": flux.__dict__,
                "histogram": np.column_stack([grid.theta, density]),
            }

        rows = self.map(one, cfg.concentration.L_list, "concentration")
        for row in rows:
            self.writer.write_csv(f"histogram_L{row['L']:g}.csv", "theta,density", row.pop("histogram"))
        self.writer.write_csv(
            "concentration.csv",
            "L,concentration,annulus_mass,ratio",
            [(r["L"], r["concentration"], r["annulus_mass"], r["ratio"]) for r in rows],
        )
        ratios = [r["ratio"] for r in rows]
        return {
            "rows": rows,
            "critical_angles": critical.tolist(),
            "ratio_non_increasing": bool(all(a >= b for a, b in zip(ratios, ratios[1:]))),
        }

    def run_rays(self) -> Dict[str, Any]:
        cfg = self.config.rays
        model = self.model()
        bundle = build_bundle(model, cfg)
        field_ = EikonalField(bundle, cfg.tol)

        step = max(1, bundle.alphas.size // TRAJECTORY_DUMPS)
        for k in range(0, bundle.alphas.size, step):
            self.writer.write_csv(f"trajectories/ray_{k:04d}.csv", TRAJECTORY_HEADER, bundle.trajectory(k).table())

        if cfg.queries:
            points = np.asarray(cfg.queries, dtype=float)
        else:
            theta = 2.0 * np.pi * np.arange(16) / 16
            points = np.stack([cfg.radii[0] * np.cos(theta), cfg.radii[0] * np.sin(theta)], axis=1)
        phase = field_.query(points)
        self.writer.write_csv("phase.csv", QUERY_HEADER, phase.table())
        for k, status in enumerate(phase.status):
            if status == STATUS_CAUSTIC:
                raise CausticSuspected(points[k].tolist(), float(phase.jac[k]))
            if status == STATUS_NO_CONVERGENCE:
                raise NoConvergence(field_.max_iter, float("nan"), f"ray inversion failed at {points[k].tolist()}")

        hj = hj_report(field_, cfg.radii, cfg.theta_samples, cfg.delta)
        report: Dict[str, Any] = {
            "conservation_drift": bundle.conservation_drift(),
            "phase_identity_gap": bundle.phase_identity_gap(),
            "escape_rates": bundle.escape_rates(),
            "escape_band": bundle.escape_band(),
            "curl": curl_check(field_gradient(field_), cfg.radii[0]),
            "hj": hj.to_dict(),
            "query_failures": phase.failures(),
        }
        if isinstance(model, TiltIndex):
            _, c1, c2 = model.closed_form_phase(points[:, 0], points[:, 1])
            report["closed_form_gradient_gap"] = float(
                np.max(np.hypot(phase.grad[:, 0] - c1, phase.grad[:, 1] - c2))
            )
            report["reflection_gap"] = bundle.reflection_gap()
        return report

    def run_identities(self) -> Dict[str, Any]:
        cfg = self.config
        ident = cfg.identities
        model, grid = self.model(), self.grid()
        f = self.source(grid)
        solution = self.solve(model, grid, f, cfg.epsilon)
        u = solution.u
        self.grid_meta = grid.to_dict()
        R = ident.R if ident.R is not None else 0.5 * grid.L

        if ident.psi == "angular":
            if model.limit is None:
                raise PreconditionError("angular flux weight needs an angular limit profile")
            psi = angular_weight(model.limit)
        else:
            psi = constant_weight(1.0)
        Psi = multiplier_from_name(ident.Psi, grid, model.limit, R)

        reports = {
            "variational_gaussian": check_variational(u, f, model, gaussian_weight(ident.phi_scale)),
            "variational_ball": check_variational(u, f, model, ball_weight(R)),
            "flux": check_flux(u, f, cfg.epsilon, psi),
            "morawetz": check_morawetz(u, f, model, cfg.epsilon, Psi),
        }
        rows = [(k, r.lhs, r.rhs, r.abs_residual, r.rel_residual) for k, r in enumerate(reports.values())]
        self.writer.write_csv("identities.csv", "identity,lhs,rhs,abs_residual,rel_residual", rows)
        report: Dict[str, Any] = {
            "solution": self._solution_summary(solution),
            "order": list(reports),
            **{name: r.to_dict() for name, r in reports.items()},
        }
        if ident.Psi == "profile" and model.limit is not None:
            report["profile_decomposition"] = psi_q_decomposition(u, model, model.limit, R).to_dict()
        return report

    def run_waveguide(self) -> Dict[str, Any]:
        wg = self.config.waveguide
        eps = wg.epsilon_list
        params = WaveguideParams(wg.lam, eps[0], wg.x_max, wg.y_max, wg.nodes)
        pool = mapper(self.config.workers, "waveguide", self.show_progress)

        blowup = tangential_blowup(params, eps, wg.refine_tol, mapper=pool)
        energy = conjugated_energy(params, wg.R_max)
        norms = source_norms(params, eps, wg.R_max, mapper=pool)
        coulomb, lam2 = coulomb_ratio(params)
        solves_eikonal, mismatch = phase_diagnostic(params)

        self.grid_meta = params.to_dict()
        rows = [
            (e, t, energy.value, b, tu)
            for e, t, b, tu in zip(eps, blowup.T, norms.besov, norms.triple_u)
        ]
        self.writer.write_csv("waveguide.csv", "epsilon,T,conjugated_energy,N_f,triple_u", rows)
        self.writer.write_json("fit.json", {"slope": blowup.slope, "intercept": blowup.intercept, "r2": blowup.r2})
        contrast = blowup.growth_ratio >= 2.0 and norms.stability_ratio <= 1.1
        return {
            "blowup": blowup.to_dict(),
            "conjugated_energy": energy.to_dict(),
            "source_norms": norms.to_dict(),
            "coulomb_ratio": {"value": coulomb, "lambda_squared": lam2},
            "phase_solves_eikonal": solves_eikonal,
            "phase_mismatch": mismatch,
            "contrast": contrast,
        }

    # -- dispatch ------------------------------------------------------------

    RUNNERS = {
        "solve": "run_solve",
        "norms": "run_norms",
        "rays": "run_rays",
        "identities": "run_identities",
        "waveguide": "run_waveguide",
        "concentration": "run_concentration",
        "sommerfeld-compare": "run_sommerfeld_compare",
        "eps-sweep": "run_eps_sweep",
    }

    def run(self) -> RunResult:
        name = self.config.experiment
        runner = getattr(self, self.RUNNERS[name])
        logger.info(f"Running experiment '{name}' into {self.output_dir}")
        try:
            report = runner()
            data = self.config.to_dict()
            self.writer.write_json("report.json", {"experiment": name, **report})
            self.writer.write_json("provenance.json", provenance(data, self.grid_meta))
        except Exception:
            self.writer.discard()
            raise
        logger.info(f"Experiment '{name}' wrote {len(self.writer.written)} file(s)")
        return RunResult(name, self.output_dir, list(self.writer.written), report)


def default_output_dir(config: ExperimentConfig) -> Path:
    if config.output_dir:
        return Path(config.output_dir)
    return Path(get_config().output.root) / config.experiment


def run(config: ExperimentConfig, output_dir: Optional[Path] = None, show_progress: bool = True) -> RunResult:
    """Run one experiment; artifacts of a failed run are removed and the error re-raised."""
    out = Path(output_dir) if output_dir is not None else default_output_dir(config)
    return ExperimentService(config, out, show_progress).run()


def eps_sweep(config: ExperimentConfig, output_dir: Optional[Path] = None) -> RunResult:
    return run(replace(config, experiment="eps-sweep").validate(), output_dir)


def sommerfeld_compare(config: ExperimentConfig, output_dir: Optional[Path] = None) -> RunResult:
    return run(replace(config, experiment="sommerfeld-compare").validate(), output_dir)


def concentration_experiment(config: ExperimentConfig, output_dir: Optional[Path] = None) -> RunResult:
    return run(replace(config, experiment="concentration").validate(), output_dir)
