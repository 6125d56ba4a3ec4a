import hashlib
import json
import logging
import math
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from app.domain.entities.artifact import Artifact, ArtifactKind, Stage
from app.domain.entities.bound import BoundQuery
from app.domain.entities.certificate import SpsfCertificate
from app.domain.entities.finite_mdp import FiniteMdp
from app.domain.entities.grid import ABSORBING, UniformGrid
from app.domain.entities.kinf import KInfFn
from app.domain.entities.policy import Policy, SafetySpec
from app.domain.entities.project import CertificateSourceKind, GridPlan, Project
from app.domain.entities.rollout import RolloutConfig
from app.domain.entities.switched_system import SubsystemSpec
from app.domain.errors import (
    ArtifactIntegrityError,
    CertificateError,
    CompositionError,
    InvalidInputError,
)
from app.domain.services.abstraction_service import AbstractionService
from app.domain.services.bound_service import BoundService
from app.domain.services.certificate_service import CertificateService
from app.domain.services.composition_service import CompositionService
from app.domain.services.grid_service import GridService
from app.domain.services.simulation_service import SimulationService
from app.domain.services.synthesis_service import SynthesisService
from app.infrastructure.repositories.artifact_repository import ArtifactRepository
from app.infrastructure.repositories.binary_format import sha256_file
from app.infrastructure.repositories.mdp_repository import MdpRepository
from app.infrastructure.repositories.policy_repository import PolicyRepository
from app.infrastructure.repositories.report_repository import ReportRepository

logger = logging.getLogger(__name__)

VALIDATION_PASS_FRACTION = 0.99


def _digest(payload) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


class PipelineService:
    """Runs the stages abstract → certify → compose → bound → synthesize → simulate → report.

    Every stage writes its outputs under the project's output directory and
    records them in the artifact registry; downstream stages read their inputs
    back through the registry only.
    """

    def __init__(
        self,
        artifacts: ArtifactRepository,
        mdps: MdpRepository,
        policies: PolicyRepository,
        grids: GridService,
        abstraction: AbstractionService,
        certificates: CertificateService,
        composition: CompositionService,
        bounds: BoundService,
        synthesis: SynthesisService,
        simulation: SimulationService,
    ):
        self.artifacts = artifacts
        self.mdps = mdps
        self.policies = policies
        self.grids = grids
        self.abstraction = abstraction
        self.certificates = certificates
        self.composition = composition
        self.bounds = bounds
        self.synthesis = synthesis
        self.simulation = simulation

    # registry plumbing

    def _record(
        self,
        project: Project,
        stage: Stage,
        kind: ArtifactKind,
        path: Path,
        subsystem: Optional[int] = None,
    ) -> Artifact:
        return self.artifacts.create(
            Artifact(
                id=None,
                run_name=project.name,
                stage=stage,
                kind=kind,
                path=str(path),
                sha256=sha256_file(path),
                subsystem=subsystem,
            )
        )

    def _upstream(self, project: Project, kind: ArtifactKind, subsystem: Optional[int] = None) -> Path:
        artifact = self.artifacts.require(project.name, kind, subsystem)
        path = Path(artifact.path)
        if path.exists() and sha256_file(path) != artifact.sha256:
            raise ArtifactIntegrityError(f"{path} changed since the {artifact.stage.value} stage wrote it")
        return path

    def _optional(self, project: Project, kind: ArtifactKind) -> Optional[Path]:
        artifact = self.artifacts.get_latest(project.name, kind)
        return None if artifact is None else Path(artifact.path)

    # grids

    def state_grid(self, spec: SubsystemSpec, plan: GridPlan) -> UniformGrid:
        return self.grids.build_grid(spec.state_box, plan.state_delta, plan.state_counts)

    def input_grid(self, spec: SubsystemSpec, plan: GridPlan) -> UniformGrid:
        if spec.internal_dim == 0:
            return UniformGrid(np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64))
        if plan.input_counts is not None or plan.input_delta is not None:
            return self.grids.build_grid(spec.input_box, plan.input_delta, plan.input_counts)
        if plan.state_delta is None:
            raise InvalidInputError(f"'{spec.name}' needs an input δ̄ or input counts")
        return self.grids.build_grid(spec.input_box, plan.state_delta)

    def _grids(self, project: Project):
        return [
            (self.state_grid(spec, plan), self.input_grid(spec, plan))
            for spec, plan in zip(project.network.subsystems, project.grids)
        ]

    # stages

    def abstract(self, project: Project) -> List[FiniteMdp]:
        """One finite MDP per subsystem; identical subsystems on identical grids share a file"""
        started = time.perf_counter()
        shared: Dict[str, tuple] = {}
        result = []
        for i, (spec, (state_grid, input_grid)) in enumerate(
            zip(project.network.subsystems, self._grids(project))
        ):
            key = _digest([spec.fingerprint(), state_grid.to_dict(), input_grid.to_dict()])
            if key not in shared:
                mdp = self.abstraction.build_finite_mdp(spec, state_grid, input_grid)
                path = self.mdps.save(mdp, project.out_dir / "mdp" / f"{key}.fmdp")
                shared[key] = (mdp, path)
            else:
                logger.info("subsystem %d reuses abstraction %s", i, key)
            mdp, path = shared[key]
            self._record(project, Stage.ABSTRACT, ArtifactKind.MDP, path, i)
            result.append(mdp)
        logger.info(
            "abstract stage: %d subsystems, %d distinct abstractions, %.2fs",
            len(result),
            len(shared),
            time.perf_counter() - started,
        )
        return result

    def load_abstractions(self, project: Project) -> List[FiniteMdp]:
        loaded: Dict[Path, FiniteMdp] = {}
        result = []
        for i in range(project.network.size):
            path = self._upstream(project, ArtifactKind.MDP, i)
            if path not in loaded:
                loaded[path] = self.mdps.load(path)
            result.append(loaded[path])
        return result

    def certify(self, project: Project) -> List[SpsfCertificate]:
        reports = ReportRepository(project.out_dir)
        result = []
        for i, (spec, plan) in enumerate(zip(project.network.subsystems, project.certificates)):
            if plan.source == CertificateSourceKind.FILE:
                certificate = reports.load_certificate(plan.path)
                self.certificates.verify_certificate(certificate, spec)
                if not certificate.common_lyapunov and spec.dwell_time < certificate.dwell_time:
                    raise CertificateError(
                        f"'{spec.name}' has dwell time {spec.dwell_time}, "
                        f"its certificate needs {certificate.dwell_time}"
                    )
            else:
                certificate = self.certificates.derive_spsf_constants(
                    spec,
                    plan.matrices,
                    plan.kappa_bars,
                    plan.pis,
                    plan.epsilon,
                    pi_tilde=plan.pi_tilde,
                    delta_c=plan.delta_c,
                    common_lyapunov=plan.common_lyapunov,
                    kappa_ceiling=project.kappa_ceiling,
                    rho_ceiling=plan.rho_ceiling,
                )
            path = reports.save_certificate(f"certificates/subsystem_{i}.json", certificate)
            self._record(project, Stage.CERTIFY, ArtifactKind.CERTIFICATE, path, i)
            result.append(certificate)

        if project.validation.tuples > 0:
            self._validate_empirically(project, result, reports)
        return result

    def _validate_empirically(
        self, project: Project, certificates: List[SpsfCertificate], reports: ReportRepository
    ) -> None:
        mdps = self.load_abstractions(project)
        done: Dict[str, dict] = {}
        entries = []
        for i, (spec, certificate, mdp) in enumerate(
            zip(project.network.subsystems, certificates, mdps)
        ):
            key = _digest([spec.fingerprint(), certificate.to_dict(), mdp.state_grid.to_dict()])
            if key not in done:
                report = self.certificates.validate_spsf_empirical(
                    certificate,
                    spec,
                    mdp,
                    project.validation.tuples,
                    project.validation.inner_samples,
                    project.validation.seed,
                )
                if report.pass_fraction < VALIDATION_PASS_FRACTION:
                    logger.warning(
                        "'%s': only %.3f of sampled tuples satisfy the decrease condition",
                        spec.name,
                        report.pass_fraction,
                    )
                done[key] = report.to_dict()
            entries.append({"subsystem": i, **done[key]})
        path = reports.write_json("certificates/validation.json", entries)
        self._record(project, Stage.CERTIFY, ArtifactKind.VALIDATION, path)

    def load_certificates(self, project: Project) -> List[SpsfCertificate]:
        reports = ReportRepository(project.out_dir)
        return [
            reports.load_certificate(self._upstream(project, ArtifactKind.CERTIFICATE, i))
            for i in range(project.network.size)
        ]

    def compose(self, project: Project) -> dict:
        reports = ReportRepository(project.out_dir)
        certificates = self.load_certificates(project)
        lambda_bar = KInfFn.linear(project.lambda_bar)
        delta_f = KInfFn.linear(project.delta_f)
        graph = self.composition.assemble_gains(certificates, project.network, lambda_bar, delta_f)
        result = self.composition.check_small_gain(graph)
        if not result.feasible:
            reports.write_json(
                "composition.json", {"gains": graph.to_dict(), "small_gain": result.to_dict()}
            )
            raise CompositionError(
                f"small-gain condition fails: cycle {result.witness_cycle} has gain product "
                f"{result.witness_product or math.exp(result.max_cycle_mean):.6g} >= 1"
            )
        grids = self._grids(project)
        deltas = [state_grid.delta for state_grid, _ in grids]
        state_grids = [state_grid for state_grid, _ in grids]
        input_grids = [input_grid for _, input_grid in grids]
        mu_bar = None
        if project.matched_io:
            mismatched = self.composition.mismatched_interfaces(project.network, state_grids, input_grids)
            if mismatched:
                raise CompositionError(
                    f"matched_io is set but outputs of connections {mismatched} are not "
                    "input-grid centers; set composition.matched_io to false"
                )
        else:
            mu_bar = self.composition.quantization_matrix(project.network, input_grids)
        composed = self.composition.compose_ssf(
            certificates,
            graph,
            result,
            deltas,
            matched_io=project.matched_io,
            mu_bar=mu_bar,
            lambda_bar=lambda_bar,
            delta_f=delta_f,
        )
        payload = {
            "gains": graph.to_dict(),
            "small_gain": result.to_dict(),
            "composed": composed.to_dict(),
            "deltas": deltas,
            "matched_io": project.matched_io,
            "psi_coefficient": self.composition.matched_psi_coefficient(certificates, result.sigma),
        }
        if mu_bar is not None:
            payload["mu_bar"] = mu_bar.tolist()
        path = reports.write_json("composition.json", payload)
        self._record(project, Stage.COMPOSE, ArtifactKind.COMPOSITION, path)
        return payload

    def initial_value(self, project: Project, certificates: List[SpsfCertificate], sigma) -> float:
        """V₀ with â_i = Π_x(a_i); zero when the bound has no initial states"""
        plan = project.bound
        if plan.initial_states is None:
            return 0.0
        modes = plan.initial_modes or tuple(0 for _ in plan.initial_states)
        a_hat = []
        for (state_grid, _), a in zip(self._grids(project), plan.initial_states):
            cell, rep = self.grids.quantize(state_grid, a)
            if cell == ABSORBING:
                raise InvalidInputError(f"initial state {list(a)} lies outside the state box")
            a_hat.append(rep)
        return self.composition.initial_value(certificates, sigma, plan.initial_states, a_hat, modes)

    def bound(self, project: Project) -> dict:
        """Closeness guarantee and tables from the persisted certificates only"""
        reports = ReportRepository(project.out_dir)
        composition = reports.read_json(self._upstream(project, ArtifactKind.COMPOSITION))
        composed = composition["composed"]
        alpha = KInfFn.from_dict(composed["alpha"])
        kappa, psi = float(composed["kappa"]), float(composed["psi"])
        plan = project.bound
        v0 = 0.0
        if plan.initial_states is not None:
            v0 = self.initial_value(project, self.load_certificates(project), composed["sigma"])
        query = BoundQuery(alpha, kappa, psi, plan.epsilon, plan.horizon, v0)
        failure, branch = self.bounds.kushner_branch(v0, alpha(plan.epsilon), kappa, psi, plan.horizon)
        summary = {
            "epsilon": plan.epsilon,
            "horizon": plan.horizon,
            "v0": v0,
            "kappa": kappa,
            "psi": psi,
            "branch": branch,
            "failure_bound": failure,
            "guarantee": self.bounds.closeness_probability(query),
        }
        path = reports.write_json("bound.json", summary)
        self._record(project, Stage.BOUND, ArtifactKind.BOUND, path)

        if plan.deltas:
            rows = self.bounds.closeness_table(
                alpha,
                kappa,
                float(composition["psi_coefficient"]),
                plan.deltas,
                plan.epsilon,
                plan.horizon,
                v0,
                self.bounds.paper_closeness_reference() if plan.reference else None,
                psi_values=self._table_psi(project, composition, plan.deltas),
            )
            path = reports.write_closeness("closeness.csv", rows)
            self._record(project, Stage.BOUND, ArtifactKind.CLOSENESS, path)
        if plan.memory_width is not None and plan.memory_deltas:
            rows = self.bounds.memory_table(
                plan.memory_width,
                plan.memory_deltas,
                max(spec.mode_count for spec in project.network.subsystems),
                plan.memory_subsystems or project.network.size,
            )
            path = reports.write_memory("memory.csv", rows)
            self._record(project, Stage.BOUND, ArtifactKind.MEMORY, path)
        logger.info(
            "closeness over %d steps at ε=%g: at least %.4f (branch %d)",
            plan.horizon,
            plan.epsilon,
            summary["guarantee"],
            branch,
        )
        return summary

    def _table_psi(self, project: Project, composition: dict, deltas) -> Optional[List[float]]:
        """ψ per δ̄ with the input grids held fixed; None when interfaces are matched"""
        if "mu_bar" not in composition:
            return None
        certificates = self.load_certificates(project)
        mu_bar = np.asarray(composition["mu_bar"], dtype=float)
        return [
            self.composition.unmatched_psi(
                certificates,
                composition["composed"]["sigma"],
                [delta] * len(certificates),
                mu_bar,
                KInfFn.linear(project.lambda_bar),
                KInfFn.linear(project.delta_f),
            )
            for delta in deltas
        ]

    def synthesize(self, project: Project) -> List[Policy]:
        if project.synthesis is None:
            raise InvalidInputError("the configuration has no synthesis section")
        reports = ReportRepository(project.out_dir)
        plan = project.synthesis
        mdps = self.load_abstractions(project)
        shared: Dict[str, tuple] = {}
        result = []
        for i, (spec, mdp, box) in enumerate(zip(project.network.subsystems, mdps, plan.safe_boxes)):
            safety = SafetySpec(box, plan.horizon)
            safety.validate_against(spec.state_box)
            key = _digest(
                [mdp.fingerprint, mdp.state_grid.to_dict(), box.to_dict(), plan.horizon, plan.cooperative]
            )
            if key not in shared:
                policy = self.synthesis.safety_value_iteration(
                    mdp, safety, spec.dwell_time, cooperative=plan.cooperative
                )
                policy_path = self.policies.save(policy, project.out_dir / "policies" / f"{key}.spol")
                values_path = reports.write_values(f"values/{key}.csv", policy)
                shared[key] = (policy, policy_path, values_path)
            policy, policy_path, values_path = shared[key]
            self._record(project, Stage.SYNTHESIZE, ArtifactKind.POLICY, policy_path, i)
            self._record(project, Stage.SYNTHESIZE, ArtifactKind.VALUES, values_path, i)
            result.append(policy)
        return result

    def load_policies(self, project: Project) -> List[Policy]:
        loaded: Dict[Path, Policy] = {}
        result = []
        for i in range(project.network.size):
            path = self._upstream(project, ArtifactKind.POLICY, i)
            if path not in loaded:
                loaded[path] = self.policies.load(path)
            result.append(loaded[path])
        return result

    def simulate(self, project: Project) -> dict:
        if project.simulation is None:
            raise InvalidInputError("the configuration has no simulation section")
        reports = ReportRepository(project.out_dir)
        plan = project.simulation
        mdps = self.load_abstractions(project)
        policies = self.load_policies(project) if plan.use_policy else None
        controllers = None
        if policies is not None:
            controllers = [
                self.synthesis.refine_policy(policy, mdp.state_grid) for policy, mdp in zip(policies, mdps)
            ]
        horizon = plan.horizon
        if horizon is None:
            horizon = project.synthesis.horizon if project.synthesis is not None else project.bound.horizon
        config = RolloutConfig(
            runs=plan.runs,
            horizon=horizon,
            seed=plan.seed,
            initial_states=plan.initial_states,
            initial_modes=plan.initial_modes,
        )
        trajectories = self.simulation.rollout_pair(project.network, mdps, controllers, config)
        path = reports.write_trajectories("trajectories.csv", trajectories, plan.recorded_runs)
        self._record(project, Stage.SIMULATE, ArtifactKind.TRAJECTORIES, path)

        epsilon = project.bound.epsilon
        summary = {
            "runs": plan.runs,
            "seed": plan.seed,
            "horizon": horizon,
            "epsilon": epsilon,
            "deviation": self.simulation.empirical_deviation_probability(trajectories, epsilon).to_dict(),
        }
        if project.synthesis is not None:
            boxes = project.synthesis.safe_boxes
            summary["safety"] = self.simulation.empirical_safety(trajectories, boxes).to_dict()
            per_subsystem = []
            for i, mdp in enumerate(mdps):
                estimate = self.simulation.empirical_safety(trajectories, boxes, subsystem=i).to_dict()
                if policies is not None and horizon == policies[i].horizon:
                    cell = int(mdp.state_grid.cell_index(plan.initial_states[i]))
                    estimate["dp_value"] = (
                        0.0 if cell == ABSORBING else policies[i].initial_value(cell, plan.initial_modes[i])
                    )
                    estimate["abstract"] = self.simulation.empirical_safety(
                        trajectories, boxes, subsystem=i, abstract=True
                    ).to_dict()
                per_subsystem.append(estimate)
            summary["subsystem_safety"] = per_subsystem
        path = reports.write_json("monte_carlo.json", summary)
        self._record(project, Stage.SIMULATE, ArtifactKind.MONTE_CARLO, path)
        logger.info(
            "simulate stage: deviation frequency %.4f ± %.4f",
            summary["deviation"]["fraction"],
            summary["deviation"]["standard_error"],
        )
        return summary

    def report(self, project: Project) -> dict:
        """Summary JSON over every artifact of the run, with the conservativeness verdicts"""
        reports = ReportRepository(project.out_dir)
        bound = reports.read_json(self._upstream(project, ArtifactKind.BOUND))
        composition = reports.read_json(self._upstream(project, ArtifactKind.COMPOSITION))
        monte_carlo_path = self._optional(project, ArtifactKind.MONTE_CARLO)
        monte_carlo = None if monte_carlo_path is None else reports.read_json(monte_carlo_path)

        checks = {}
        if monte_carlo is not None:
            deviation = monte_carlo["deviation"]
            if monte_carlo["epsilon"] == bound["epsilon"] and monte_carlo["horizon"] == bound["horizon"]:
                checks["deviation_within_bound"] = (
                    deviation["fraction"] <= bound["failure_bound"] + 3 * deviation["standard_error"]
                )
            for i, estimate in enumerate(monte_carlo.get("subsystem_safety", [])):
                if "dp_value" in estimate:
                    abstract = estimate["abstract"]
                    checks[f"subsystem_{i}_safety_above_value"] = (
                        abstract["fraction"] >= estimate["dp_value"] - 3 * abstract["standard_error"]
                    )
        summary = {
            "run": project.name,
            "subsystems": project.network.size,
            "small_gain": composition["small_gain"],
            "composed": composition["composed"],
            "bound": bound,
            "monte_carlo": monte_carlo,
            "checks": checks,
            "artifacts": [
                {
                    "stage": artifact.stage.value,
                    "kind": artifact.kind.value,
                    "subsystem": artifact.subsystem,
                    "path": artifact.path,
                    "sha256": artifact.sha256,
                }
                for artifact in self.artifacts.get_by_run(project.name)
            ],
        }
        path = reports.write_json("summary.json", summary)
        self._record(project, Stage.REPORT, ArtifactKind.SUMMARY, path)
        for name, passed in checks.items():
            if not passed:
                logger.warning("report check %s failed", name)
        return summary

    def run(self, project: Project) -> dict:
        """All stages in order from a clean registry; synthesis and simulation run when configured"""
        forgotten = self.artifacts.delete_run(project.name)
        if forgotten:
            logger.info("forgot %d artifacts of earlier run '%s'", forgotten, project.name)
        self.abstract(project)
        self.certify(project)
        self.compose(project)
        self.bound(project)
        if project.synthesis is not None:
            self.synthesize(project)
        if project.simulation is not None:
            self.simulate(project)
        return self.report(project)
