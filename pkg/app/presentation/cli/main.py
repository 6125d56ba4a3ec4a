import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from sqlalchemy.orm import Session

from app.db import Base, SessionLocal, engine
from app.domain.entities.project import Project
from app.domain.errors import ConfigError, MemoryCapError, SwitchAbsError
from app.domain.services.bound_service import BoundService
from app.domain.services.pipeline_service import PipelineService
from app.infrastructure.dependencies import build_pipeline_service
from app.infrastructure.models.artifact_model import ArtifactModel  # noqa: F401
from app.infrastructure.repositories.report_repository import ReportRepository
from app.presentation.cli.config_schemas import ProjectBuilder, parse_config, read_config
from app.settings import configure_logging, env

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 2
EXIT_UNEXPECTED = 1

STAGES = ("abstract", "certify", "compose", "bound", "synthesize", "simulate", "report", "run")

# flag name -> (environment suffix, converter)
OVERRIDES: Dict[str, tuple] = {
    "delta": ("DELTA", float),
    "eps": ("EPS", float),
    "horizon": ("HORIZON", int),
    "seed": ("SEED", int),
    "threads": ("THREADS", int),
    "out": ("OUT", str),
}


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="switchabs",
        description="Compositional finite abstractions and switching controllers for networks of stochastic switched systems.",
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    commands = parser.add_subparsers(dest="command", required=True)

    for stage in STAGES:
        sub = commands.add_parser(stage, help=f"run the {stage} stage" if stage != "run" else "run every stage")
        sub.add_argument("--config", type=Path, required=True, help="project JSON file")
        sub.add_argument("--delta", type=float, help="state discretization parameter δ̄ for every subsystem")
        sub.add_argument("--eps", type=float, help="output closeness threshold ε")
        sub.add_argument("--horizon", type=int, help="time horizon T_d of bound and synthesis")
        sub.add_argument("--seed", type=int, help="Monte Carlo seed")
        sub.add_argument("--threads", type=int, help="worker threads for abstraction")
        sub.add_argument("--out", type=str, help="output directory")
        sub.add_argument("--subsystems", type=int, help="number of subsystems of a templated network")

    memory = commands.add_parser("memory", help="memory table of per-subsystem and monolithic abstractions")
    memory.add_argument("--width", type=float, required=True, help="state box width")
    memory.add_argument("--deltas", type=float, nargs="+", required=True)
    memory.add_argument("--modes", type=int, default=2)
    memory.add_argument("--subsystems", type=int, required=True)
    memory.add_argument("--out", type=str, help="directory for memory.csv")

    serve = commands.add_parser("serve", help="serve the HTTP interface")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser.parse_args(argv)


def _resolve(args: argparse.Namespace, name: str) -> Any:
    """Flag, then $SWABS_<NAME>, else None (the config file or default applies)"""
    value = getattr(args, name, None)
    if value is not None:
        return value
    suffix, convert = OVERRIDES[name]
    raw = env(suffix)
    if raw is None or raw == "":
        return None
    try:
        return convert(raw)
    except ValueError:
        raise ConfigError(f"SWABS_{suffix}={raw!r} is not a valid {convert.__name__}", key=f"SWABS_{suffix}")


def _each(section: Any) -> List[dict]:
    return section if isinstance(section, list) else [section]


def apply_overrides(data: dict, args: argparse.Namespace) -> dict:
    """Fold command-line flags and environment overrides into the raw configuration"""
    data = json.loads(json.dumps(data))
    delta = _resolve(args, "delta")
    if delta is not None:
        for grid in _each(data.setdefault("grid", {})):
            grid["state_delta"] = delta
            grid.pop("state_counts", None)
    epsilon = _resolve(args, "eps")
    if epsilon is not None:
        data.setdefault("bound", {})["epsilon"] = epsilon
    horizon = _resolve(args, "horizon")
    if horizon is not None:
        data.setdefault("bound", {})["horizon"] = horizon
        if data.get("synthesis") is not None:
            data["synthesis"]["horizon"] = horizon
    seed = _resolve(args, "seed")
    if seed is not None:
        if data.get("simulation") is not None:
            data["simulation"]["seed"] = seed
        data.setdefault("validation", {})["seed"] = seed
    threads = _resolve(args, "threads")
    if threads is not None:
        data["threads"] = threads
    out = _resolve(args, "out")
    if out is not None:
        data["output_dir"] = out
    if getattr(args, "subsystems", None) is not None:
        data.setdefault("network", {})["size"] = args.subsystems
    return data


def load_project(args: argparse.Namespace) -> Project:
    path = Path(args.config)
    config = parse_config(apply_overrides(read_config(path), args))
    return ProjectBuilder(path.parent).build_project(config)


def open_session() -> Session:
    """Registry session, creating the tables on first use"""
    Base.metadata.create_all(bind=engine)
    return SessionLocal()


def _stage_output(stage: str, result: Any) -> Any:
    if stage == "abstract":
        return [
            {"subsystem": i, "rows": mdp.row_count, "entries": mdp.nnz, "fingerprint": mdp.fingerprint}
            for i, mdp in enumerate(result)
        ]
    if stage == "certify":
        return [
            {
                "subsystem": i,
                "provenance": c.provenance.value,
                "kappa": c.kappa,
                "psi_coefficient": c.psi_coefficient,
                "mu": c.mu,
                "dwell_time": c.dwell_time,
            }
            for i, c in enumerate(result)
        ]
    if stage == "compose":
        return {"small_gain": result["small_gain"], "composed": result["composed"]}
    if stage == "synthesize":
        return [{"subsystem": i, "horizon": p.horizon, "fingerprint": p.fingerprint} for i, p in enumerate(result)]
    return result


def run_stage(stage: str, pipeline: PipelineService, project: Project) -> Any:
    actions: Dict[str, Callable[[Project], Any]] = {
        "abstract": pipeline.abstract,
        "certify": pipeline.certify,
        "compose": pipeline.compose,
        "bound": pipeline.bound,
        "synthesize": pipeline.synthesize,
        "simulate": pipeline.simulate,
        "report": pipeline.report,
        "run": pipeline.run,
    }
    return _stage_output(stage, actions[stage](project))


def _error(e: Exception, stage: Optional[str]) -> dict:
    payload = {"error": type(e).__name__, "message": str(e), "stage": stage}
    if isinstance(e, ConfigError):
        payload["key"] = e.key
    if isinstance(e, MemoryCapError):
        payload["estimate_gb"] = e.estimate_gb
    return payload


def _memory(args: argparse.Namespace) -> Any:
    rows = BoundService().memory_table(args.width, args.deltas, args.modes, args.subsystems)
    out = _resolve(args, "out")
    if out is not None:
        ReportRepository(out).write_memory("memory.csv", rows)
    return [row.__dict__ for row in rows]


def _serve(args: argparse.Namespace) -> None:
    import uvicorn

    uvicorn.run("app.api:app", host=args.host, port=args.port)


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    configure_logging(args.log_level)
    stage = args.command
    try:
        if stage == "serve":
            _serve(args)
            return EXIT_OK
        if stage == "memory":
            print(json.dumps(_memory(args), indent=2))
            return EXIT_OK
        project = load_project(args)
        db = open_session()
        try:
            pipeline = build_pipeline_service(db, threads=project.threads)
            result = run_stage(stage, pipeline, project)
        finally:
            db.close()
        print(json.dumps(result, indent=2, sort_keys=True, default=str))
        return EXIT_OK
    except SwitchAbsError as e:
        logger.error("%s failed: %s", stage, e)
        print(json.dumps(_error(e, stage)), file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:
        logger.exception("%s failed unexpectedly", stage)
        print(json.dumps(_error(e, stage)), file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    raise SystemExit(main())
