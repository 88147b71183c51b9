"""Command-line front end: ``lqg-pbe {solve,simulate,verify,export}``.

Game specs and reports are JSON; trajectories and exports are JSON lines.
Floats go through ``json`` which writes the shortest round-trip repr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .belief_filters import NumericalFailure, build_public_recursion
from .equilibrium_solver import IllPosedStageGame, SolverOptions, StageSingularError, solve_equilibrium
from .game_model import GameSpec, GameSpecError, make_game
from .simulation import monte_carlo, sample_path
from .strategy import StrategyProfile
from .verification import certify_equilibrium, consistency_report

SPEC_KEYS = ("n_players", "horizon", "dim_v", "dim_a", "prior_cov", "noise_cov", "reward_mat")
COMMANDS = ("solve", "simulate", "verify", "export")
EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class SpecLoadError(ValueError):
    pass


def load_spec(path) -> GameSpec:
    """Read a JSON game spec and validate it.

    Raises :class:`SpecLoadError` with line and column on malformed JSON or a
    missing key; validation errors from the game model pass through.
    """
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecLoadError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise SpecLoadError(f"{path}: top level must be an object")
    missing = [k for k in SPEC_KEYS if k not in data]
    if missing:
        raise SpecLoadError(f"{path}: missing key {missing[0]!r}")
    return make_game(*(data[k] for k in SPEC_KEYS))


def dump_spec(spec: GameSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=1) + "\n")


@dataclass(frozen=True)
class RunConfig:
    command: str
    spec_path: str
    output_path: str = ""
    seed: int = 0
    n_paths: int = 100_000
    damping: float = 0.5
    tol: float = 1e-9
    max_iter: int = 500
    threads: int = 1
    deviation_grid: int = 16
    trajectories: int = 0
    profile_path: str = ""

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if not self.spec_path and self.command != "export":
            raise ValueError("--spec is required")
        if not self.output_path:
            raise ValueError("--out is required")
        for name in ("n_paths", "max_iter", "threads", "deviation_grid", "tol", "damping"):
            if not getattr(self, name) > 0:
                raise ValueError(f"--{name.replace('_', '-')} must be positive")
        if self.seed < 0:
            raise ValueError("--seed must be non-negative")
        if self.deviation_grid > 16:
            raise ValueError("--deviation-grid is at most 16")
        if self.trajectories < 0:
            raise ValueError("--trajectories must be non-negative")


def _header(config: RunConfig) -> dict:
    return {"tool": "lqg-pbe", "version": __version__, "config": asdict(config), "seed": config.seed}


def _write_json(path, payload: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def _write_lines(path, records) -> int:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
            count += 1
    return count


def _solution_payload(spec, result) -> dict:
    rec = result.recursion
    return {
        "spec": spec.to_dict(),
        "report": result.report(),
        "profile": result.profile.to_dict(),
        "sigma": [[s.tolist() for s in row] for row in rec.sigma],
        "cross_coeff": [[e.tolist() for e in row] for row in rec.cross_coeff],
        "values": result.values.mats.tolist(),
    }


def load_profile(path, spec: GameSpec) -> StrategyProfile:
    """Profile from a ``solve`` output or from its line-delimited export."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".jsonl":
        prof = StrategyProfile.zeros(spec)
        L, M, c = prof.L.copy(), prof.M.copy(), prof.c.copy()
        for line in text.splitlines():
            r = json.loads(line)
            if r.get("record") != "coefficients":
                continue
            t, i = r["stage"] - 1, r["player"] - 1
            L[t, i], M[t, i], c[t, i] = r["L"], r["M"], r["c"]
        return StrategyProfile(L, M, c).check(spec)
    data = json.loads(text)
    return StrategyProfile.from_dict(data["profile"]).check(spec)


def _obtain_profile(spec, config):
    """(profile, recursion, solve report) from --profile or a fresh solve."""
    if config.profile_path:
        prof = load_profile(config.profile_path, spec)
        return prof, build_public_recursion(spec, prof.L), {"source": config.profile_path}
    res = solve_equilibrium(spec, SolverOptions(config.damping, config.tol, config.max_iter))
    return res.profile, res.recursion, res.report()


def _not_converged(report: dict) -> bool:
    return report.get("converged") is False


def _cmd_solve(spec, config):
    res = solve_equilibrium(spec, SolverOptions(config.damping, config.tol, config.max_iter))
    _write_json(config.output_path, {**_header(config), **_solution_payload(spec, res)})
    if not res.converged:
        return EXIT_FAILED, f"not converged: residual={res.residual:.3e} iterations={res.n_iter}"
    return EXIT_OK, f"converged: iterations={res.n_iter} residual={res.residual:.3e}"


def _cmd_simulate(spec, config):
    prof, rec, solve_report = _obtain_profile(spec, config)
    mc = monte_carlo(spec, prof, rec, config.n_paths, config.seed, config.threads)
    payload = {**_header(config), "solve": solve_report, "monte_carlo": mc.to_dict()}
    if config.trajectories:
        traj_path = str(Path(config.output_path).with_suffix("")) + ".trajectories.jsonl"
        records = ({"path": k, **r} for k in range(config.trajectories)
                   for r in sample_path(spec, prof, rec, config.seed, k).records())
        _write_lines(traj_path, records)
        payload["trajectories"] = traj_path
    _write_json(config.output_path, payload)
    if _not_converged(solve_report):
        return EXIT_FAILED, "not converged: simulated the last iterate"
    return EXIT_OK, f"simulated {config.n_paths} paths"


def _cmd_verify(spec, config):
    prof, rec, solve_report = _obtain_profile(spec, config)
    cons = consistency_report(spec, prof, config.n_paths, config.seed, rec, config.threads)
    cert = certify_equilibrium(spec, prof, config.n_paths, config.seed, rec, config.threads,
                               grid_size=config.deviation_grid)
    payload = {**_header(config), "solve": solve_report, "consistency": cons.to_dict(),
               "deviations": cert.to_dict()}
    _write_json(config.output_path, payload)
    print(cons.to_text(), file=sys.stderr)
    if _not_converged(solve_report):
        return EXIT_FAILED, "not converged: verified the last iterate"
    if not cons.passed:
        failed = [c for c in cons.checks if c.status == "fail"]
        return EXIT_FAILED, f"consistency failed: {failed[0].claim} ({failed[0].detail})"
    if not cert.passed:
        v = cert.violations[0].deviation
        return EXIT_FAILED, f"deviation gain detected: player={v.player + 1} stage={v.stage + 1}"
    return EXIT_OK, f"verified: {len(cons.checks)} checks, {len(cert.results)} deviations"


def export_records(data: dict):
    """Flatten a JSON artifact written by this tool into line records."""
    header = {k: data[k] for k in ("tool", "version", "config", "seed") if k in data}
    yield {"record": "header", **header}
    if "profile" in data:
        prof = data["profile"]
        for t, row in enumerate(prof["L"]):
            for i in range(len(row)):
                yield {"record": "coefficients", "stage": t + 1, "player": i + 1,
                       "L": prof["L"][t][i], "M": prof["M"][t][i], "c": prof["c"][t][i]}
        for t, row in enumerate(data.get("sigma", [])):
            for i, sig in enumerate(row):
                yield {"record": "public", "stage": t + 1, "player": i + 1, "sigma": sig,
                       "cross_coeff": data["cross_coeff"][t][i], "value": data["values"][t][i]}
        yield {"record": "report", **data.get("report", {})}
    if "monte_carlo" in data:
        yield {"record": "monte_carlo", **data["monte_carlo"]}
    if "consistency" in data:
        for c in data["consistency"]["checks"]:
            yield {"record": "check", **c}
    if "deviations" in data:
        for d in data["deviations"]["results"]:
            yield {"record": "deviation", **d}


def _cmd_export(spec, config):
    if not config.profile_path:
        return EXIT_INPUT, "export needs --in pointing at a prior artifact"
    src = Path(config.profile_path)
    if src.suffix == ".jsonl":
        lines = [json.loads(line) for line in src.read_text().splitlines() if line.strip()]
        n = _write_lines(config.output_path, lines)
    else:
        n = _write_lines(config.output_path, export_records(json.loads(src.read_text())))
    return EXIT_OK, f"exported {n} records"


HANDLERS = {"solve": _cmd_solve, "simulate": _cmd_simulate, "verify": _cmd_verify, "export": _cmd_export}


def run(config: RunConfig) -> tuple[int, str]:
    """Execute one command; returns ``(exit_status, one_line_reason)``."""
    try:
        spec = None if config.command == "export" else load_spec(config.spec_path)
        return HANDLERS[config.command](spec, config)
    except (SpecLoadError, GameSpecError) as exc:
        return EXIT_INPUT, f"invalid spec: {exc}"
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        return EXIT_INPUT, f"input error: {exc}"
    except (IllPosedStageGame, StageSingularError, NumericalFailure) as exc:
        return EXIT_NUMERIC, f"numerical failure: {exc}"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lqg-pbe", description="Solve, simulate and verify linear "
                                "equilibria of LQG games with a hidden Gaussian state.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--spec", required=name != "export", default="", help="JSON game spec")
        s.add_argument("--out", required=True, help="output file")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--paths", type=int, default=100_000)
        s.add_argument("--damping", type=float, default=0.5)
        s.add_argument("--tol", type=float, default=1e-9)
        s.add_argument("--max-iter", type=int, default=500)
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--deviation-grid", type=int, default=16, help="deviations per (player, stage), up to 16")
        s.add_argument("--trajectories", type=int, default=0, help="sampled paths to dump (simulate)")
        s.add_argument("--profile", "--in", dest="profile", default="",
                       help="prior solve output to reuse; the artifact to export")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = RunConfig(args.command, args.spec, args.out, args.seed, args.paths, args.damping,
                           args.tol, args.max_iter, args.threads, args.deviation_grid,
                           args.trajectories, args.profile)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    status, reason = run(config)
    print(reason, file=sys.stderr if status else sys.stdout)
    return status


if __name__ == "__main__":
    sys.exit(main())
