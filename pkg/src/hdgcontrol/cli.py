"""Command-line driver.

    hdgcontrol run --problem example1 --k 1 --theta 0.6 --budget 20000 --out out/ex1
    hdgcontrol compare out/theta02 out/theta06 --out out/cmp

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
from dataclasses import asdict, dataclass, fields
import json
import logging
import math
from pathlib import Path
import sys

from .adaptivity import AfemError, afem_run, trace_dofs
from .control import FixedPointConfig, FixedPointError
from .estimator import estimate
from .hdg import ConfigurationError, SolverError
from .io import (convergence_svg, loglog_svg, read_mesh, read_records, read_records_meta,
                 solution_point_data, write_records, write_vtk)
from .problems import PROBLEMS, get_problem

log = logging.getLogger("hdgcontrol")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
EMIT_CHOICES = ("csv", "vtk", "svg")


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    problem: str = "example1"
    k: int = 1
    mode: str = "adaptive"
    theta: float = 0.6
    budget: int = 20_000
    fp_tol: float = 1e-8
    fp_max: int = 50
    rho: float = 1.0
    out: str = "out"
    emit: tuple = EMIT_CHOICES
    mesh: str | None = None
    solver: str = "cg"

    def validate(self) -> "RunConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError("problem", f"unknown problem {self.problem!r}; "
                                         f"choose from {sorted(PROBLEMS)}")
        if not isinstance(self.k, int) or isinstance(self.k, bool) or self.k not in (1, 2, 3):
            raise ConfigError("k", f"must be 1, 2 or 3, got {self.k!r}")
        if self.mode not in ("adaptive", "uniform"):
            raise ConfigError("mode", f"must be 'adaptive' or 'uniform', got {self.mode!r}")
        if not _is_number(self.theta) or not 0 < self.theta <= 1:
            raise ConfigError("theta", f"must lie in (0, 1], got {self.theta!r}")
        if not isinstance(self.budget, int) or isinstance(self.budget, bool) or self.budget <= 0:
            raise ConfigError("budget", f"must be a positive integer, got {self.budget!r}")
        if not _is_number(self.fp_tol) or not self.fp_tol > 0:
            raise ConfigError("fp_tol", f"must be positive, got {self.fp_tol!r}")
        if not isinstance(self.fp_max, int) or isinstance(self.fp_max, bool) or self.fp_max < 1:
            raise ConfigError("fp_max", f"must be a positive integer, got {self.fp_max!r}")
        if not _is_number(self.rho) or not 0 < self.rho <= 1:
            raise ConfigError("rho", f"must lie in (0, 1], got {self.rho!r}")
        if not isinstance(self.out, str) or not self.out:
            raise ConfigError("out", "must be a non-empty path")
        bad = [e for e in self.emit if e not in EMIT_CHOICES]
        if bad:
            raise ConfigError("emit", f"unknown flags {bad}; choose from {list(EMIT_CHOICES)}")
        if self.solver not in ("cg", "direct"):
            raise ConfigError("solver", f"must be 'cg' or 'direct', got {self.solver!r}")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration field")
        data = dict(data)
        if "emit" in data:
            data["emit"] = _parse_emit(data["emit"])
        return cls(**data).validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["emit"] = list(self.emit)
        return d


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _parse_emit(value):
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v != "none"]
    if not isinstance(value, (list, tuple)):
        raise ConfigError("emit", f"expected a list of flags, got {value!r}")
    return tuple(value)


def load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError("config", f"{path} must hold a flat JSON object")
    return data


def run(config: RunConfig):
    """Run one AFEM experiment and write its artifacts under ``config.out``."""
    config.validate()
    problem = get_problem(config.problem)
    if config.mesh:
        problem = problem.with_data(initial_mesh=read_mesh(config.mesh))
    n0 = trace_dofs(problem.initial_mesh, config.k)
    if config.budget <= n0:
        raise ConfigError("budget", f"must exceed the {n0} DOFs of the initial mesh")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = config.to_dict()
    fp = FixedPointConfig(tol=config.fp_tol, max_iter=config.fp_max, rho=config.rho,
                          solver=config.solver)
    try:
        result = afem_run(problem, config.k, config.theta, config.budget, config.mode, fp)
    except AfemError as exc:
        write_records(exc.records, out / "records.csv", meta)
        raise
    write_records(result.records, out / "records.csv", meta)
    if "vtk" in config.emit and result.solution is not None:
        est = result.estimate or estimate(result.solution, problem)
        write_vtk(result.mesh, out / "mesh.vtk", solution_point_data(result.solution),
                  {"eta_K": est.eta_K2 ** 0.5}, title=f"{config.problem} k={config.k}")
    if "svg" in config.emit:
        convergence_svg(result.records, config.k, out / "convergence.svg",
                        title=f"{config.problem}, k={config.k}, {config.mode}")
    return result


def _run_dir(path) -> tuple[Path, dict]:
    """A completed run directory and its stored configuration.

    A JSON config file is accepted too; its run is performed first unless
    its output directory already holds records.
    """
    p = Path(path)
    if p.is_file():
        cfg = RunConfig.from_dict(load_config(p))
        p = Path(cfg.out)
        if not (p / "records.csv").exists():
            run(cfg)
    records = p / "records.csv"
    if not records.exists():
        raise FileNotFoundError(f"{p}: no records.csv; is this a run directory?")
    meta = read_records_meta(records)
    if "problem" not in meta:
        raise ValueError(f"{records}: no run metadata")
    return p, meta


def _label(cfg: dict) -> str:
    if cfg.get("mode") == "uniform":
        return f"uniform k={cfg['k']}"
    return f"adaptive k={cfg['k']} theta={cfg['theta']:g}"


def compare(run_a, run_b, out) -> list[dict]:
    """Merge two completed runs by n_dof and overlay their convergence curves."""
    (pa, ca), (pb, cb) = _run_dir(run_a), _run_dir(run_b)
    if ca.get("problem") != cb.get("problem"):
        raise ConfigError("problem", f"runs solve different problems "
                                     f"({ca.get('problem')!r} vs {cb.get('problem')!r})")
    ra, rb = read_records(pa / "records.csv"), read_records(pb / "records.csv")
    by_n = {}
    for tag, rows in (("A", ra), ("B", rb)):
        for r in rows:
            row = by_n.setdefault(r["n_dof"], {"n_dof": r["n_dof"]})
            row[f"eta_{tag}"], row[f"E_{tag}"] = r["eta"], r["E"]
    cols = ("n_dof", "eta_A", "E_A", "eta_B", "E_B")
    merged = [by_n[n] for n in sorted(by_n)]
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "compare.csv", "w") as fh:
        fh.write(f"# A = {pa} ({_label(ca)}); B = {pb} ({_label(cb)})\n")
        fh.write(",".join(cols) + "\n")
        for row in merged:
            fh.write(",".join("" if c not in row else
                              str(row[c]) if c == "n_dof" else repr(float(row[c]))
                              for c in cols) + "\n")
    series = []
    for tag, rows, cfg in (("A", ra, ca), ("B", rb, cb)):
        n = [r["n_dof"] for r in rows]
        series.append((f"eta, {_label(cfg)}", n, [r["eta"] for r in rows]))
        if any(math.isfinite(r["E"]) for r in rows):
            series.append((f"E, {_label(cfg)}", n, [r["E"] for r in rows]))
    loglog_svg(series, out / "compare.svg", title=f"{ca['problem']}: {_label(ca)} vs {_label(cb)}",
               xlabel="trace DOFs N", ylabel="error / estimator",
               reference_slope=-min(ca["k"], cb["k"]) / 2)
    return merged


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdgcontrol", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one adaptive or uniform experiment")
    r.add_argument("--config", help="flat JSON file with run settings")
    r.add_argument("--problem", choices=sorted(PROBLEMS))
    r.add_argument("--k", type=int)
    r.add_argument("--theta", type=float)
    r.add_argument("--budget", type=int)
    r.add_argument("--mode", choices=("adaptive", "uniform"))
    r.add_argument("--fp-tol", dest="fp_tol", type=float)
    r.add_argument("--fp-max", dest="fp_max", type=int)
    r.add_argument("--rho", type=float)
    r.add_argument("--out")
    r.add_argument("--emit", help="comma-separated subset of csv,vtk,svg, or 'none'")
    r.add_argument("--mesh", help="initial mesh in the plain-text format")
    r.add_argument("--solver", choices=("cg", "direct"))

    c = sub.add_parser("compare", help="overlay two runs of the same problem")
    c.add_argument("run_a", help="run directory or config JSON")
    c.add_argument("run_b", help="run directory or config JSON")
    c.add_argument("--out", default="compare")
    return parser


def config_from_args(args) -> RunConfig:
    data = load_config(args.config) if args.config else {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            data[f.name] = v
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            result = run(config_from_args(args))
            last = result.records[-1]
            print(f"{len(result.records)} meshes, N={last.n_dofs}, eta={last.eta:.4e}, "
                  f"E={last.error:.4e} ({result.stop_reason})")
        else:
            merged = compare(args.run_a, args.run_b, args.out)
            print(f"merged {len(merged)} rows into {Path(args.out) / 'compare.csv'}")
    except (ConfigError, ConfigurationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AfemError, FixedPointError, SolverError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, ValueError) as exc:
        # MeshError and malformed record files are ValueErrors raised while reading input
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
