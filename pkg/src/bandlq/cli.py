"""Command-line front end: model generation, pattern computation,
Lyapunov/Riccati solves, closed-loop simulation, and benchmark reports.

All matrices are written as Matrix Market files and all reports as CSV
with 17 significant digits. Runs are reproducible: a manifest records the
config hash, package version, and seeds, and every artifact except timing
files is byte-identical across repeated runs with the same config.
"""

from __future__ import annotations

import os

# honor the thread cap before any numerics library spins up its pools
_threads = os.environ.get("BANDLQ_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import __version__
from .control import (LqProblem, NewtonConfig, RiccatiDivergence, feedback,
                      metric_e, newton_step_matrices, simulate_closed_loop,
                      solve_riccati)
from .lyap_gp import FaberConfig, GpConfig, initial_guess, solve_lyap_gp
from .lyap_lsq import CglsConfig, assemble_reduced, solve_lyap_lsq
from .mmio import read_matrix, write_matrix, write_pattern
from .modelgen import DescriptorModel, GridSpec, build_model
from .oracle import dense_lyap
from .pattern import PatternConfig, apriori_pattern, pattern_density
from .report import SolveReport
from .sparsecore import Permutation, bandwidth, canonicalize, identity


class ConfigError(ValueError):
    """Schema violation in a run configuration, with location context."""


def _section(raw, name, allowed, required=(), path=""):
    ctx = f"{path}{name}" if name else (path or "<root>")
    if not isinstance(raw, dict):
        raise ConfigError(f"{ctx}: expected an object, got {type(raw).__name__}")
    unknown = set(raw) - set(allowed)
    if unknown:
        raise ConfigError(f"{ctx}: unknown keys {sorted(unknown)}; "
                          f"allowed: {sorted(allowed)}")
    missing = set(required) - set(raw)
    if missing:
        raise ConfigError(f"{ctx}: missing required keys {sorted(missing)}")
    return raw


@dataclass
class RunConfig:
    output_dir: str
    model: dict
    pattern: PatternConfig
    lyap_method: str
    cgls: CglsConfig
    gp: GpConfig
    faber: FaberConfig
    z0_scale: float
    n_max: int
    residual_tol: float
    q_weight: float
    r_weight: float
    sim: dict
    oracle_enabled: bool
    oracle_max_n: int
    bench: dict
    raw: dict = field(repr=False, default_factory=dict)


_MODEL_KEYS = ("kind", "dimension", "nodes", "lengths", "diffusivity",
               "discretization", "io_fraction", "seed")
_GP_KEYS = ("delta_bar", "zeta", "sigma", "max_iter", "q", "k1",
            "p", "k2", "W")


def parse_config(raw, source="<config>"):
    """Validate a parsed JSON object into a RunConfig; unknown keys fail."""
    _section(raw, "", ("output_dir", "model", "pattern", "lyap",
                       "riccati", "sim", "oracle", "bench"),
             required=("output_dir", "model"), path=f"{source}: ")
    path = f"{source}: "

    model = dict(_section(raw["model"], "model", _MODEL_KEYS, path=path))
    model.setdefault("kind", "heat")
    if model["kind"] not in ("heat", "scalar"):
        raise ConfigError(f"{source}: model.kind must be 'heat' or 'scalar'")
    if model["kind"] == "heat":
        for key in ("dimension", "nodes", "lengths", "discretization"):
            if key not in model:
                raise ConfigError(f"{source}: model.{key} is required "
                                  "for heat models")
        model.setdefault("diffusivity", 1.0)
        model.setdefault("io_fraction", 0.5)
        model.setdefault("seed", 0)

    pat_raw = _section(raw.get("pattern", {}), "pattern",
                       ("w", "binarize_each_step", "use_absolute_values",
                        "freeze_after_newton_iter"), path=path)
    pattern = PatternConfig(**pat_raw)

    lyap_raw = dict(_section(raw.get("lyap", {}), "lyap",
                             ("method", "cgls_tol", "cgls_max_iter", "gp"),
                             path=path))
    method = lyap_raw.get("method", "lsq")
    if method not in ("lsq", "gp"):
        raise ConfigError(f"{source}: lyap.method must be 'lsq' or 'gp'")
    cgls = CglsConfig(tol=lyap_raw.get("cgls_tol", 1e-7),
                      max_iter=lyap_raw.get("cgls_max_iter", 20000))
    gp_raw = dict(_section(lyap_raw.get("gp", {}), "lyap.gp", _GP_KEYS,
                           path=path))
    faber = FaberConfig(p=gp_raw.pop("p", 30), W=gp_raw.pop("W", 2048),
                        k2=gp_raw.pop("k2", 1))
    gp = GpConfig(**gp_raw)

    ric_raw = _section(raw.get("riccati", {}), "riccati",
                       ("Z0_scale", "N_max", "residual_tol",
                        "q_weight", "r_weight"), path=path)

    sim = dict(_section(raw.get("sim", {}), "sim",
                        ("dt", "steps", "x0", "x0_seed", "max_rows"),
                        path=path))
    sim.setdefault("dt", 1e-3)
    sim.setdefault("steps", 2000)
    sim.setdefault("x0", "random")
    sim.setdefault("x0_seed", 0)
    sim.setdefault("max_rows", 1000)

    orc = _section(raw.get("oracle", {}), "oracle", ("enabled", "max_n"),
                   path=path)
    bench = dict(_section(raw.get("bench", {}), "bench",
                          ("sizes", "methods", "gp_max_iter"), path=path))
    bench.setdefault("methods", ["lsq"])
    bench.setdefault("gp_max_iter", 200)

    return RunConfig(
        output_dir=raw["output_dir"],
        model=model,
        pattern=pattern,
        lyap_method=method,
        cgls=cgls, gp=gp, faber=faber,
        z0_scale=float(ric_raw.get("Z0_scale", 10.0)),
        n_max=int(ric_raw.get("N_max", 20)),
        residual_tol=float(ric_raw.get("residual_tol", 1e-6)),
        q_weight=float(ric_raw.get("q_weight", 1.0)),
        r_weight=float(ric_raw.get("r_weight", 1.0)),
        sim=sim,
        oracle_enabled=bool(orc.get("enabled", True)),
        oracle_max_n=int(orc.get("max_n", 400)),
        bench=bench,
        raw=raw,
    )


def load_config(path):
    try:
        with open(path) as f:
            text = f.read()
        raw = json.loads(text)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    return parse_config(raw, source=path)


def _config_hash(cfg):
    blob = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _fmt(v):
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(fields)
        writer.writerows(rows)


def _write_manifest(out, cfg, command, extra=None):
    manifest = {
        "command": command,
        "version": f"bandlq-{__version__}",
        "config_sha256": _config_hash(cfg),
        "seeds": {"model": cfg.model.get("seed"),
                  "x0": cfg.sim.get("x0_seed")},
    }
    if extra:
        manifest.update(extra)
    _write_json(os.path.join(out, "manifest.json"), manifest)


def _build_from_config(cfg):
    if cfg.model["kind"] == "scalar":
        one = canonicalize(sp.csr_matrix(np.array([[1.0]])))
        return DescriptorModel(E=one, A=canonicalize(-one), B=one, C=one,
                               permutation=Permutation.identity(1), grid=None)
    grid = GridSpec(dimension=int(cfg.model["dimension"]),
                    nodes=tuple(cfg.model["nodes"]),
                    lengths=tuple(cfg.model["lengths"]),
                    diffusivity=float(cfg.model["diffusivity"]),
                    discretization=cfg.model["discretization"])
    return build_model(grid, float(cfg.model["io_fraction"]),
                       int(cfg.model["seed"]))


def cmd_genmodel(cfg, out):
    """Write the model bundle E/A/B/C.mtx, perm.txt, model.json."""
    model = _build_from_config(cfg)
    os.makedirs(out, exist_ok=True)
    write_matrix(os.path.join(out, "E.mtx"), model.E)
    write_matrix(os.path.join(out, "A.mtx"), model.A)
    write_matrix(os.path.join(out, "B.mtx"), model.B)
    write_matrix(os.path.join(out, "C.mtx"), model.C)
    with open(os.path.join(out, "perm.txt"), "w") as f:
        for idx in model.permutation.forward:
            f.write(f"{idx}\n")
    meta = {
        "kind": cfg.model["kind"],
        "n": model.n, "m": model.m, "r": model.r,
        "nnz": {"E": model.E.nnz, "A": model.A.nnz,
                "B": model.B.nnz, "C": model.C.nnz},
        "bandwidth": {"E": bandwidth(model.E), "A": bandwidth(model.A)},
        "seed": cfg.model.get("seed"),
        "grid": None if model.grid is None else {
            "dimension": model.grid.dimension,
            "nodes": list(model.grid.nodes),
            "lengths": list(model.grid.lengths),
            "diffusivity": model.grid.diffusivity,
            "discretization": model.grid.discretization,
        },
    }
    _write_json(os.path.join(out, "model.json"), meta)
    _write_manifest(out, cfg, "genmodel")
    return 0


class DependencyError(RuntimeError):
    """A solve stage was invoked before its prerequisite artifacts exist."""


def _load_bundle(out):
    meta_path = os.path.join(out, "model.json")
    if not os.path.exists(meta_path):
        raise DependencyError(
            f"{out}: model bundle not found; run genmodel first")
    with open(meta_path) as f:
        meta = json.load(f)
    mats = {name: read_matrix(os.path.join(out, f"{name}.mtx"))
            for name in ("E", "A", "B", "C")}
    forward = np.loadtxt(os.path.join(out, "perm.txt"),
                         dtype=np.int64, ndmin=1)
    inverse = np.empty_like(forward)
    inverse[forward] = np.arange(forward.size)
    grid = None
    if meta.get("grid"):
        g = meta["grid"]
        grid = GridSpec(dimension=g["dimension"], nodes=tuple(g["nodes"]),
                        lengths=tuple(g["lengths"]),
                        diffusivity=g["diffusivity"],
                        discretization=g["discretization"])
    model = DescriptorModel(E=mats["E"], A=mats["A"], B=mats["B"], C=mats["C"],
                            permutation=Permutation(forward=forward,
                                                    inverse=inverse),
                            grid=grid)
    return model, meta


def _problem(cfg, model):
    return LqProblem(model, Q=np.full(model.r, cfg.q_weight),
                     R=np.full(model.m, cfg.r_weight))


def _first_step(cfg, prob):
    Z0 = canonicalize(cfg.z0_scale * identity(prob.model.n))
    return newton_step_matrices(Z0, prob)


def stage_pattern(cfg, out):
    model, _meta = _load_bundle(out)
    prob = _problem(cfg, model)
    _F, Abar, P = _first_step(cfg, prob)
    pat = apriori_pattern(Abar, model.E, P, cfg.pattern)
    write_pattern(os.path.join(out, "pattern.mtx"), pat)
    _write_json(os.path.join(out, "density.json"), {
        "w": cfg.pattern.w, "n": model.n, "nnz": int(pat.nnz),
        "density": pattern_density(pat),
    })
    return 0


def stage_lyap(cfg, out):
    model, _meta = _load_bundle(out)
    pat_path = os.path.join(out, "pattern.mtx")
    if not os.path.exists(pat_path):
        raise DependencyError(
            f"{out}: pattern.mtx not found; run --stage pattern first")
    from .mmio import read_pattern
    pat = read_pattern(pat_path)
    prob = _problem(cfg, model)
    _F, Abar, P = _first_step(cfg, prob)
    if cfg.lyap_method == "lsq":
        Z, rep = solve_lyap_lsq(Abar, model.E, P, pat,
                                cfg=cfg.cgls, w=cfg.pattern.w)
    else:
        X0, _info = initial_guess(Abar, model.E, P,
                                  cfg=cfg.gp, fcfg=cfg.faber)
        Z, rep = solve_lyap_gp(Abar, model.E, P, pat, X0,
                               cfg=cfg.gp, w=cfg.pattern.w)
    if cfg.oracle_enabled and model.n <= cfg.oracle_max_n:
        Zex = dense_lyap(Abar, model.E, P, max_n=cfg.oracle_max_n)
        rep.e_k = metric_e(Z, sp.csr_matrix(Zex))
    write_matrix(os.path.join(out, "Zhat.mtx"), Z)
    _write_csv(os.path.join(out, "lyap_report.csv"),
               SolveReport.DETERMINISTIC_FIELDS,
               [rep.to_row(SolveReport.DETERMINISTIC_FIELDS)])
    _write_json(os.path.join(out, "timings.json"),
                {"lyap_wall_ms": rep.wall_ms})
    return 0 if rep.converged else 2


def stage_riccati(cfg, out):
    model, _meta = _load_bundle(out)
    prob = _problem(cfg, model)
    ncfg = NewtonConfig(Z0_scale=cfg.z0_scale, N_max=cfg.n_max,
                        lyap_method=cfg.lyap_method,
                        residual_tol=cfg.residual_tol, pattern=cfg.pattern)
    try:
        Z, reports = solve_riccati(prob, cfg=ncfg, cgls_cfg=cfg.cgls,
                                   gp_cfg=cfg.gp, faber_cfg=cfg.faber)
    except RiccatiDivergence as exc:
        reports = exc.reports
        Z = None
    if Z is not None:
        F = feedback(Z, prob)
        write_matrix(os.path.join(out, "Zricc.mtx"), Z)
        write_matrix(os.path.join(out, "F.mtx"), F)
    rows = [[_fmt(r.k), _fmt(r.v_k), _fmt(r.lyap_residual),
             _fmt(r.nnz_Z), _fmt(r.nnz_F)] for r in reports]
    _write_csv(os.path.join(out, "newton_report.csv"),
               ("k", "v_k", "lyap_residual", "nnz_Z", "nnz_F"), rows)
    _write_json(os.path.join(out, "timings.json"),
                {"newton_wall_ms": [r.wall_ms for r in reports]})
    if Z is None:
        return 2
    converged = reports[-1].v_k <= cfg.residual_tol * reports[0].v_k
    return 0 if converged else 2


def stage_simulate(cfg, out):
    model, _meta = _load_bundle(out)
    f_path = os.path.join(out, "F.mtx")
    if not os.path.exists(f_path):
        raise DependencyError(
            f"{out}: F.mtx not found; run --stage riccati first")
    F = read_matrix(f_path)
    prob = _problem(cfg, model)
    x0_spec = cfg.sim["x0"]
    if x0_spec == "random":
        rng = np.random.default_rng(int(cfg.sim["x0_seed"]))
        x0 = rng.standard_normal(model.n)
    elif x0_spec == "ones":
        x0 = np.ones(model.n)
    else:
        x0 = np.asarray(x0_spec, dtype=np.float64)
        if x0.size != model.n:
            raise ConfigError(f"sim.x0 has size {x0.size}, expected {model.n}")
    traj = simulate_closed_loop(prob, F, x0, dt=float(cfg.sim["dt"]),
                                steps=int(cfg.sim["steps"]),
                                max_rows=int(cfg.sim["max_rows"]))
    rows = [[_fmt(int(s)), _fmt(float(t)), _fmt(float(nx)), _fmt(float(c))]
            for s, t, nx, c in zip(traj.steps, traj.times,
                                   traj.state_norms, traj.inst_cost)]
    _write_csv(os.path.join(out, "trajectory.csv"),
               ("step", "time", "state_norm", "inst_cost"), rows)
    _write_json(os.path.join(out, "cost.json"), {"cost": traj.cost})
    return 0


_STAGES = {"pattern": stage_pattern, "lyap": stage_lyap,
           "riccati": stage_riccati, "simulate": stage_simulate}


def cmd_solve(cfg, out, stage):
    if stage not in _STAGES:
        raise ConfigError(f"unknown stage {stage!r}; "
                          f"choose from {sorted(_STAGES)}")
    rc = _STAGES[stage](cfg, out)
    _write_manifest(out, cfg, f"solve --stage {stage}")
    return rc


def cmd_bench(cfg, out):
    """Per-size scaling rows; individual failures are recorded, not fatal."""
    sizes = cfg.bench.get("sizes")
    if not sizes:
        raise ConfigError("bench.sizes is required for the bench command")
    os.makedirs(out, exist_ok=True)
    fields = ("n", "method", "w", "nnz", "iterations", "wall_ms", "status")
    rows = []
    for nodes in sizes:
        nodes = tuple(int(v) for v in np.atleast_1d(nodes))
        spec = dict(cfg.model)
        spec["nodes"] = list(nodes)
        try:
            sub = parse_config({**cfg.raw, "model": spec}, source="<bench>")
            model = _build_from_config(sub)
            prob = _problem(sub, model)
            _F, Abar, P = _first_step(sub, prob)
            pat = apriori_pattern(Abar, model.E, P, sub.pattern)
        except Exception as exc:            # per-size failure, keep going
            rows.append([str(int(np.prod(nodes))), "setup", str(cfg.pattern.w),
                         "0", "0", "0", f"error: {exc}"])
            continue
        n = model.n
        for method in cfg.bench["methods"]:
            try:
                t0 = time.perf_counter()
                if method == "lsq":
                    rs = assemble_reduced(Abar, model.E, P, pat)
                    res_nnz = rs.M1.nnz
                    from .lyap_lsq import solve_reduced
                    res = solve_reduced(rs, cfg.cgls)
                    iters = res.iterations
                elif method == "gp":
                    gp_cfg = GpConfig(
                        delta_bar=cfg.gp.delta_bar, zeta=cfg.gp.zeta,
                        sigma=cfg.gp.sigma,
                        max_iter=int(cfg.bench["gp_max_iter"]),
                        q=cfg.gp.q, k1=cfg.gp.k1,
                        stagnation_window=cfg.gp.stagnation_window,
                        stagnation_rtol=cfg.gp.stagnation_rtol)
                    X0 = canonicalize(sp.csr_matrix((n, n)))
                    _Z, rep = solve_lyap_gp(Abar, model.E, P, pat, X0,
                                            cfg=gp_cfg, w=cfg.pattern.w)
                    res_nnz = rep.extra["peak_nnz"]
                    iters = rep.iterations
                else:
                    raise ConfigError(f"unknown bench method {method!r}")
                wall = 1e3 * (time.perf_counter() - t0)
                rows.append([str(n), method, str(cfg.pattern.w), str(res_nnz),
                             str(iters), f"{wall:.17g}", "ok"])
            except Exception as exc:
                rows.append([str(n), method, str(cfg.pattern.w),
                             "0", "0", "0", f"error: {exc}"])
        if cfg.oracle_enabled and n <= cfg.oracle_max_n:
            try:
                t0 = time.perf_counter()
                dense_lyap(Abar, model.E, P, max_n=cfg.oracle_max_n)
                wall = 1e3 * (time.perf_counter() - t0)
                rows.append([str(n), "oracle", str(cfg.pattern.w),
                             str(n * n), "1", f"{wall:.17g}", "ok"])
            except Exception as exc:
                rows.append([str(n), "oracle", str(cfg.pattern.w),
                             "0", "0", "0", f"error: {exc}"])
    _write_csv(os.path.join(out, "bench.csv"), fields, rows)
    _write_manifest(out, cfg, "bench")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bandlq",
        description="Banded approximate Lyapunov/Riccati solves and sparse "
                    "LQ feedback for descriptor heat models.")
    parser.add_argument("--version", action="version",
                        version=f"bandlq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (("genmodel", "generate a model bundle"),
                       ("solve", "run a solve stage on an existing bundle"),
                       ("bench", "size-sweep scaling benchmark")):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--oracle", choices=("on", "off"),
                       help="override the oracle.enabled flag")
        p.add_argument("--seed", type=int,
                       help="override the model seed")
        if name == "solve":
            p.add_argument("--stage", required=True,
                           choices=sorted(_STAGES))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.output_dir = args.out
        if args.oracle:
            cfg.oracle_enabled = args.oracle == "on"
        if args.seed is not None:
            cfg.model["seed"] = args.seed
        out = cfg.output_dir
        os.makedirs(out, exist_ok=True)
        if args.command == "genmodel":
            return cmd_genmodel(cfg, out)
        if args.command == "solve":
            return cmd_solve(cfg, out, args.stage)
        return cmd_bench(cfg, out)
    except (ConfigError, DependencyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:                    # numeric or IO failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
