"""Command-line experiment driver.

Every command reads an optional JSON config, applies ``--set key=value``
overrides (dotted keys reach into nested objects) and writes its outputs plus
a ``manifest.json`` into ``--out-dir``.  Passing a manifest back as
``--config`` reruns the exact same experiment.

Exit codes: 0 success, 1 tolerance failure, 2 configuration error,
3 resource-guard abort.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__
from .fem import (
    FieldSample,
    Mesh1D,
    a_norm,
    dual_norm,
    field_at_midpoints,
    make_source,
    solve_sample,
    v_norm,
)
from .field import FunctionSystem, kl_system, schauder_system
from .multiindex import (
    WeightSequence,
    enumerate_smallest_weights,
    first_excluded_weight,
    fit_rate,
    weight_tail_sum,
)
from .pce import ResourceGuardError, best_n_term_errors, compute_expansion, default_index_set, identity_check
from .rng import gaussians
from .stats import SampleConfig, mc_exp_moment_b, mc_moment_u, tail_curve

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2, 3

COMMON = {
    "system": {"kind": "schauder", "parameters": {"C": 0.5, "alpha": 0.5}},
    "J": 6,
    "mesh_m": 255,
    "source": {"kind": "constant", "value": 1.0},
    "seed": 0,
}

DEFAULTS = {
    "identity": {
        **COMMON,
        "J": 3,
        "r": 2,
        "rho": {"rule": "dyadic", "scale": 1.0, "exponent": 0.25},
        "quad_order": 7,
        "degree_cap": 5,
        "tolerance": 1e-3,
    },
    "compare": {
        **COMMON,
        "quad_order": 7,
        "degree_cap": 4,
        "margin": 0.2,
        "fit_n_min": 1,
        "fit_n_max": None,  # None: half the size of the computed index set
        "save_expansions": False,
    },
    "weights": {
        **COMMON,
        "r": 1,
        "rho": {"rule": "power", "scale": 1.0, "exponent": 1.0},
        "n": 50,
        "q": 4.0,
        "degree_cap": 40,
    },
    "moments": {**COMMON, "J": 10, "N": 20000, "k": 2.0, "grid_n": 2049},
    "tail": {**COMMON, "J": 15, "N": 50000, "ts": [0.75, 1.0, 1.25, 1.5, 1.75], "grid_n": 2049},
    "solve-one": {**COMMON, "y": None},
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str):
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"--set {key}: {p!r} is not an object in the config")
        node = node[p]
    node[parts[-1]] = _parse_value(value)


def load_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    # a manifest carries the resolved config under "config"
    if "manifest_version" in data:
        data = data["config"]
    return data


def resolve_config(command: str, path: str | None, sets: list[str], seed=None) -> dict:
    cfg = copy.deepcopy(DEFAULTS[command])
    if path:
        user = load_config_file(path)
        unknown = sorted(set(user) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown field(s) for {command!r}: {', '.join(unknown)}")
        cfg.update(user)
    for s in sets or []:
        top = s.split("=", 1)[0].split(".")[0]
        if top not in cfg:
            raise ConfigError(f"unknown field {top!r} for {command!r}")
        apply_override(cfg, s)
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def _field(cfg, name, kind, check=None, desc=""):
    v = cfg.get(name)
    try:
        v = kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"field {name!r}: expected {kind.__name__}, got {cfg.get(name)!r}") from None
    if check is not None and not check(v):
        raise ConfigError(f"field {name!r}: {v!r} violates {desc}")
    return v


def _system(cfg) -> FunctionSystem:
    try:
        return FunctionSystem.from_json(cfg["system"])
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"field 'system': {exc}") from None


def _rho(cfg, r) -> WeightSequence:
    spec = dict(cfg["rho"])
    spec["r"] = r
    try:
        return WeightSequence.from_json(spec)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"field 'rho': {exc}") from None


def _source(cfg):
    try:
        return make_source(cfg["source"])
    except (ValueError, TypeError, AttributeError) as exc:
        raise ConfigError(f"field 'source': {exc}") from None


def _mesh(cfg) -> Mesh1D:
    return Mesh1D(_field(cfg, "mesh_m", int, lambda m: m >= 1, "m >= 1"))


# --------------------------------------------------------------------------
# output helpers


class Outputs:
    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def json(self, name: str, data):
        (self.dir / name).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
        self.files.append(name)

    def csv(self, name: str, header, rows):
        with open(self.dir / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        self.files.append(name)


def _versions() -> dict:
    out = {"lognormal_pce": __version__, "python": platform.python_version(), "numpy": np.__version__}
    try:
        out["scipy"] = metadata.version("scipy")
    except metadata.PackageNotFoundError:
        pass
    return out


# --------------------------------------------------------------------------
# commands


def cmd_identity(cfg, out: Outputs, threads: int) -> int:
    r = _field(cfg, "r", int, lambda v: v >= 1, "r >= 1")
    J = _field(cfg, "J", int, lambda v: v >= 1, "J >= 1")
    q = _field(cfg, "quad_order", int, lambda v: v >= 1, "quad_order >= 1")
    dc = _field(cfg, "degree_cap", int, lambda v: 0 <= v < q, "0 <= degree_cap < quad_order")
    tol = _field(cfg, "tolerance", float, lambda v: v >= 0, "tolerance >= 0")
    res = identity_check(_system(cfg), J, _rho(cfg, r), q, _mesh(cfg), _source(cfg), dc, threads)
    passed = res.rel_gap <= tol
    out.json("identity.json", {"lhs": res.lhs, "rhs": res.rhs, "rel_gap": res.rel_gap, "tolerance": tol, "passed": passed})
    out.csv("identity_mu.csv", ["mu", "contribution"], [(str(mu), v) for mu, v in res.mu_terms])
    out.csv(
        "identity_nu.csv",
        ["nu", "b_nu", "norm_sq", "contribution"],
        [(str(nu), b, s, b * s) for nu, b, s in res.nu_terms],
    )
    print(f"identity: lhs={res.lhs:.12g} rhs={res.rhs:.12g} rel_gap={res.rel_gap:.3e} ({'ok' if passed else 'FAIL'})")
    return EXIT_OK if passed else EXIT_TOLERANCE


def compare_representations(cfg, threads: int = 1, out: Outputs | None = None) -> dict:
    J = _field(cfg, "J", int, lambda v: v >= 1, "J >= 1")
    q = _field(cfg, "quad_order", int, lambda v: v >= 1, "quad_order >= 1")
    dc = _field(cfg, "degree_cap", int, lambda v: 0 <= v < q, "0 <= degree_cap < quad_order")
    mesh, f_at = _mesh(cfg), _source(cfg)
    lam = default_index_set(J, dc, q)
    n_all = list(range(len(lam) + 1))
    nmin = _field(cfg, "fit_n_min", int, lambda v: v >= 1, "fit_n_min >= 1")
    nmax = len(lam) // 2 if cfg.get("fit_n_max") is None else _field(cfg, "fit_n_max", int)
    if not nmin < nmax <= len(lam) - 1:
        raise ConfigError(f"fit range [{nmin}, {nmax}] must satisfy 1 <= min < max < {len(lam)}")
    curves, rates = {}, {}
    for name, system in (("KL", kl_system()), ("Schauder", schauder_system())):
        exp = compute_expansion(system, J, lam, q, mesh, f_at, threads, source=cfg["source"])
        curves[name] = [e for _, e in best_n_term_errors(exp, n_all)]
        fit_ns = list(range(nmin, nmax + 1))
        rates[name] = fit_rate(fit_ns, [curves[name][n] for n in fit_ns])
        if out is not None and cfg.get("save_expansions"):
            exp.save(out.dir / f"expansion_{name}.json", out.dir / f"expansion_{name}.f64")
            out.files += [f"expansion_{name}.json", f"expansion_{name}.f64"]
    return {"n": n_all, "curves": curves, "rates": rates, "fit_range": [nmin, nmax], "size": len(lam)}


def cmd_compare(cfg, out: Outputs, threads: int) -> int:
    margin = _field(cfg, "margin", float)
    res = compare_representations(cfg, threads, out)
    kl, sch = res["curves"]["KL"], res["curves"]["Schauder"]
    out.csv("compare.csv", ["n", "error_KL", "error_Schauder"], zip(res["n"], kl, sch))
    diff = res["rates"]["Schauder"] - res["rates"]["KL"]
    passed = diff >= margin
    out.json(
        "compare.json",
        {
            "rate_KL": res["rates"]["KL"],
            "rate_Schauder": res["rates"]["Schauder"],
            "rate_difference": diff,
            "margin": margin,
            "fit_range": res["fit_range"],
            "index_set_size": res["size"],
            "passed": passed,
        },
    )
    print(
        f"compare: rate KL={res['rates']['KL']:.4f} Schauder={res['rates']['Schauder']:.4f} "
        f"difference={diff:+.4f} (margin {margin}: {'ok' if passed else 'FAIL'})"
    )
    return EXIT_OK if passed else EXIT_TOLERANCE


def cmd_weights(cfg, out: Outputs, threads: int) -> int:
    r = _field(cfg, "r", int, lambda v: v >= 1, "r >= 1")
    J = _field(cfg, "J", int, lambda v: v >= 1, "J >= 1")
    n = _field(cfg, "n", int, lambda v: v >= 1, "n >= 1")
    q = _field(cfg, "q", float, lambda v: v > 2 / r, "q > 2/r")
    dc = _field(cfg, "degree_cap", int, lambda v: v >= r, "degree_cap >= r")
    w = _rho(cfg, r)
    ranked = enumerate_smallest_weights(n, w, J)
    rows = [(k + 1, str(nu), b, b**-0.5) for k, (nu, b) in enumerate(ranked)]
    out.csv("weights.csv", ["rank", "nu", "b_nu", "b_nu_inv_sqrt"], rows)
    tail = weight_tail_sum(w, q, J, dc)
    # l^q membership bounds the decreasing rearrangement: d_n <= (S/n)^(1/q)
    ok = all(row[3] <= (tail.upper / row[0]) ** (1 / q) for row in rows)
    out.json(
        "weights.json",
        {
            "q": q,
            "weight_tail_sum": tail.value,
            "weight_tail_bound": tail.tail_bound,
            "predicted_rate": 1 / q,
            "first_excluded_weight": first_excluded_weight(w, J),
            "rearrangement_bound_holds": ok,
        },
    )
    print(f"weights: {n} smallest b_nu written; sum b^(-q/2) = {tail.value:.6g} (+{tail.tail_bound:.2e}); rate 1/q = {1 / q:.4g}")
    return EXIT_OK if ok else EXIT_TOLERANCE


def _sample_config(cfg, threads) -> SampleConfig:
    return SampleConfig(
        seed=_field(cfg, "seed", int),
        N=_field(cfg, "N", int, lambda v: v >= 1, "N >= 1"),
        J=_field(cfg, "J", int, lambda v: v >= 1, "J >= 1"),
        system=_system(cfg),
        mesh=_mesh(cfg),
        source=cfg["source"],
        grid_n=_field(cfg, "grid_n", int, lambda v: v >= 2, "grid_n >= 2"),
        threads=threads,
    )


def cmd_moments(cfg, out: Outputs, threads: int) -> int:
    k = _field(cfg, "k", float, lambda v: v >= 0, "k >= 0")
    sc = _sample_config(cfg, threads)
    eb = mc_exp_moment_b(sc, k)
    eu = mc_moment_u(sc, k)
    out.json(
        "moments.json",
        {
            "k": k,
            "exp_moment_b": eb.estimate,
            "exp_moment_b_stderr": eb.std_error,
            "exp_moment_b_infinite": eb.infinite,
            "moment_u": eu.estimate,
            "moment_u_stderr": eu.std_error,
            "lax_milgram_violations": eu.bound_violations,
            "N": sc.N,
        },
    )
    print(f"moments: E exp(k|b|)={eb.estimate:.6g}±{eb.std_error:.2g}  E|u|^k={eu.estimate:.6g}±{eu.std_error:.2g}  violations={eu.bound_violations}")
    return EXIT_OK if eu.bound_violations == 0 else EXIT_TOLERANCE


def cmd_tail(cfg, out: Outputs, threads: int) -> int:
    sc = _sample_config(cfg, threads)
    ts = cfg.get("ts")
    if not isinstance(ts, list) or not ts or not all(isinstance(t, (int, float)) and t > 0 for t in ts):
        raise ConfigError("field 'ts': expected a nonempty list of positive numbers")
    curve = tail_curve(sc, ts)
    out.csv("tail.csv", ["t", "P", "stderr"], curve.rows())
    slope = curve.slope()
    out.json("tail.json", {"slope_logP_vs_t2": slope, "low_count": curve.low_count, "N": sc.N})
    print(f"tail: slope of log P vs t^2 = {slope:.4f}{' (some expected counts < 10)' if curve.low_count else ''}")
    return EXIT_OK if slope < 0 else EXIT_TOLERANCE


def cmd_solve_one(cfg, out: Outputs, threads: int) -> int:
    J = _field(cfg, "J", int, lambda v: v >= 1, "J >= 1")
    system, mesh, f_at = _system(cfg), _mesh(cfg), _source(cfg)
    y = cfg.get("y")
    if y is None:
        y = gaussians(_field(cfg, "seed", int), 0, 1, J)[0].tolist()
    elif not isinstance(y, list) or len(y) != J:
        raise ConfigError(f"field 'y': expected a list of {J} numbers")
    sample = FieldSample(tuple(y), system)
    u = solve_sample(sample, mesh, f_at)
    a_mid = np.exp(np.asarray(sample.y) @ field_at_midpoints(system, J, mesh))
    bsup = float(np.max(np.abs(sample(mesh.sup_points))))
    out.csv("solution.csv", ["x", "u"], zip(mesh.all_nodes.tolist(), [0.0] + u.coeffs.tolist() + [0.0]))
    out.json(
        "solution.json",
        {
            "y": list(sample.y),
            "v_norm": v_norm(u),
            "a_norm": a_norm(u, lambda x: a_mid),
            "sup_b": bsup,
            "lax_milgram_bound": dual_norm(f_at, mesh) * math.exp(bsup),
        },
    )
    print(f"solve-one: ||u||_V = {v_norm(u):.10g}")
    return EXIT_OK


COMMANDS = {
    "identity": cmd_identity,
    "compare": cmd_compare,
    "weights": cmd_weights,
    "moments": cmd_moments,
    "tail": cmd_tail,
    "solve-one": cmd_solve_one,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (or a manifest.json from an earlier run)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
    common.add_argument("--seed", type=int, help="override the seed")
    common.add_argument("--out-dir", default="out", help="output directory (default: out)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    parser = argparse.ArgumentParser(prog="lognormal-pce", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args.config, args.set, args.seed)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        print(json.dumps(cfg, indent=1, sort_keys=True))
        return EXIT_OK
    out = Outputs(Path(args.out_dir))
    t0 = time.perf_counter()
    try:
        status = COMMANDS[args.command](cfg, out, max(1, args.threads))
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceGuardError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    manifest = {
        "manifest_version": 1,
        "command": args.command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - t0,
        "outputs": out.files,
        "exit_status": status,
    }
    out.json("manifest.json", manifest)
    return status


if __name__ == "__main__":
    sys.exit(main())


def main_entry():
    sys.exit(main())
