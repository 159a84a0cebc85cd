"""Command-line entry point.

Flags override values from ``--config`` (a JSON object keyed by flag name with
dashes replaced by underscores), which override the built-in defaults.
Exit status: 0 on success, 2 when a comparison fails its tolerance, 1 on
usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .dispersal import KernelError, build_kernel, verify_assumptions
from .genealogy import (
    ConfigError, RingConfig, SteppingStoneConfig, VoterConfig, default_threads, kernel_path,
    local_time_estimate, crossing_local_time, read_ndjson, run_manifest, run_replicas, sample_ring,
    sample_stepping, simulate_ring_pair, simulate_stepping_pair, simulate_voter_pair, write_ndjson,
)
from .limit_law import (
    LimitLawError, REF_DT, REF_DX, maruyama_laplace, ring_laplace, survival, survival_closed,
    survival_pde, theorem2_limit_survival, theorem3_limit_survival,
)
from .stats import SeedPlan, comparison_report, ecdf, ks_distance, laplace_estimate

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2

DEFAULTS = {
    "seed": 0, "threads": None, "out": None, "format": None,
    "M": None, "nu": 0.1, "L": 200, "alpha": None, "replicas": 1000, "max_steps": 10**9,
    "tmax": None, "method": None,
    "colonies": 200, "dip_size": None, "u": 0.0, "i": 0,
    "big_n": 400, "kernel": "uniform", "mix": 0.1, "x0": 1.0,
    "t": 1.0, "x": 1.0, "lambda_": 1.0, "dx": REF_DX, "dt": REF_DT, "xmax": None,
    "samples": None, "law": None, "sigma": None, "tolerance": None, "lambdas": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _shared(p):
    g = p.add_argument_group("shared")
    g.add_argument("--seed", type=int, default=None, help="master seed, unsigned 64-bit integer (default 0)")
    g.add_argument("--threads", type=int, default=None,
                   help="worker processes (count); falls back to STONEWALK_THREADS, then the core count")
    g.add_argument("--out", default=None, help="output path (file); stdout when omitted")
    g.add_argument("--format", choices=["csv", "json", "ndjson"], default=None, help="output format")
    g.add_argument("--config", default=None, help="JSON file of flag values (path)")


def _model(p, stepping=True):
    g = p.add_argument_group("model")
    ex = g.add_mutually_exclusive_group()
    ex.add_argument("--M", type=int, default=None, help="individuals per colony (count)")
    ex.add_argument("--alpha", type=float, default=None,
                    help="coalescence strength alpha = M nu / L (dimensionless); sets M from --nu and --L")
    g.add_argument("--nu", type=float, default=None, help="migration probability per event (probability, default 0.1)")
    g.add_argument("--L", type=int, default=None, help="initial separation (colonies, default 200)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stonewalk", description="Stepping stone genealogies and local-time limit laws.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate-stepping", help="stepping stone pair coalescence on the integers")
    _shared(s)
    _model(s)
    s.add_argument("--replicas", type=int, default=None, help="number of replicas (count, default 1000)")
    s.add_argument("--max-steps", type=int, default=None, help="event cap per replica (events, default 1e9)")
    s.add_argument("--tmax", type=float, default=None,
                   help="censoring horizon in scaled time 2 t0 / (L^2/nu) (dimensionless, default 16)")
    s.add_argument("--method", choices=["fast", "events"], default=None,
                   help="exact difference-chain sampler or event-by-event reference (default fast)")

    r = sub.add_parser("simulate-ring", help="pair coalescence on a ring of colonies")
    _shared(r)
    g = r.add_argument_group("model")
    ex = g.add_mutually_exclusive_group()
    ex.add_argument("--dip-size", type=int, default=None, help="diploid individuals per colony (count)")
    ex.add_argument("--alpha", type=float, default=None,
                    help="coalescence strength (dimensionless); sets the colony size from --nu and --colonies")
    g.add_argument("--colonies", type=int, default=None, help="ring size (colonies, default 200)")
    g.add_argument("--nu", type=float, default=None, help="migration probability m (probability, default 0.1)")
    g.add_argument("--u", type=float, default=None, help="mutation probability per generation (probability)")
    g.add_argument("--i", type=int, default=None, help="separation of the sampled colonies (colonies)")
    r.add_argument("--replicas", type=int, default=None, help="number of replicas (count)")
    r.add_argument("--max-steps", type=int, default=None, help="event cap for --method events (events)")
    r.add_argument("--method", choices=["fast", "events"], default=None, help="sampler (default fast)")

    v = sub.add_parser("simulate-voter", help="voter model pair coalescence with a long-range kernel")
    _shared(v)
    _kernel_flags(v)
    v.add_argument("--x0", type=float, default=None, help="initial separation in units of sigma N (dimensionless)")
    v.add_argument("--L", type=int, default=None, help="initial separation (sites); overrides --x0")
    v.add_argument("--replicas", type=int, default=None, help="number of replicas (count)")
    v.add_argument("--max-steps", type=int, default=None, help="jump cap per replica (jumps)")
    v.add_argument("--tmax", type=float, default=None, help="censoring horizon in scaled time 2 t0 / N (dimensionless)")

    lm = sub.add_parser("limit", help="evaluate u(t, x) = E_x exp(-lambda l(t))")
    _shared(lm)
    _limit_flags(lm)
    lm.add_argument("--method", choices=["closed", "quadrature", "pde"], default=None, help="route (default quadrature)")

    pd = sub.add_parser("pde", help="solve the Robin heat problem and write the grid")
    _shared(pd)
    _limit_flags(pd)

    k = sub.add_parser("kernel", help="build a dispersal kernel and audit its assumptions")
    _shared(k)
    _kernel_flags(k)

    c = sub.add_parser("crossings", help="strip-crossing local-time estimates for the kernel walk")
    _shared(c)
    _kernel_flags(c)
    c.add_argument("--x0", type=float, default=None, help="start in units of sigma N (dimensionless)")
    c.add_argument("--t", type=float, default=None, help="time horizon in units of N steps (dimensionless)")
    c.add_argument("--replicas", type=int, default=None, help="number of paths (count)")

    cp = sub.add_parser("compare", help="compare a sample file with a limit law")
    _shared(cp)
    cp.add_argument("--samples", default=None, help="NDJSON sample file (path)")
    cp.add_argument("--law", choices=["theorem2", "theorem3", "maruyama", "ring"], default=None, help="limit law")
    cp.add_argument("--alpha", type=float, default=None, help="coalescence strength (dimensionless)")
    cp.add_argument("--sigma", type=float, default=None, help="kernel sigma_N for theorem3 (dimensionless)")
    cp.add_argument("--x0", type=float, default=None, help="start for theorem3 (units of sigma N)")
    cp.add_argument("--colonies", type=int, default=None, help="ring circumference for --law ring (colonies)")
    cp.add_argument("--L", type=int, default=None, help="scaling length for --law ring (colonies)")
    cp.add_argument("--tmax", type=float, default=None, help="KS window upper end in scaled time (dimensionless)")
    cp.add_argument("--lambdas", default=None, help="comma-separated Laplace arguments (dimensionless)")
    cp.add_argument("--tolerance", type=float, default=None,
                    help="pass threshold (units of the metric; KS default 0.05, Laplace 0.02)")
    return p


def _kernel_flags(p):
    g = p.add_argument_group("kernel")
    g.add_argument("--kernel", choices=["uniform", "bexp", "dnormal", "nn"], default=None, help="kernel family")
    g.add_argument("--big-n", type=int, default=None, help="kernel scale N (dimensionless; jumps are of order sqrt(N) sites)")
    g.add_argument("--mix", type=float, default=None, help="weight of the uniform floor (probability, default 0.1)")


def _limit_flags(p):
    g = p.add_argument_group("limit law")
    g.add_argument("--t", type=float, default=None, help="time (Brownian units)")
    g.add_argument("--x", type=float, default=None, help="start point (Brownian units)")
    g.add_argument("--lambda", dest="lambda_", type=float, default=None, help="killing rate (per unit local time)")
    g.add_argument("--dx", type=float, default=None, help="PDE space step (Brownian units)")
    g.add_argument("--dt", type=float, default=None, help="PDE time step (Brownian units)")
    g.add_argument("--xmax", type=float, default=None, help="PDE far boundary (Brownian units)")


def merge_config(args) -> dict:
    """Flags over config file over defaults."""
    cfg = dict(DEFAULTS)
    given = set()
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError("config must be a JSON object")
        for key, val in file_cfg.items():
            key = key.replace("-", "_")
            if key == "lambda":
                key = "lambda_"
            if key not in cfg:
                raise UsageError(f"unknown config key {key!r}")
            cfg[key] = val
            given.add(key)
    for key, val in vars(args).items():
        if key in ("command", "config"):
            continue
        if val is not None:
            cfg[key] = val
            given.add(key)
    cfg["command"] = args.command
    cfg["_given"] = given
    return cfg


def _threads(cfg) -> int:
    return int(cfg["threads"]) if cfg["threads"] else default_threads()


def _open_out(cfg):
    return open(cfg["out"], "w") if cfg["out"] else sys.stdout


def _write_manifest(cfg, doc):
    if cfg["out"]:
        with open(cfg["out"] + ".manifest.json", "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _echo(cfg) -> dict:
    return {k: v for k, v in sorted(cfg.items()) if k != "threads" and not k.startswith("_")}


def _kernel(cfg):
    return build_kernel(cfg["kernel"], int(cfg["big_n"]), float(cfg["mix"]))


def cmd_simulate_stepping(cfg) -> int:
    if cfg["alpha"] is not None:
        stone = SteppingStoneConfig.from_alpha(cfg["alpha"], cfg["nu"], cfg["L"], max_events=cfg["max_steps"])
    else:
        if cfg["M"] is None:
            raise UsageError("give --M or --alpha")
        stone = SteppingStoneConfig(cfg["M"], cfg["nu"], cfg["L"], cfg["max_steps"])
    cfg["M"] = stone.M
    cfg["alpha"] = stone.alpha
    method = cfg["method"] or "fast"
    tmax = 16.0 if cfg["tmax"] is None else float(cfg["tmax"])
    cfg["method"], cfg["tmax"] = method, tmax
    plan = SeedPlan(cfg["seed"], cfg["replicas"])
    t0 = time.time()
    if method == "fast":
        samples = run_replicas(sample_stepping, stone, plan, cfg["replicas"], _threads(cfg), tmax=tmax)
    else:
        samples = run_replicas(simulate_stepping_pair, stone, plan, cfg["replicas"], _threads(cfg))
    return _emit_samples(cfg, samples, t0, None)


def cmd_simulate_ring(cfg) -> int:
    common = dict(u=cfg["u"], i=cfg["i"], max_events=cfg["max_steps"])
    if cfg["alpha"] is not None:
        ring = RingConfig.from_alpha(cfg["alpha"], cfg["nu"], cfg["colonies"], **common)
    else:
        if cfg["dip_size"] is None:
            raise UsageError("give --dip-size or --alpha")
        ring = RingConfig(cfg["colonies"], cfg["dip_size"], cfg["nu"], **common)
    cfg["dip_size"], cfg["alpha"] = ring.dipSize, ring.alpha
    method = cfg["method"] or "fast"
    cfg["method"] = method
    plan = SeedPlan(cfg["seed"], cfg["replicas"])
    t0 = time.time()
    fn = sample_ring if method == "fast" else simulate_ring_pair
    samples = run_replicas(fn, ring, plan, cfg["replicas"], _threads(cfg))
    return _emit_samples(cfg, samples, t0, None)


def cmd_simulate_voter(cfg) -> int:
    kernel = _kernel(cfg)
    L = cfg["L"] if "L" in cfg["_given"] else None
    if L is None:
        L = int(math.ceil(cfg["x0"] * kernel.sigmaN * kernel.N))
    cfg["L"] = L
    voter = VoterConfig(kernel, L, cfg["max_steps"])
    cfg["x0"] = voter.x0
    plan = SeedPlan(cfg["seed"], cfg["replicas"])
    t0 = time.time()
    kw = {} if cfg["tmax"] is None else {"tmax": float(cfg["tmax"])}
    samples = run_replicas(simulate_voter_pair, voter, plan, cfg["replicas"], _threads(cfg), **kw)
    return _emit_samples(cfg, samples, t0, kernel)


def _emit_samples(cfg, samples, t0, kernel) -> int:
    fh = _open_out(cfg)
    try:
        write_ndjson(samples, fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    counts = {"replicas": len(samples), "coalesced": sum(s.coalesced for s in samples)}
    doc = run_manifest(cfg["command"], _echo(cfg), cfg["seed"], counts, kernel,
                       wall_time=time.time() - t0, outputs=[cfg["out"]] if cfg["out"] else [])
    _write_manifest(cfg, doc)
    print(json.dumps({"alpha": cfg.get("alpha"), **counts}), file=sys.stderr)
    return EXIT_OK


def cmd_limit(cfg) -> int:
    method = cfg["method"] or "quadrature"
    t, x, lam = cfg["t"], cfg["x"], cfg["lambda_"]
    grid = {}
    if method == "pde":
        grid = {"dx": cfg["dx"], "dt": cfg["dt"]}
        if cfg["xmax"] is not None:
            grid["xMax"] = cfg["xmax"]
    value = survival(t, x, lam, method, **grid)
    doc = {"t": t, "x": x, "lambda": lam, "method": method, "u": value}
    fh = _open_out(cfg)
    try:
        if cfg["format"] == "csv":
            fh.write("t,x,lambda,method,u\n")
            fh.write(f"{t!r},{x!r},{lam!r},{method},{value!r}\n")
        else:
            fh.write(json.dumps(doc) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_pde(cfg) -> int:
    sol = survival_pde(cfg["lambda_"], tMax=cfg["t"], xMax=cfg["xmax"], dx=cfg["dx"], dt=cfg["dt"],
                       xProbe=min(cfg["x"], 3.0))
    if cfg["out"]:
        sol.to_csv(cfg["out"])
        _write_manifest(cfg, run_manifest("pde", _echo(cfg), cfg["seed"], {"grid": list(sol.values.shape)},
                                          outputs=[cfg["out"]], residual=sol.residual))
    else:
        sys.stdout.write("t,x,u\n")
        for j in range(sol.values.shape[0]):
            for i in range(sol.values.shape[1]):
                sys.stdout.write(f"{j * sol.dt!r},{i * sol.dx!r},{float(sol.values[j, i])!r}\n")
    return EXIT_OK


def cmd_kernel(cfg) -> int:
    kernel = _kernel(cfg)
    report = verify_assumptions(kernel)
    doc = {"kernel": json.loads(kernel.to_json()), "hash": kernel.digest(), "audit": report.to_dict()}
    fh = _open_out(cfg)
    try:
        fh.write(json.dumps(doc, default=str) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK if report.passed else EXIT_FAIL


def _crossing_replica(args, rng, replica):
    kernel, start, steps, N, t = args
    path = kernel_path(kernel, start, steps, rng)
    return replica, crossing_local_time(path, N, t)


def cmd_crossings(cfg) -> int:
    kernel = _kernel(cfg)
    N = kernel.N
    start = int(math.ceil(cfg["x0"] * kernel.sigmaN * N))
    steps = int(math.floor(N * cfg["t"]))
    plan = SeedPlan(cfg["seed"], cfg["replicas"])
    t0 = time.time()
    res = run_replicas(_crossing_replica, (kernel, start, steps, N, cfg["t"]), plan, cfg["replicas"], _threads(cfg))
    fh = _open_out(cfg)
    try:
        for rep, val in res:
            fh.write(json.dumps({"replica": rep, "scaled_count": val,
                                 "local_time": 2.0 * val / kernel.sigmaN}, separators=(",", ":")) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    _write_manifest(cfg, run_manifest("crossings", _echo(cfg), cfg["seed"], {"replicas": len(res)}, kernel,
                                      wall_time=time.time() - t0, outputs=[cfg["out"]] if cfg["out"] else []))
    return EXIT_OK


def cmd_compare(cfg) -> int:
    if not cfg["samples"]:
        raise UsageError("--samples is required")
    if not cfg["law"]:
        raise UsageError("--law is required")
    try:
        with open(cfg["samples"]) as fh:
            samples = read_ndjson(fh)
    except OSError as exc:
        raise UsageError(f"cannot read samples: {exc}") from None
    x = np.array([s.scaled_time for s in samples])
    cens = np.array([not s.coalesced for s in samples])
    law = cfg["law"]
    reports = []
    if law in ("theorem2", "theorem3"):
        if law == "theorem2":
            if cfg["alpha"] is None:
                raise UsageError("--alpha is required for theorem2")
            cdf = lambda t: 1.0 - theorem2_limit_survival(t, cfg["alpha"])
        else:
            if cfg["sigma"] is None:
                raise UsageError("--sigma is required for theorem3")
            cdf = lambda t: 1.0 - theorem3_limit_survival(t, cfg["sigma"], cfg["x0"])
        tmax = math.inf if cfg["tmax"] is None else float(cfg["tmax"])
        horizon = float(x[cens].min()) if cens.any() else math.inf
        dist = ecdf(np.where(cens, horizon, x), cens, horizon)
        ks = ks_distance(dist, cdf, tmax)
        tol = 0.05 if cfg["tolerance"] is None else cfg["tolerance"]
        reports.append(comparison_report(f"ks_{law}", ks, len(samples), tol))
    else:
        if cfg["alpha"] is None:
            raise UsageError("--alpha is required")
        lams = cfg["lambdas"] or "0.5,1,2"
        if isinstance(lams, str):
            lams = [float(v) for v in lams.split(",")]
        tol = 0.02 if cfg["tolerance"] is None else cfg["tolerance"]
        for lam in lams:
            est = laplace_estimate(x, lam, cens)
            if law == "maruyama":
                target = maruyama_laplace(cfg["alpha"], lam)
            else:
                circ = (cfg["colonies"] or 200) / (cfg["L"] or cfg["colonies"] or 200)
                target = ring_laplace(cfg["alpha"], lam, circ)
            err = abs(est.value - target)
            rep = comparison_report(f"laplace_{law}_lambda={lam}", err, est.n, max(tol, 3 * est.stderr))
            reports.append(rep)
    doc = reports[0] if len(reports) == 1 else reports
    fh = _open_out(cfg)
    try:
        fh.write(json.dumps(doc) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK if all(r["pass"] for r in reports) else EXIT_FAIL


COMMANDS = {
    "simulate-stepping": cmd_simulate_stepping,
    "simulate-ring": cmd_simulate_ring,
    "simulate-voter": cmd_simulate_voter,
    "limit": cmd_limit,
    "pde": cmd_pde,
    "kernel": cmd_kernel,
    "crossings": cmd_crossings,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = merge_config(args)
        if not 0 <= int(cfg["seed"]) < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        code = COMMANDS[args.command](cfg)
    except (UsageError, ConfigError, KernelError, LimitLawError, ValueError) as exc:
        print(f"stonewalk {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return code


if __name__ == "__main__":
    sys.exit(main())
