"""Command-line front end.

Subcommands::

    snnopt solve {nnls,l1}   simulate a solver network, write solution and traces
    snnopt verify            run with coupling diagnostics, write a lemma report
    snnopt gamma             niceness of a matrix
    snnopt bench             eps-vs-time curves for a batch of instances
    snnopt probe             bucketed projection probe on a random-sphere matrix

Every option may also be given in a JSON file passed with ``--config``; keys
are the option names with dashes replaced by underscores and command-line
flags take precedence. Exit codes: 0 ok, 1 other error, 2 parse error,
3 divergence, 4 lemma violation, 5 cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coupling import (
    CouplingConfig,
    CouplingDiagnostics,
    check_lemma_suite,
    default_alpha,
    default_tau,
    estimate_gamma,
)
from .errors import CapExceededError, InfeasibleError, ParseError, SnnOptError
from .io import dumps, read_instance, read_matrix_market, write_json
from .niceness import gamma_exact, gamma_sampled, gamma_upper_probe, rsm_sample
from .oracles import DEFAULT_EPS_GRID, epsilon_report, l1_solve_enum, nnls_solve
from .problem import ProblemInstance, figure6_instance, figure7_instance, rsm_instance
from .sim import (
    SimConfig,
    build_network,
    default_dt,
    signed_rate,
    simulate,
    two_sided_to_one_sided,
    write_events_csv,
    write_snapshots_csv,
)

log = logging.getLogger("snnopt")

EXIT_OK, EXIT_PARSE, EXIT_DIVERGENCE, EXIT_LEMMA, EXIT_CAP = 0, 2, 3, 4, 5
BUILTINS = {"figure6": figure6_instance, "figure7": figure7_instance}
MAX_STEPS = 10**8


@dataclass
class RunConfig:
    """Resolved options for one command; see :func:`resolve_config`."""

    command: str
    kind: str | None = None
    matrix: str | None = None
    rhs: str | None = None
    builtin: str | None = None
    rsm: list | None = None
    seed: int = 0
    alpha: float | None = None
    eta: float = 1.0
    tau: float | None = None
    tau_factor: float = 1.0
    alpha_ratio_factor: float = 1.0
    alpha_poly_factor: float = 1.0
    dt: float | None = None
    horizon: float | None = None
    probe_stride: int | None = None
    cascade_cap: int | None = None
    max_steps: int = MAX_STEPS
    sidedness: str | None = None
    tolerance: float | None = None
    out: str = "."
    exact: bool = False
    trials: int = 10_000
    seeds: int = 10
    instances: list = field(default_factory=list)
    workers: int = 1
    m: int | None = None
    n: int | None = None

    def validate(self) -> None:
        for name in ("alpha", "tau", "dt", "horizon", "eta", "tolerance"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.tau is not None and not self.tau < 1:
            raise ValueError("tau must be below 1")
        if self.rsm is not None and (len(self.rsm) != 2 or min(self.rsm) < 1):
            raise ValueError("rsm takes two positive sizes M N")
        if self.sidedness not in (None, "one-sided", "two-sided"):
            raise ValueError("sidedness must be one-sided or two-sided")
        if self.workers < 1 or self.seeds < 0 or self.trials < 1:
            raise ValueError("workers and trials must be positive, seeds nonnegative")


def _instance_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("instance")
    g.add_argument("--matrix", help="A in Matrix Market array format")
    g.add_argument("--rhs", help="b, one value per line")
    g.add_argument("--builtin", choices=sorted(BUILTINS))
    g.add_argument("--rsm", nargs=2, type=int, metavar=("M", "N"), help="random-sphere instance")
    g.add_argument("--seed", type=int)


def _sim_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("simulation")
    g.add_argument("--alpha", type=float)
    g.add_argument("--eta", type=float)
    g.add_argument("--dt", type=float)
    g.add_argument("--horizon", type=float)
    g.add_argument("--probe-stride", type=int)
    g.add_argument("--cascade-cap", type=int)
    g.add_argument("--max-steps", type=int)
    g.add_argument("--sidedness", choices=["one-sided", "two-sided"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snnopt", description="Spiking network solvers for NNLS and l1 minimization.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with option values")
        p.add_argument("--out", help="output directory (gamma/probe: output file, default stdout)")

    p = sub.add_parser("solve", help="simulate a solver network")
    p.add_argument("kind", choices=["nnls", "l1"])
    _instance_options(p)
    _sim_options(p)
    common(p)

    p = sub.add_parser("verify", help="run with coupling diagnostics and check the lemma suite")
    _instance_options(p)
    _sim_options(p)
    p.add_argument("--tau", type=float)
    p.add_argument("--tau-factor", type=float)
    p.add_argument("--alpha-ratio-factor", type=float)
    p.add_argument("--alpha-poly-factor", type=float)
    p.add_argument("--tolerance", type=float)
    common(p)

    p = sub.add_parser("gamma", help="niceness of a matrix")
    p.add_argument("--matrix")
    p.add_argument("--builtin", choices=sorted(BUILTINS))
    p.add_argument("--rsm", nargs=2, type=int, metavar=("M", "N"))
    p.add_argument("--seed", type=int)
    p.add_argument("--exact", action="store_true", default=None, help="fail with exit 5 instead of sampling")
    p.add_argument("--trials", type=int)
    common(p)

    p = sub.add_parser("bench", help="eps-vs-time curves for a batch of instances")
    p.add_argument("kind", choices=["nnls", "l1"])
    p.add_argument("--rsm", nargs=2, type=int, metavar=("M", "N"))
    p.add_argument("--seeds", type=int, help="number of consecutive seeds (default 10)")
    p.add_argument("--seed", type=int, help="first seed")
    p.add_argument("--instances", nargs="*", help="directories holding A.mtx and b.txt")
    p.add_argument("--workers", type=int)
    _sim_options(p)
    common(p)

    p = sub.add_parser("probe", help="bucketed projection probe")
    p.add_argument("--m", type=int, required=False)
    p.add_argument("--n", type=int, required=False)
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int)
    common(p)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge the JSON config file with flags; flags win."""
    values: dict = {}
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ParseError(f"cannot read file: {exc.strerror}", args.config) from None
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, args.config, exc.lineno) from None
        if not isinstance(loaded, dict):
            raise ParseError("config must be a JSON object", args.config, 1)
        known = set(RunConfig.__dataclass_fields__)
        unknown = sorted(set(loaded) - known)
        if unknown:
            raise ParseError(f"unknown config keys: {', '.join(unknown)}", args.config)
        values.update(loaded)
    for key, value in vars(args).items():
        if key != "config" and value is not None:
            values[key] = value
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# -- instance helpers ------------------------------------------------------
def load_instance(cfg: RunConfig) -> tuple[ProblemInstance, dict]:
    sources = [cfg.matrix is not None, cfg.builtin is not None, cfg.rsm is not None]
    if sum(sources) != 1:
        raise ValueError("give exactly one of --matrix/--rhs, --builtin, --rsm")
    if cfg.matrix is not None:
        if cfg.rhs is None:
            raise ValueError("--matrix needs --rhs")
        return read_instance(cfg.matrix, cfg.rhs), {"source": "files", "matrix": cfg.matrix, "rhs": cfg.rhs}
    if cfg.builtin is not None:
        return BUILTINS[cfg.builtin](), {"source": cfg.builtin}
    m, n = cfg.rsm
    return rsm_instance(m, n, cfg.seed), {"source": "rsm", "m": m, "n": n}


def _sim_setup(cfg: RunConfig, instance: ProblemInstance, two_sided: bool, alpha: float, horizon: float):
    net = build_network(instance, "two-sided" if two_sided else "one-sided", alpha, cfg.eta)
    if cfg.sidedness == "one-sided" and two_sided:
        net = two_sided_to_one_sided(net)
    dt = cfg.dt if cfg.dt is not None else default_dt(net)
    sim_cfg = SimConfig(dt, horizon, cfg.cascade_cap, cfg.probe_stride)
    if sim_cfg.n_steps > cfg.max_steps:
        raise CapExceededError(
            f"{sim_cfg.n_steps} steps exceed max_steps {cfg.max_steps}; raise alpha or dt, or shorten the horizon"
        )
    return net, sim_cfg


def _oracle(kind: str, instance: ProblemInstance):
    """Oracle solution, or ``(None, reason)`` when it cannot be computed."""
    try:
        if kind == "nnls":
            return nnls_solve(instance.A, instance.b), None
        return l1_solve_enum(instance.A, instance.b), None
    except (CapExceededError, InfeasibleError) as exc:
        return None, str(exc)


def _eps_dict(rep) -> dict:
    return {
        "eps_l2": rep.eps_l2,
        "eps_l1": rep.eps_l1,
        "absolute_gap": rep.absolute_gap,
        "passes_at": {format(k, "g"): v for k, v in rep.passes_at.items()},
    }


# -- commands --------------------------------------------------------------
def cmd_solve(cfg: RunConfig) -> int:
    instance, source = load_instance(cfg)
    two_sided = cfg.kind == "l1"
    if cfg.kind == "nnls" and cfg.sidedness == "two-sided":
        raise ValueError("nnls uses a one-sided network")
    alpha = cfg.alpha if cfg.alpha is not None else 0.01
    horizon = cfg.horizon if cfg.horizon is not None else 200.0
    net, sim_cfg = _sim_setup(cfg, instance, two_sided, alpha, horizon)
    trace = simulate(net, sim_cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    x = signed_rate(net, trace.snapshots[-1].x) if trace.snapshots else np.zeros(instance.n)
    oracle, reason = _oracle(cfg.kind, instance)
    report = {
        "command": "solve",
        "kind": cfg.kind,
        "instance": {**source, "m": instance.m, "n": instance.n},
        "seed": cfg.seed if source["source"] == "rsm" else None,
        "params": {
            "alpha": alpha, "eta": cfg.eta, "dt": sim_cfg.dt, "horizon": horizon,
            "sidedness": net.sidedness.value, "steps": sim_cfg.n_steps,
        },
        "x": x,
        "t": trace.final_state.t,
        "events": int(trace.event_times.size),
        "cascade_steps": trace.cascades,
        "max_cascade_rounds": trace.max_rounds,
    }
    if oracle is None:
        report["eps"] = {"available": False, "reason": reason}
    else:
        report["oracle"] = {"x_opt": oracle.x_opt, "objective": oracle.objective, "method": oracle.method}
        report["eps"] = {"available": True, **_eps_dict(epsilon_report(instance, x, cfg.kind, oracle))}
    write_json(out / "solution.json", report)
    write_events_csv(trace, out / "events.csv")
    write_snapshots_csv(trace, out / "snapshots.csv")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    instance, source = load_instance(cfg)
    A = instance.A
    gamma = None
    tau = cfg.tau
    if tau is None:
        gamma = estimate_gamma(A, cfg.trials, cfg.seed)
        tau = default_tau(A, gamma, cfg.tau_factor)
    alpha = cfg.alpha
    if alpha is None:
        gamma = estimate_gamma(A, cfg.trials, cfg.seed) if gamma is None else gamma
        alpha = default_alpha(tau, instance.m, gamma, cfg.alpha_ratio_factor, cfg.alpha_poly_factor)
    horizon = cfg.horizon if cfg.horizon is not None else 10.0
    tolerance = cfg.tolerance if cfg.tolerance is not None else 1e-6
    coupling_cfg = CouplingConfig(tau, eta=cfg.eta)
    net, sim_cfg = _sim_setup(cfg, instance, True, alpha, horizon)
    if net.mirrored:
        raise ValueError("verify runs the two-sided network directly")
    oracle, _ = _oracle("l1", instance)
    diag = CouplingDiagnostics(instance, net, coupling_cfg, sim_cfg.dt, None if oracle is None else oracle.objective)
    trace = simulate(net, sim_cfg, [diag])
    report = check_lemma_suite(trace, instance, coupling_cfg, tolerance)
    perturb = [s.payload["perturbation"] for s in trace.snapshots if "perturbation" in s.payload]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": "verify",
        "instance": {**source, "m": instance.m, "n": instance.n},
        "seed": cfg.seed if source["source"] == "rsm" else None,
        "params": {
            "alpha": alpha, "tau": tau, "eta": cfg.eta, "dt": sim_cfg.dt, "horizon": horizon,
            "gamma_estimate": gamma, "tau_factor": cfg.tau_factor,
            "alpha_ratio_factor": cfg.alpha_ratio_factor, "alpha_poly_factor": cfg.alpha_poly_factor,
        },
        "events": int(trace.event_times.size),
        **report.as_dict(),
    }
    if perturb:
        doc["perturbation_bound"] = {
            "holds_at_every_probe": all(p.holds for p in perturb),
            "min_slack": min(p.slack for p in perturb),
            "probes": len(perturb),
        }
    write_json(out / "lemma_report.json", doc)
    if not report.passed:
        failed = [k for k, c in report.checks.items() if not c["pass"]]
        log.warning("lemma checks failed: %s", ", ".join(failed) or "decomposition")
        return EXIT_LEMMA
    return EXIT_OK


def _emit(cfg: RunConfig, doc: dict) -> None:
    if cfg.out in (None, ".", "-"):
        sys.stdout.write(dumps(doc))
    else:
        write_json(cfg.out, doc)


def cmd_gamma(cfg: RunConfig) -> int:
    sources = [cfg.matrix is not None, cfg.builtin is not None, cfg.rsm is not None]
    if sum(sources) != 1:
        raise ValueError("give exactly one of --matrix, --builtin, --rsm")
    if cfg.matrix is not None:
        A, source = read_matrix_market(cfg.matrix), {"source": "file", "matrix": cfg.matrix}
    elif cfg.builtin is not None:
        A, source = BUILTINS[cfg.builtin]().A, {"source": cfg.builtin}
    else:
        A, source = rsm_sample(cfg.rsm[0], cfg.rsm[1], cfg.seed), {"source": "rsm", "m": cfg.rsm[0], "n": cfg.rsm[1]}
    try:
        rep = gamma_exact(A)
    except CapExceededError:
        if cfg.exact:
            raise
        rep = gamma_sampled(A, cfg.trials, cfg.seed)
    _emit(cfg, {"command": "gamma", "instance": source, "seed": cfg.seed, **rep.as_dict()})
    return EXIT_OK


def cmd_probe(cfg: RunConfig) -> int:
    if cfg.m is None or cfg.n is None:
        raise ValueError("probe needs --m and --n")
    tau = cfg.tau if cfg.tau is not None else 1.0
    curve = gamma_upper_probe(cfg.m, cfg.n, tau, cfg.seed)
    _emit(cfg, {
        "command": "probe", "m": cfg.m, "n": cfg.n, "tau": tau, "seed": cfg.seed,
        "bucket_size": curve.bucket_size, "residuals": curve.residuals,
        "correlations": curve.correlations, "thresholds_met": curve.thresholds_met.tolist(),
        "strictly_decreasing": curve.strictly_decreasing(), "slope": curve.slope,
        "gamma_upper": curve.gamma_upper,
    })
    return EXIT_OK


def _bench_one(job: dict) -> dict:
    """Run one bench instance; never raises."""
    name, kind = job["name"], job["kind"]
    row = {"name": name, "seed": job.get("seed"), "status": "ok"}
    try:
        if job.get("rsm") is not None:
            instance = rsm_instance(job["rsm"][0], job["rsm"][1], job["seed"])
        else:
            d = Path(job["dir"])
            instance = read_instance(d / "A.mtx", d / "b.txt")
        cfg = RunConfig(**job["cfg"])
        net, sim_cfg = _sim_setup(cfg, instance, kind == "l1", job["alpha"], job["horizon"])
        trace = simulate(net, sim_cfg)
        oracle, reason = _oracle(kind, instance)
        if oracle is None:
            raise SnnOptError(f"oracle unavailable: {reason}")
        curve = []
        for snap in trace.snapshots:
            rep = epsilon_report(instance, signed_rate(net, snap.x), kind, oracle)
            curve.append((snap.t, rep.eps_l2, rep.eps_l1))
        reach = {}
        for eps in DEFAULT_EPS_GRID:
            hit = next((t for t, e2, e1 in curve if e2 <= eps and (e1 is None or e1 <= eps)), None)
            reach[format(eps, "g")] = hit
        row.update({
            "events": int(trace.event_times.size),
            "final_eps_l2": curve[-1][1] if curve else None,
            "final_eps_l1": curve[-1][2] if curve else None,
            "time_to_eps": reach,
        })
        row["curve"] = curve
    except (SnnOptError, ValueError) as exc:
        row.update({"status": "failed", "error": f"{type(exc).__name__}: {exc}"})
    return row


def cmd_bench(cfg: RunConfig) -> int:
    alpha = cfg.alpha if cfg.alpha is not None else 0.01
    horizon = cfg.horizon if cfg.horizon is not None else 200.0
    sim_fields = {k: getattr(cfg, k) for k in ("dt", "probe_stride", "cascade_cap", "max_steps", "eta", "sidedness")}
    sim_fields["command"] = "bench"
    jobs = []
    if cfg.rsm is not None:
        for seed in range(cfg.seed, cfg.seed + cfg.seeds):
            jobs.append({"name": f"rsm_{cfg.rsm[0]}x{cfg.rsm[1]}_seed{seed}", "rsm": cfg.rsm, "seed": seed})
    for d in cfg.instances:
        jobs.append({"name": Path(d).name, "dir": str(d)})
    for job in jobs:
        job.update({"kind": cfg.kind, "alpha": alpha, "horizon": horizon, "cfg": sim_fields})
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_bench_one, jobs))
    else:
        rows = [_bench_one(job) for job in jobs]
    out = Path(cfg.out)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    for row in rows:
        curve = row.pop("curve", None)
        if curve is None:
            continue
        with open(out / "curves" / f"{row['name']}.csv", "w") as fh:
            fh.write("time,eps_l2,eps_l1\n")
            for t, e2, e1 in curve:
                fh.write(f"{t!r},{e2!r},{'' if e1 is None else repr(e1)}\n")
    failed = sum(row["status"] != "ok" for row in rows)
    summary = {
        "command": "bench", "kind": cfg.kind, "seed": cfg.seed, "alpha": alpha, "horizon": horizon,
        "eps_grid": list(DEFAULT_EPS_GRID), "instances": rows, "failed": failed,
    }
    write_json(out / "summary.json", summary)
    if failed:
        log.warning("%d of %d instances failed", failed, len(rows))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "gamma": cmd_gamma, "bench": cmd_bench, "probe": cmd_probe}


def main(argv=None) -> int:
    logging.basicConfig(format="snnopt: %(levelname)s: %(message)s", level=logging.INFO)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.command](cfg)
    except SnnOptError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except (ValueError, TypeError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
