"""Batch front door: validate / solve / optimal / simulate / ldcheck / verify.

Every subcommand loads a model JSON (plus costs), runs one stage of the
pipeline and writes its artifacts atomically into the output directory
together with a manifest recording inputs, content hashes, package version
and wall time.  Configuration comes from an optional JSON config file with
flag overrides; there is no interactive mode.

Exit codes: 0 success, 1 domain or assumption failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, average, dp, market, modelio, simulate, verify
from .costs import cost_constants, worst_case_drag
from .grid import StateGrid


@dataclass
class RunConfig:
    model_path: str = ""
    mesh_order: int = 8
    x_min: float = 1e-3
    x_max: float = 1e4
    n_x: int = 16
    interpolation: str = "nearest-linear"
    betas: list = field(default_factory=lambda: [0.9, 0.99, 0.995, 0.999])
    tol: float = 1e-6
    tie_eps: float = 1e-10
    cross_tol: float = 5e-3
    T: int = 2000
    n_paths: int = 100
    seed: int = 12345
    x0: float = 100.0
    z0: int = 0
    output_dir: str = "out"

    def validate_fields(self):
        if self.tol <= 0 or self.tie_eps <= 0 or self.cross_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.mesh_order < 1:
            raise ValueError("mesh_order must be >= 1")
        if not 0 < self.x_min < self.x_max:
            raise ValueError("need 0 < x_min < x_max")


def _load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not doc:
            raise SystemExit(2)
        grid = doc.pop("grid", {})
        wealth = grid.pop("wealth", {})
        tolerances = doc.pop("tolerances", {})
        sim = doc.pop("simulation", {})
        flat = {
            "model_path": doc.get("model_path", cfg.model_path),
            "mesh_order": grid.get("simplex_order", cfg.mesh_order),
            "interpolation": grid.get("interpolation", cfg.interpolation),
            "x_min": wealth.get("x_min", cfg.x_min),
            "x_max": wealth.get("x_max", cfg.x_max),
            "n_x": wealth.get("n_x", cfg.n_x),
            "betas": doc.get("betas", cfg.betas),
            "tol": tolerances.get("tol", cfg.tol),
            "tie_eps": tolerances.get("tie_eps", cfg.tie_eps),
            "cross_tol": tolerances.get("cross_tol", cfg.cross_tol),
            "T": sim.get("T", cfg.T),
            "n_paths": sim.get("n_paths", cfg.n_paths),
            "seed": sim.get("seed", cfg.seed),
            "x0": sim.get("x0", cfg.x0),
            "z0": sim.get("z0", cfg.z0),
            "output_dir": doc.get("output_dir", cfg.output_dir),
        }
        cfg = RunConfig(**flat)
    for name in ("model", "output_dir", "seed", "T", "n_paths", "mesh_order",
                 "x_max"):
        val = getattr(args, name.replace("-", "_"), None)
        if val is not None:
            setattr(cfg, "model_path" if name == "model" else name, val)
    cfg.validate_fields()
    return cfg


def _json_default(obj):
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


class Runner:
    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.started = time.time()
        self.outputs = {}
        self.model, self.spec = modelio.load_model(cfg.model_path)
        if self.spec is None:
            raise ValueError("model file carries no 'costs' section")
        self.model_hash = simulate.model_fingerprint(self.model, self.spec)

    def grid(self) -> StateGrid:
        c = self.cfg
        return StateGrid.build(self.model.n_assets, c.mesh_order,
                               self.model.n_factors, x_min=c.x_min,
                               x_max=c.x_max, n_x=c.n_x,
                               interpolation=c.interpolation)

    def out(self, name: str) -> str:
        return f"{self.cfg.output_dir}/{name}"

    def write_text(self, name: str, text: str):
        path = self.out(name)
        modelio.atomic_write_text(path, text)
        self.outputs[name] = _sha256(path)

    def write_json(self, name: str, doc: dict):
        self.write_text(name, json.dumps(doc, indent=2, sort_keys=True,
                                         default=_json_default) + "\n")

    def register(self, name: str):
        self.outputs[name] = _sha256(self.out(name))

    def finish(self):
        manifest = {
            "command": self.command,
            "package_version": __version__,
            "config": asdict(self.cfg),
            "model_hash": self.model_hash,
            "outputs": self.outputs,
            "timing": {
                "started_at": time.strftime("%Y-%m-%dT%H:%M:%SZ",
                                            time.gmtime(self.started)),
                "wall_time_s": round(time.time() - self.started, 3),
            },
        }
        modelio.atomic_write_text(self.out("manifest.json"),
                                  json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_validate(cfg: RunConfig) -> int:
    runner = Runner(cfg, "validate")
    report = market.validate(runner.model)
    doc = {"checks": {k: {"passed": p, "detail": d}
                      for k, (p, d) in report.checks.items()}}
    ok = report.ok
    if ok:
        eta = worst_case_drag(runner.spec)
        erg = market.ergodic_report(runner.model, eta=eta)
        doc["kappa"] = erg.kappa
        doc["mixing_step"] = erg.mixing_step
        doc["floor_rate"] = erg.floor_rate
        doc["eta"] = eta
        doc["growth_exceeds_drag"] = erg.growth_exceeds_drag
        doc["stationary"] = [float(v) for v in erg.stationary]
        if not erg.growth_exceeds_drag:
            ok = False
            doc["checks"]["growth_exceeds_drag"] = {
                "passed": False,
                "detail": f"eta {eta:.6g} >= floor rate {erg.floor_rate:.6g}",
            }
        else:
            try:
                cc = cost_constants(runner.spec, erg.floor_rate)
                doc["constants"] = {
                    "eta_m": cc.eta_m,
                    "wealth_threshold": cc.wealth_threshold,
                    "resync_wealth": cc.resync_wealth,
                    "x_star": cc.x_star,
                }
            except ValueError as exc:
                ok = False
                doc["checks"]["cost_constants"] = {"passed": False,
                                                   "detail": str(exc)}
    doc["ok"] = ok
    runner.write_json("validate.json", doc)
    runner.finish()
    for name, entry in doc["checks"].items():
        print(f"[{'PASS' if entry['passed'] else 'FAIL'}] {name}: {entry['detail']}")
    if ok:
        print(f"kappa={doc['kappa']:.6f} floor_rate={doc['floor_rate']:.6g} "
              f"eta={doc['eta']:.6g}")
    return 0 if ok else 1


def cmd_solve(cfg: RunConfig, beta: float) -> int:
    runner = Runner(cfg, "solve")
    vf, pol, rep = dp.solve_discounted(runner.model, runner.spec, runner.grid(),
                                       beta, tol=cfg.tol, tie_eps=cfg.tie_eps)
    modelio.dump_solution(vf, pol, runner.out("value_beta"), runner.model_hash,
                          seed=cfg.seed)
    runner.register("value_beta.csv")
    runner.register("value_beta.json")
    runner.write_json("solve_report.json", {
        "beta": beta, "variant": rep.variant, "iterations": rep.iterations,
        "init_iterations": rep.init_iterations, "final_diff": rep.final_diff,
        "error_bound": rep.error_bound,
    })
    runner.finish()
    print(f"solved beta={beta} ({rep.variant}) in {rep.iterations} iterations; "
          f"sup-norm error <= {rep.error_bound:.2e}")
    return 0


def cmd_optimal(cfg: RunConfig) -> int:
    runner = Runner(cfg, "optimal")
    grid = runner.grid()
    report, policy = average.vanishing_discount(runner.model, runner.spec, grid,
                                                cfg.betas, tol=cfg.tol)
    modelio.dump_solution(
        report.fixed_value if report.fixed_value is not None else report.prop_value,
        policy, runner.out("policy"), runner.model_hash, seed=cfg.seed)
    runner.register("policy.csv")
    runner.register("policy.json")
    modelio.dump_solution(report.prop_value, report.prop_policy,
                          runner.out("policy_prop"), runner.model_hash,
                          seed=cfg.seed)
    runner.register("policy_prop.csv")
    runner.register("policy_prop.json")
    residual = average.bellman_residual(policy, report.relative_value,
                                        report.growth_rate, runner.model,
                                        runner.spec)
    doc = report.to_json_dict()
    doc["policy_ref"] = "policy"
    doc["residual_summary"] = {"min_slack": residual.min_slack,
                               "mean_slack": residual.mean_slack}
    runner.write_json("optimal.json", doc)
    runner.finish()
    print(f"growth rate {report.growth_rate:.6f} "
          f"(extrapolated {report.growth_rate_extrapolated:.6f}); "
          f"estimates per beta: "
          + ", ".join(f"{b}:{l:.6f}" for b, l in zip(report.betas,
                                                     report.growth_estimates)))
    return 0


def cmd_simulate(cfg: RunConfig, policy_base: str, mimic: str) -> int:
    runner = Runner(cfg, "simulate")
    policy = modelio.load_policy(policy_base)
    wants_mimic = (mimic == "on") or (mimic == "auto" and policy.wealth_free
                                      and runner.spec.fixed > 0)
    if wants_mimic:
        if not policy.wealth_free:
            raise ValueError("mimicking requires a wealth-free base policy")
        floor_rate, _ = market.growth_floor(runner.model)
        constants = cost_constants(runner.spec, floor_rate)
        strategy = simulate.MimickingStrategy(
            average.build_mimicking(policy, constants))
    else:
        strategy = simulate.GridPolicyStrategy(policy)
    pi0 = np.full(runner.model.n_assets, 1.0 / runner.model.n_assets)
    est = simulate.average_growth(runner.model, runner.spec, strategy, pi0,
                                  cfg.x0, cfg.z0, cfg.T, cfg.n_paths, cfg.seed)
    strategy.reset(1)
    traj = simulate.run(runner.model, runner.spec, strategy, pi0, cfg.x0,
                        cfg.z0, cfg.T, cfg.seed, stream=0)
    runner.write_text("trajectory.csv", modelio.trajectory_csv(traj))
    runner.write_json("simulate.json", {
        "growth_mean": est.mean, "growth_se": est.std_error,
        "window_mean": est.window_mean, "T": est.T, "n_paths": est.n_paths,
        "annihilated_paths": est.annihilated_paths, "seed": cfg.seed,
        "policy_ref": policy_base, "mimicking": bool(wants_mimic),
    })
    runner.finish()
    print(f"growth {est.mean:.6f} +- {est.std_error:.2e} "
          f"({est.n_paths} paths, T={est.T})"
          + (f"; {est.annihilated_paths} paths annihilated" if est.flagged else ""))
    return 1 if est.flagged else 0


def cmd_ldcheck(cfg: RunConfig, eps, t_max: int) -> int:
    runner = Runner(cfg, "ldcheck")
    floor_rate, floor_returns = market.growth_floor(runner.model)
    if eps is None:
        eps = 0.25 * (floor_rate - float(np.log(floor_returns).min()))
    base = max(4, t_max // 8)
    t_grid = [base * k for k in (1, 2, 3, 4, 6, 8)]
    result = simulate.ld_tail(runner.model, t_grid, eps, cfg.n_paths, cfg.seed)
    runner.write_text("ld_tail.csv", modelio.ld_tail_csv(result))
    runner.write_json("ldcheck.json", {
        "eps": eps, "slope": result.slope, "slope_se": result.slope_se,
        "decaying": result.decaying(), "floor_rate": result.floor_rate,
    })
    runner.finish()
    print(f"tail slope {result.slope:.5f} +- {result.slope_se:.5f} "
          f"({'decaying' if result.decaying() else 'no decay detected'})")
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    runner = Runner(cfg, "verify")
    results = verify.run_all(runner.model, runner.spec, seed=cfg.seed)
    for res in results:
        print(res.line())
    runner.write_json("verify.json", {
        r.name: {"passed": r.passed, "detail": r.detail} for r in results})
    runner.finish()
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="growthopt",
                                description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--model", help="model JSON path (overrides config)")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--T", type=int, dest="T")
    p.add_argument("--n-paths", type=int, dest="n_paths")
    p.add_argument("--mesh-order", type=int, dest="mesh_order")
    p.add_argument("--x-max", type=float, dest="x_max")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate")
    sp = sub.add_parser("solve")
    sp.add_argument("--beta", type=float, required=True)
    sub.add_parser("optimal")
    sp = sub.add_parser("simulate")
    sp.add_argument("--policy", required=True,
                    help="path base of a policy dump (without extension)")
    sp.add_argument("--mimic", choices=["auto", "on", "off"], default="auto")
    sp = sub.add_parser("ldcheck")
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--t-max", type=int, default=256, dest="t_max")
    sub.add_parser("verify")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if not cfg.model_path:
            print("error: no model file given (use --model or a config file)",
                  file=sys.stderr)
            return 2
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "solve":
            return cmd_solve(cfg, args.beta)
        if args.command == "optimal":
            return cmd_optimal(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.policy, args.mimic)
        if args.command == "ldcheck":
            return cmd_ldcheck(cfg, args.eps, args.t_max)
        if args.command == "verify":
            return cmd_verify(cfg)
        return 2
    except (ValueError, RuntimeError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
