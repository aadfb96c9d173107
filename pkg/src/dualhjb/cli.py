"""Command-line front end: solve -> recover -> simulate -> verify pipelines.

    dualhjb solve    --config cfg [--out DIR]
    dualhjb recover  --config cfg --dual DIR/dual.csv [--out DIR]
    dualhjb simulate --config cfg --primal DIR/primal.csv [--out DIR]
                     [--seed N] [--threads N] [--dump-paths]
    dualhjb verify   --config cfg [--out DIR] [--seed N] [--threads N]
    dualhjb app      --config cfg [--out DIR] [--seed N]

Every command writes its numeric artifacts atomically plus a manifest
embedding the config hash; re-running an identical config reproduces
byte-identical numeric outputs (timings live only in the manifest).
Exit codes: 0 success, 2 config parse error, 3 model validation error,
4 missing upstream artifact, 5 verification failures, 6 other package
errors, 1 unexpected.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .applications import (
    PowerRunning,
    exponential_horizon,
    illiquid_reduction,
    kv_fixed_point,
    liquidation_value,
    random_horizon_equivalence,
    random_horizon_transform,
)
from .artifacts import (
    PATHS_SCHEMA,
    dual_from_csv,
    dual_to_csv,
    primal_from_csv,
    primal_to_csv,
    write_csv,
    write_json,
)
from .config import RunConfig, load_config
from .dual_solver import check_dual_invariants, solve_dual
from .errors import CliError, DualhjbError, ModelError, ModelValidationError
from .model import validate_model
from .primal import check_primal_invariants, recover, sup_transform_slice
from .simulate import (
    paired_supermartingale,
    simulate_closed_loop,
    simulate_dual_state,
    value_at,
    verification_test,
)
from .transforms import build_bundle
from . import merton

VERIFY_FAIL_EXIT = 5


def _oracle_marker(cfg: RunConfig):
    """Merton closed-form marker when the configured model admits one."""
    if not (cfg.has("market") and cfg.has("utility")):
        return None
    u = cfg.utility()
    m = cfg.market()
    fam = u.power
    if fam is None or not fam.constant or (fam.a_x0 or 0.0) != 0.0:
        return None
    b = getattr(m.b, "constant_value", None)
    s = getattr(m.sigma, "constant_value", None)
    if b is None or s is None or (fam.a_c0 or 0.0) <= 0.0:
        return None
    return {"kind": "merton", "p": u.p, "b": b, "sigma": s, "T": m.T,
            "a_c": fam.a_c0, "a_T": fam.a_T}


def _manifest(cfg: RunConfig, outputs: list[str], timings: dict, seed=None, extra=None) -> dict:
    man = {
        "tool": "dualhjb",
        "version": __version__,
        "config_hash": cfg.config_hash,
        "outputs": outputs,
    }
    if seed is not None:
        man["seed"] = seed
    oracle = _oracle_marker(cfg)
    if oracle is not None:
        man["oracle"] = oracle
    if extra:
        man.update(extra)
    man["timings"] = timings
    return man


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    t_start = time.perf_counter()
    market = cfg.market()
    utility = cfg.utility()
    report = validate_model(market, utility)
    if not report.passed:
        raise ModelValidationError(str(report.failures[0].name))
    grid = cfg.grid(market.T)
    sol = solve_dual(market, utility, grid, validate=False)
    solve_s = time.perf_counter() - t_start
    meta = {"config_hash": cfg.config_hash}
    oracle = _oracle_marker(cfg)
    if oracle is not None:
        meta["oracle"] = oracle["kind"]
    dual_to_csv(sol, out / "dual.csv", meta)
    write_json(out / "solve_manifest.json",
               _manifest(cfg, ["dual.csv"], {"solve_s": solve_s},
                         extra={"grid": {"y_min": grid.y_min, "y_max": grid.y_max,
                                         "n_y": grid.n_y, "n_t": grid.n_t, "T": grid.T},
                                "max_residual": sol.diagnostics.max_residual}))
    print(f"wrote {out / 'dual.csv'} ({grid.n_t + 1} x {grid.n_y} nodes)")
    return 0


def cmd_recover(cfg: RunConfig, dual_path: Path, out: Path) -> int:
    t_start = time.perf_counter()
    market = cfg.market()
    utility = cfg.utility()
    sol, _ = dual_from_csv(dual_path)
    primal = recover(sol, utility, market, n_x=cfg.n_x())
    meta = {"config_hash": cfg.config_hash}
    oracle = _oracle_marker(cfg)
    if oracle is not None:
        meta["oracle"] = oracle["kind"]
    primal_to_csv(primal, out / "primal.csv", meta)
    write_json(out / "recover_manifest.json",
               _manifest(cfg, ["primal.csv"], {"recover_s": time.perf_counter() - t_start}))
    print(f"wrote {out / 'primal.csv'} ({len(primal.t)} x {len(primal.x)} nodes)")
    return 0


def cmd_simulate(cfg: RunConfig, primal_path: Path, out: Path,
                 seed=None, threads=None, dump_paths=False) -> int:
    t_start = time.perf_counter()
    market = cfg.market()
    utility = cfg.utility()
    primal, _ = primal_from_csv(primal_path)
    sim = cfg.sim(seed_override=seed, threads=threads, dump_paths=dump_paths)
    t0, x0 = cfg.sim_point()
    trace = [] if dump_paths else None
    rep = simulate_closed_loop(t0, x0, primal, market, utility, sim, trace=trace)
    reference = value_at(primal, t0, x0)
    body = rep.to_dict()
    body["reference"] = reference
    body["t0"] = t0
    body["x0"] = x0
    body["seed"] = sim.seed
    write_json(out / "simreport.json", body)
    outputs = ["simreport.json"]
    if dump_paths and trace:
        cols = list(zip(*trace))
        write_csv(out / "paths.csv", {"schema": PATHS_SCHEMA, "config_hash": cfg.config_hash},
                  ["path", "t", "X", "c", "pi"], [np.asarray(c) for c in cols])
        outputs.append("paths.csv")
    write_json(out / "simulate_manifest.json",
               _manifest(cfg, outputs, {"simulate_s": time.perf_counter() - t_start}, seed=sim.seed))
    print(f"estimate {rep.estimate:.6g} +- {rep.std_error:.2g} (reference {reference:.6g})")
    return 0


def cmd_verify(cfg: RunConfig, out: Path, seed=None, threads=None) -> int:
    """Full invariant suite on the configured model: dual structure checks,
    oracle comparison when a closed form applies, primal class membership,
    duality-gap and involution bounds, and the Monte Carlo verification
    theorem with a small perturbation set."""
    t_start = time.perf_counter()
    checks: list[dict] = []

    def record(name: str, passed: bool, detail: str = ""):
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    market = cfg.market()
    utility = cfg.utility()
    vrep = validate_model(market, utility)
    record("model_validation", vrep.passed,
           "" if vrep.passed else str(vrep.failures[0].name))
    if not vrep.passed:
        write_json(out / "verify_report.json", {"passed": False, "checks": checks})
        return VERIFY_FAIL_EXIT

    grid = cfg.grid(market.T)
    bundle = build_bundle(utility)
    sol = solve_dual(market, utility, grid, bundle=bundle, validate=False)
    inv = check_dual_invariants(sol, bundle)
    for k, v in inv.items():
        record(f"dual.{k}", v)

    oracle = _oracle_marker(cfg)
    region = (sol.y >= 0.2) & (sol.y <= 5.0)
    tmask = sol.t <= 0.9 * market.T
    if oracle is not None:
        Wex = merton.dual_value_W(sol.t[:, None], sol.y[None, :], oracle["p"],
                                  oracle["b"], oracle["sigma"], oracle["T"],
                                  oracle["a_T"], oracle["a_c"])
        sub = np.ix_(tmask, region)
        err = float(np.max(np.abs(sol.W[sub] - Wex[sub]) / np.abs(Wex[sub])))
        record("dual.oracle_error", err <= 5e-3, f"max rel err {err:.2e}")

    primal = recover(sol, utility, market, n_x=cfg.n_x())
    pinv = check_primal_invariants(primal, utility)
    for k, v in pinv.items():
        record(f"primal.{k}", v)

    gap = primal.duality_gap
    gtol = grid.dxi ** 2 * (1.0 + np.abs(primal.V))
    record("primal.duality_gap",
           bool(np.all(gap >= -1e-8)) and bool(np.all(gap <= gtol)),
           f"gap in [{gap.min():.2e}, {gap.max():.2e}]")

    ys = sol.y[region]
    dev_ok = True
    for n in (0, grid.n_t // 2):
        wt = sup_transform_slice(primal, n, ys)
        tol = 2.0 * (grid.dxi ** 2 + np.log(primal.x[1] / primal.x[0]) ** 2) \
            * (1.0 + np.abs(sol.W[n][region]))
        dev_ok &= bool(np.all(np.abs(wt - sol.W[n][region]) <= tol))
    record("primal.involution", dev_ok)

    if oracle is not None:
        Vex = merton.primal_value_V(primal.t[:, None], primal.x[None, :], oracle["p"],
                                    oracle["b"], oracle["sigma"], oracle["T"],
                                    oracle["a_T"], oracle["a_c"])
        xm = (primal.x >= 0.25) & (primal.x <= 4.0)
        sub = np.ix_(primal.t <= 0.9 * market.T, xm)
        perr = float(np.max(np.abs(primal.V[sub] - Vex[sub]) / np.abs(Vex[sub])))
        record("primal.oracle_error", perr <= 1e-2, f"max rel err {perr:.2e}")

    sim = cfg.sim(seed_override=seed, threads=threads)
    t0, x0 = cfg.sim_point()
    perts = cfg.perturbations() or [(0.5, 1.0), (2.0, 2.0)]
    mc = verification_test(t0, x0, primal, market, utility, sim, perturbations=perts)
    for c in mc.checks:
        record(f"mc.{c.name}", c.passed, c.detail)

    if oracle is not None:
        dual_cfg = sim
        drep = simulate_dual_state(t0, 1.0, lambda t, y: np.zeros_like(y), market, bundle, dual_cfg)
        wref = float(merton.dual_value_W(t0, 1.0, oracle["p"], oracle["b"], oracle["sigma"],
                                         oracle["T"], oracle["a_T"], oracle["a_c"]))
        ok = abs(drep.estimate - wref) <= 2.0 * drep.std_error
        record("mc.dual_state_u0", ok,
               f"est {drep.estimate:.5g} vs W {wref:.5g} (2SE {2 * drep.std_error:.2g})")
        srep = paired_supermartingale(t0, x0, 1.0, primal, market, dual_cfg)
        record("mc.supermartingale", srep.estimate <= x0 * 1.0 + 2.0 * srep.std_error,
               f"est {srep.estimate:.5g} vs bound {x0:.5g}")

    passed = all(c["passed"] for c in checks)
    write_json(out / "verify_report.json",
               {"passed": passed, "checks": checks,
                "config_hash": cfg.config_hash,
                "elapsed_s": time.perf_counter() - t_start})
    for c in checks:
        print(f"[{'ok' if c['passed'] else 'FAIL'}] {c['name']}" +
              (f" ({c['detail']})" if c["detail"] and not c["passed"] else ""))
    return 0 if passed else VERIFY_FAIL_EXIT


def cmd_app(cfg: RunConfig, out: Path, seed=None) -> int:
    t_start = time.perf_counter()
    ran_any = False
    outputs: list[str] = []

    if cfg.has("random_horizon"):
        ran_any = True
        rh = cfg.random_horizon()
        market = cfg.market()
        utility_cfg = cfg.utility()
        p = utility_cfg.p
        spec = exponential_horizon(
            rh["rate"], market.T,
            G1=PowerRunning(rh["g1_coef"], p),
            G2=PowerRunning(rh["g2_coef"], p),
        )
        composite = random_horizon_transform(spec)
        grid = cfg.grid(market.T)
        sol = solve_dual(market, composite, grid)
        primal = recover(sol, composite, market, n_x=cfg.n_x())
        dual_to_csv(sol, out / "rh_dual.csv", {"config_hash": cfg.config_hash})
        primal_to_csv(primal, out / "rh_primal.csv", {"config_hash": cfg.config_hash})
        outputs += ["rh_dual.csv", "rh_primal.csv"]
        if cfg.parser.has_section("sim"):
            sim = cfg.sim(seed_override=seed)
            t0, x0 = cfg.sim_point()
            tables_market = cfg.market()
            oracle = _oracle_marker(cfg)
            if oracle is not None:
                D = lambda t: merton.merton_D(t, p, oracle["b"], oracle["sigma"], market.T, 1.0)
                frac = merton.risky_fraction(p, oracle["b"], oracle["sigma"])
                policy = lambda t, X: (X / D(t), frac * X)
            else:
                from .simulate import _FeedbackTables
                tabs = _FeedbackTables(primal)
                def policy(t, X, _tabs=tabs):
                    crow, prow = _tabs.rows(t)
                    cr, pr = _tabs.lookup2(crow, prow, X)
                    return cr * X, pr * X
            eq = random_horizon_equivalence(spec, policy, tables_market, x0, sim)
            write_json(out / "rh_equivalence.json", {
                "direct": eq["direct"].to_dict(),
                "transformed": eq["transformed"].to_dict(),
                "difference": eq["difference"],
                "combined_se": eq["combined_se"],
                "within_2se": eq["within_2se"],
            })
            outputs.append("rh_equivalence.json")

    if cfg.has("illiquid"):
        ran_any = True
        ill = cfg.illiquid()
        params = ill["params"]
        red = illiquid_reduction(params)
        opts = ill["options"]
        res = kv_fixed_point(params, max_iter=opts["max_iter"], tol=opts["tol"],
                             n_y=opts["n_y"], n_t_per_unit=opts["n_t_per_unit"],
                             quad_order=opts["quad_order"],
                             force_alpha0=opts.get("force_alpha0"),
                             t_trunc=opts.get("t_trunc"))
        spots = [
            {"t": 1.0, "x": 1.0, "y": 1.0,
             "value": liquidation_value(params, res.K_V, 1.0, 1.0, 1.0)},
            {"t": 1.0, "x": 0.0, "y": 1.0,
             "value": liquidation_value(params, res.K_V, 1.0, 0.0, 1.0)},
        ]
        write_json(out / "illiquid_report.json", {
            "k_yp": red.k_yp,
            "b_eff": red.b_eff,
            "beta_eff": red.beta_eff,
            "log_mean_rate": red.log_mean_rate,
            "log_var_rate": red.log_var_rate,
            "K_V": res.K_V,
            "converged": res.converged,
            "t_trunc": res.t_trunc,
            "iterations": len(res.trace),
            "trace": res.trace,
            "liquidation_spots": spots,
        })
        outputs.append("illiquid_report.json")

    if not ran_any:
        raise CliError("config has neither [random_horizon] nor [illiquid] section")
    write_json(out / "app_manifest.json",
               _manifest(cfg, outputs, {"app_s": time.perf_counter() - t_start}, seed=seed))
    print(f"wrote {', '.join(outputs)} to {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dualhjb",
        description="Dual-HJB solver for investment-consumption problems "
                    "with current utility on wealth.")
    parser.add_argument("command", choices=["solve", "recover", "simulate", "verify", "app"])
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default="out")
    parser.add_argument("--dual", help="dual CSV for 'recover'")
    parser.add_argument("--primal", help="primal CSV for 'simulate'")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--dump-paths", action="store_true")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "recover":
            dual = Path(args.dual) if args.dual else out / "dual.csv"
            return cmd_recover(cfg, dual, out)
        if args.command == "simulate":
            primal = Path(args.primal) if args.primal else out / "primal.csv"
            return cmd_simulate(cfg, primal, out, seed=args.seed,
                                threads=args.threads, dump_paths=args.dump_paths)
        if args.command == "verify":
            return cmd_verify(cfg, out, seed=args.seed, threads=args.threads)
        if args.command == "app":
            return cmd_app(cfg, out, seed=args.seed)
        raise CliError(f"unknown command {args.command!r}")
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ModelError as exc:
        print(f"model validation error: {exc}", file=sys.stderr)
        return ModelValidationError.exit_code
    except DualhjbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 6
    except Exception as exc:  # pragma: no cover - defensive
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
