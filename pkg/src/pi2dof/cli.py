"""Command-line interface.

Subcommands: gen-system, feedforward, tune, baseline, eval, experiment.
Exit codes: 0 on success, 2 on configuration errors, 3 on numerical failures.
All artifacts are byte-reproducible given the same seed (the experiment
metrics CSV additionally carries measured wall-clock times).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import baseline as bl
from . import bench, feedforward as ff, oracle, tuner
from .errors import (DivergenceError, EstimationError, IdentificationError,
                     RankError, SingularityError, StabilityError)
from .plant import (PiGain, build_closed_loop, compute_equilibrium,
                    generate_random_plant, load_plant, plant_to_dict, save_plant)

_NUMERICAL = (StabilityError, DivergenceError, RankError, IdentificationError,
              EstimationError, SingularityError, ArithmeticError, np.linalg.LinAlgError)
_CONFIG = (ValueError, KeyError, OSError, json.JSONDecodeError)


def _vector(text: str) -> np.ndarray:
    return np.array([float(tok) for tok in text.split(",")], dtype=float)


def _dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, default=bench._json_default)
        fh.write("\n")


def _gain_to_dict(gain: PiGain) -> dict:
    return {"kp": gain.kp.tolist(), "ki": gain.ki.tolist()}


def _probe_gain(text: str, m: int, p: int) -> np.ndarray:
    path = Path(text)
    if path.suffix == ".json" and path.exists():
        with open(path) as fh:
            return np.array(json.load(fh), dtype=float)
    return float(text) * np.eye(m, p)


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_gen_system(args) -> int:
    plant = generate_random_plant(args.n, args.m, args.p, np.random.default_rng(args.seed))
    plant = type(plant)(a=plant.a, b=plant.b, c=plant.c, w=plant.w, v=plant.v,
                        init=plant.init, seed=args.seed)
    save_plant(plant, args.out)
    print(f"wrote {args.out} (n={args.n}, m={args.m}, p={args.p}, seed={args.seed})")
    return 0


def _cmd_feedforward(args) -> int:
    plant = load_plant(args.plant)
    y_star = _vector(args.y_star)
    kp_probe = _probe_gain(args.kp_probe, plant.m, plant.p)
    rng = np.random.default_rng(args.seed)
    diagnostics = {"y_star": y_star.tolist(), "kp_probe": kp_probe.tolist(),
                   "h_sim": args.h_sim, "seed": args.seed, "tau_u_mode": args.tau_u}
    if args.tau_u == "auto":
        z_norm = ff.estimate_decay_constant(plant, kp_probe, y_star, args.tau_large,
                                            args.h_sim, rng)
        bounds = ff.feedforward_bounds(plant, kp_probe, y_star, eps_u=args.eps_u,
                                       delta_u=args.delta_u, subgauss_norm=args.subgauss,
                                       abs_const_c=args.abs_c)
        tau_u = bench._grid_round_up(ff.tau_from_bounds(bounds, z_norm=z_norm), args.h_sim)
        diagnostics.update({"z_norm_estimate": z_norm, "tau_lower_model": bounds.tau_lower,
                            "snr_precondition_ok": bounds.snr_precondition_ok,
                            "bound_applicable": bounds.bound_applicable})
    else:
        tau_u = float(args.tau_u)
    est = ff.estimate_feedforward(plant, kp_probe, y_star, tau_u, args.h_sim, rng)
    equi = compute_equilibrium(plant, y_star)
    diagnostics["e0_tau"] = est.e0_tau.tolist()
    diagnostics["u0_err_vs_model"] = float(np.linalg.norm(est.u_hat - equi.u_star))
    diagnostics["steady_state_rel_err"] = bench.steady_state_rel_err(plant, est.u_hat, y_star)
    _dump_json({"u_hat": est.u_hat.tolist(), "E": est.e_matrix.tolist(),
                "tau_u": est.tau_u, "min_sv_E": est.min_sv_e,
                "diagnostics": diagnostics}, args.out)
    print(f"wrote {args.out} (tau_u={tau_u:.6g}, "
          f"rel err={diagnostics['steady_state_rel_err']:.3e})")
    return 0


def _cmd_tune(args) -> int:
    plant = load_plant(args.plant)
    y_star = _vector(args.y_star)
    with open(args.ff) as fh:
        u_hat = np.array(json.load(fh)["u_hat"], dtype=float)
    radii = _vector(args.omega)
    omega = tuner.ConstraintBox(float(radii[0]), float(radii[1]))
    q1 = args.q1 * np.eye(plant.p)
    q2 = args.q2 * np.eye(plant.p)
    k0 = PiGain(kp=args.k0_scale * np.eye(plant.m, plant.p),
                ki=args.k0_scale * np.eye(plant.m, plant.p))
    rollout = bench.make_pi_rollout(plant, y_star, u_hat, q1, q2, args.tau, args.h_sim)
    zo = tuner.ZoConfig(n_dirs=args.N, n_sub=args.Nsub, tau=args.tau, r=args.r,
                        h_sim=args.h_sim, master_seed=args.seed)
    pgd = tuner.PgdConfig(t_max=args.T, eta=args.eta, eps_stop=args.eps_stop)

    def cost_oracle(gain: PiGain) -> float:
        return oracle.analytic_cost(build_closed_loop(plant, gain, q1, q2))

    trace = tuner.tune_gains(rollout, k0, omega, zo, pgd, cost_oracle=cost_oracle,
                             use_stop_test=not args.no_stop_test)
    _dump_json({"iterates": [_gain_to_dict(g) for g in trace.iterates],
                "est_gradients": [g.tolist() for g in trace.est_gradients],
                "analytic_costs": trace.analytic_costs,
                "stopped_at": trace.stopped_at,
                "final": _gain_to_dict(trace.final_gain)}, args.trace)
    print(f"wrote {args.trace} ({len(trace.iterates)} iterates, "
          f"final analytic cost {trace.analytic_costs[-1]:.6g})")
    return 0


def _cmd_baseline(args) -> int:
    plant = load_plant(args.plant)
    y_star = _vector(args.y_star)
    rng = np.random.default_rng(args.seed)
    if args.Nid == "auto":
        tau_u = float(args.tau_u)
        total = bench.proposed_sim_time(args.N, args.Nsub, args.T, args.tau, plant.m, tau_u)
        n_id = bench.matched_nid(total, args.h)
    else:
        n_id = int(args.Nid)
    order = None if args.order == "auto" else int(args.order)
    dplant = bl.discretize_zoh(plant, args.h)
    model = bl.identify_ho_kalman(bl.make_openloop_sim(dplant), plant.m, n_id,
                                  input_std=args.input_std, model_order=order,
                                  fir_lag=args.fir_lag, rng=rng, h=args.h)
    u_star_id = bl.discrete_equilibrium(model, y_star).u_star_d
    radii = _vector(args.omega)
    omega = tuner.ConstraintBox(float(radii[0]), float(radii[1]))
    q1 = args.q1 * np.eye(plant.p)
    q2 = args.q2 * np.eye(plant.p)
    k0 = PiGain(kp=args.k0_scale * np.eye(plant.m, plant.p),
                ki=args.k0_scale * np.eye(plant.m, plant.p))
    trace = bl.tune_gains_modelbased(model, k0, omega, args.eta, args.iters, q1, q2,
                                     record_every=max(1, args.iters // 200))
    equi = compute_equilibrium(plant, y_star)
    _dump_json({"model": {"A_Id": model.ad.tolist(), "B_Id": model.bd.tolist(),
                          "C_Id": model.c.tolist(), "W_Id": model.wd.tolist(),
                          "V_Id": model.v.tolist(), "h": model.h,
                          "hankel_sv": model.hankel_sv.tolist()},
                "u_star_id": u_star_id.tolist(),
                "gains": _gain_to_dict(trace.final_gain),
                "cost_trace": trace.analytic_costs,
                "Nid": n_id,
                "diagnostics": {
                    "order": model.n, "spectral_radius": model.spectral_radius,
                    "u0_err_vs_model": float(np.linalg.norm(u_star_id - equi.u_star)),
                    "steady_state_rel_err": bench.steady_state_rel_err(plant, u_star_id, y_star),
                }}, args.out)
    print(f"wrote {args.out} (Nid={n_id}, order={model.n}, "
          f"final model cost {trace.analytic_costs[-1]:.6g})")
    return 0


def _cmd_eval(args) -> int:
    plant = load_plant(args.plant)
    y_star = _vector(args.y_star)
    with open(args.gains) as fh:
        doc = json.load(fh)
    gd = doc["final"] if "final" in doc else doc["gains"] if "gains" in doc else doc
    gain = PiGain(kp=np.array(gd["kp"], dtype=float), ki=np.array(gd["ki"], dtype=float))
    equi = compute_equilibrium(plant, y_star)
    if args.u0 == "star":
        u0 = equi.u_star
    else:
        with open(args.u0) as fh:
            u0 = np.array(json.load(fh)["u_hat"], dtype=float)
    q1 = args.q1 * np.eye(plant.p)
    q2 = args.q2 * np.eye(plant.p)
    rng = np.random.default_rng(args.seed)
    fbar = bench.eval_fbar(plant, gain, u0, y_star, q1, q2, args.Neval, args.tau_eval,
                           args.h_sim, args.mode, rng)
    out = {"fbar": fbar, "steady_state_rel_err": bench.steady_state_rel_err(plant, u0, y_star),
           "mode": args.mode, "n_eval": args.Neval, "tau_eval": args.tau_eval,
           "seed": args.seed}
    _dump_json(out, args.out)
    print(f"wrote {args.out} (fbar={fbar:.6g})")
    return 0


def _cmd_experiment(args) -> int:
    if args.config is not None:
        with open(args.config) as fh:
            cfg = bench.ExperimentConfig.from_dict(json.load(fh))
    else:
        cfg = bench.ExperimentConfig()
    if args.seed is not None:
        cfg.master_seed = args.seed
    summary = bench.run_experiment(cfg, args.out_dir)
    print(f"wrote {args.out_dir}/metrics.csv ({summary['overall']['n_rows']} rows, "
          f"{summary['overall']['n_failed']} failed)")
    if cfg.stage == "full":
        print(f"median fbar ratio proposed/model-based: "
              f"{summary['overall']['median_fbar_ratio']:.4g}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pi2dof",
                                     description="Data-driven 2DOF PI controller tuning")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-system", help="generate a random benchmark plant")
    g.add_argument("--n", type=int, default=20)
    g.add_argument("--m", type=int, default=2)
    g.add_argument("--p", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="plant.json")
    g.set_defaults(func=_cmd_gen_system)

    f = sub.add_parser("feedforward", help="estimate the equilibrium input from data")
    f.add_argument("--plant", required=True)
    f.add_argument("--tau-u", dest="tau_u", default="auto",
                   help="experiment horizon, or 'auto' for the data-driven bound")
    f.add_argument("--kp-probe", dest="kp_probe", default="1e-3",
                   help="probe gain: scalar scale for I, or a JSON matrix file")
    f.add_argument("--y-star", dest="y_star", default="5,5")
    f.add_argument("--h-sim", dest="h_sim", type=float, default=0.01)
    f.add_argument("--tau-large", dest="tau_large", type=float, default=200.0)
    f.add_argument("--eps-u", dest="eps_u", type=float, default=1e-3)
    f.add_argument("--delta-u", dest="delta_u", type=float, default=0.05)
    f.add_argument("--subgauss", type=float, default=1.0)
    f.add_argument("--abs-c", dest="abs_c", type=float, default=1.0)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", default="ff.json")
    f.set_defaults(func=_cmd_feedforward)

    t = sub.add_parser("tune", help="zeroth-order PI gain tuning")
    t.add_argument("--plant", required=True)
    t.add_argument("--ff", required=True, help="feedforward JSON from the feedforward command")
    t.add_argument("--omega", default="5,5", help="Frobenius radii for K_P and K_I")
    t.add_argument("--N", type=int, default=15)
    t.add_argument("--Nsub", type=int, default=20)
    t.add_argument("--tau", type=float, default=10.0)
    t.add_argument("--r", type=float, default=0.09)
    t.add_argument("--eta", type=float, default=1e-3)
    t.add_argument("--T", type=int, default=20)
    t.add_argument("--eps-stop", dest="eps_stop", type=float, default=0.0)
    t.add_argument("--no-stop-test", dest="no_stop_test", action="store_true")
    t.add_argument("--q1", type=float, default=200.0)
    t.add_argument("--q2", type=float, default=20.0)
    t.add_argument("--k0-scale", dest="k0_scale", type=float, default=1.0)
    t.add_argument("--h-sim", dest="h_sim", type=float, default=0.01)
    t.add_argument("--y-star", dest="y_star", default="5,5")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--trace", default="trace.json")
    t.set_defaults(func=_cmd_tune)

    b = sub.add_parser("baseline", help="model-based pipeline: identify, feedforward, tune")
    b.add_argument("--plant", required=True)
    b.add_argument("--h", type=float, default=0.01)
    b.add_argument("--Nid", default="auto", help="data length, or 'auto' for budget parity")
    b.add_argument("--order", default="auto", help="model order, or 'auto' for largest SV gap")
    b.add_argument("--eta", type=float, default=1e-5)
    b.add_argument("--iters", type=int, default=100_000)
    b.add_argument("--q1", type=float, default=0.1)
    b.add_argument("--q2", type=float, default=0.01)
    b.add_argument("--k0-scale", dest="k0_scale", type=float, default=0.01)
    b.add_argument("--omega", default="5,5")
    b.add_argument("--input-std", dest="input_std", type=float, default=1.0)
    b.add_argument("--fir-lag", dest="fir_lag", type=int, default=50)
    b.add_argument("--y-star", dest="y_star", default="5,5")
    b.add_argument("--N", type=int, default=15, help="budget parity: outer directions")
    b.add_argument("--Nsub", type=int, default=20, help="budget parity: inner averages")
    b.add_argument("--T", type=int, default=20, help="budget parity: tuner iterations")
    b.add_argument("--tau", type=float, default=10.0, help="budget parity: rollout horizon")
    b.add_argument("--tau-u", dest="tau_u", default="108.93",
                   help="budget parity: feedforward horizon")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="baseline.json")
    b.set_defaults(func=_cmd_baseline)

    e = sub.add_parser("eval", help="evaluate a tuned controller")
    e.add_argument("--plant", required=True)
    e.add_argument("--gains", required=True, help="trace.json / baseline.json / gains JSON")
    e.add_argument("--u0", default="star", help="'star' or a feedforward JSON file")
    e.add_argument("--mode", choices=["continuous", "zoh"], default="continuous")
    e.add_argument("--Neval", type=int, default=200)
    e.add_argument("--tau-eval", dest="tau_eval", type=float, default=300.0)
    e.add_argument("--q1", type=float, default=200.0)
    e.add_argument("--q2", type=float, default=20.0)
    e.add_argument("--h-sim", dest="h_sim", type=float, default=0.01)
    e.add_argument("--y-star", dest="y_star", default="5,5")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default="eval.json")
    e.set_defaults(func=_cmd_eval)

    x = sub.add_parser("experiment", help="run the full comparison study")
    x.add_argument("--config", default=None, help="JSON config (defaults are the benchmark study scale)")
    x.add_argument("--out-dir", dest="out_dir", default="experiment_out")
    x.add_argument("--seed", type=int, default=None, help="override the config master seed")
    x.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERICAL as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except _CONFIG as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
