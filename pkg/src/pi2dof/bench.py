"""Experiment harness: metric evaluation and the proposed-vs-model-based study.

Reproduces the benchmark protocol at configurable scale: random systems,
feedforward comparison under matched data budgets, PI tuning comparison under
matched rollout budgets, and CSV/JSON artifact emission.  Everything is
deterministic given the master seed (wall-clock timings excepted, which only
appear in the per-row ``wallclock_s`` column).
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import baseline as bl
from . import feedforward as ff
from . import linmath, oracle, streams, tuner
from .errors import (DivergenceError, EstimationError, IdentificationError,
                     RankError, StabilityError)
from .plant import (LtiPlant, PiGain, build_closed_loop, compute_equilibrium,
                    generate_random_plant, make_pi_rollout, plant_to_dict)

_HANDLED = (StabilityError, DivergenceError, RankError, IdentificationError,
            EstimationError, ArithmeticError, np.linalg.LinAlgError, ValueError)

CSV_COLUMNS = ["system_id", "trial_id", "method", "steady_state_rel_err",
               "fbar", "u0_err", "wallclock_s", "status"]


def fmt_real(x: float) -> str:
    """Serialize a real with 17 significant digits (CSV schema stability)."""
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def steady_state_rel_err(plant: LtiPlant, u0: np.ndarray, y_star: np.ndarray) -> float:
    """Relative steady-state output error ||y* + C A^{-1} B u0|| / ||y*||.

    The mean output under the constant input u0 settles at -C A^{-1} B u0,
    so this is the analytic version of the tracking-error metric.
    """
    u0 = np.asarray(u0, dtype=float).reshape(-1)
    y_star = np.asarray(y_star, dtype=float).reshape(-1)
    try:
        xinf = np.linalg.solve(plant.a, plant.b @ u0)
    except np.linalg.LinAlgError as err:
        raise StabilityError("plant matrix A is singular; steady state undefined") from err
    return float(np.linalg.norm(y_star + plant.c @ xinf) / np.linalg.norm(y_star))


def eval_fbar(plant: LtiPlant, gain: PiGain, u0: np.ndarray, y_star: np.ndarray,
              q1, q2, n_eval: int, tau_eval: float, h_sim: float, mode: str,
              rng: np.random.Generator) -> float:
    """Average over n_eval rollouts of the time-averaged quadratic tracking cost.

    The integral is a trapezoid sum on the exact sampling grid.  ``mode``
    selects the controller realization: "continuous" runs the continuous 2DOF
    PI law via the exact augmented simulation, "zoh" runs the sampled-data law
    (piecewise-constant input, discrete integrator) on the continuous plant.
    """
    q1 = np.atleast_2d(np.asarray(q1, dtype=float))
    q2 = np.atleast_2d(np.asarray(q2, dtype=float))
    u0 = np.asarray(u0, dtype=float).reshape(-1)
    y_star = np.asarray(y_star, dtype=float).reshape(-1)
    nsteps = int(round(tau_eval / h_sim))
    if nsteps < 1 or abs(nsteps * h_sim - tau_eval) > 1e-9 * max(1.0, tau_eval):
        raise ValueError(f"h_sim {h_sim} does not divide tau_eval {tau_eval}")
    weights = np.full(nsteps + 1, h_sim / tau_eval)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    if mode not in ("continuous", "zoh"):
        raise ValueError(f"mode must be 'continuous' or 'zoh', got {mode!r}")
    lv = linmath.psd_factor(plant.v)
    n, p = plant.n, plant.p
    acc = np.zeros(n_eval)

    # overflow of an unstable loop is expected and detected, not a warning
    with np.errstate(over="ignore", invalid="ignore"):
        if mode == "continuous":
            cl = build_closed_loop(plant, gain, q1, q2)
            equi = compute_equilibrium(plant, y_star)
            vl = linmath.van_loan(cl.abar_k, cl.bbar, cl.wtilde_k, h_sim)
            lw = linmath.psd_factor(vl.wd)
            drive = vl.bd @ (u0 - equi.u_star)
            states = np.zeros((n_eval, n + p))
            states[:, :n] = plant.init.sample(rng, size=n_eval) - equi.x_star
            for k in range(nsteps + 1):
                e = states[:, :n] @ (-plant.c.T) + rng.standard_normal((n_eval, p)) @ lv.T
                z = states[:, n:]
                acc += weights[k] * (np.einsum("ij,jk,ik->i", e, q1, e)
                                     + np.einsum("ij,jk,ik->i", z, q2, z))
                if k < nsteps:
                    states = states @ vl.ad.T + drive \
                        + rng.standard_normal((n_eval, n + p)) @ lw.T
                    if not np.isfinite(states).all():
                        raise DivergenceError("evaluation rollout diverged",
                                              time=(k + 1) * h_sim)
        else:
            vl = linmath.van_loan(plant.a, plant.b, plant.w, h_sim)
            lw = linmath.psd_factor(vl.wd)
            x = plant.init.sample(rng, size=n_eval)
            z = np.zeros((n_eval, p))
            for k in range(nsteps + 1):
                e = y_star - (x @ plant.c.T + rng.standard_normal((n_eval, p)) @ lv.T)
                acc += weights[k] * (np.einsum("ij,jk,ik->i", e, q1, e)
                                     + np.einsum("ij,jk,ik->i", z, q2, z))
                if k < nsteps:
                    u = e @ gain.kp.T + z @ gain.ki.T + u0
                    x = x @ vl.ad.T + u @ vl.bd.T \
                        + rng.standard_normal((n_eval, n)) @ lw.T
                    z = z + e
                    if not np.isfinite(x).all():
                        raise DivergenceError("evaluation rollout diverged",
                                              time=(k + 1) * h_sim)
    return float(acc.mean())


def proposed_sim_time(n_dirs: int, n_sub: int, t_max: int, tau: float,
                      m: int, tau_u: float) -> float:
    """Total simulated seconds consumed by the proposed pipeline: 2 N N_sub T tau + (m+1) tau_u."""
    return 2.0 * n_dirs * n_sub * t_max * tau + (m + 1) * tau_u


def matched_nid(total_sim_time: float, h: float) -> int:
    """Identification record length with the same simulated time budget."""
    return int(round(total_sim_time / h))


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Full study configuration; defaults mirror the reference experiment scale."""

    n: int = 20
    m: int = 2
    p: int = 2
    y_star: list = field(default_factory=lambda: [5.0, 5.0])
    system_seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 6, 7, 8, 9, 10])
    trials: int = 10
    master_seed: int = 0
    stage: str = "full"                    # "feedforward" (data-budget study only) or "full"
    # feedforward settings
    tau_u: float | str = "auto"            # "auto": horizon bound with eps_u
    kp_probe_scale: float = 1e-3
    eps_u: float = 1e-3
    delta_u: float = 0.05
    subgauss_norm: float = 1.0
    abs_const_c: float = 1.0
    # zeroth-order tuning settings
    n_dirs: int = 15
    n_sub: int = 20
    tau: float = 10.0
    r: float = 0.09
    eta: float = 1e-3
    t_max: int = 20
    use_stop_test: bool = False            # fixed iteration count for budget parity
    eps_stop: float = 0.0
    q1: float = 200.0
    q2: float = 20.0
    k0_scale: float = 1.0
    kp_radius: float = 5.0
    ki_radius: float = 5.0
    # model-based baseline settings
    h: float = 0.01
    eta_baseline: float = 1e-5
    iters_baseline: int = 100_000
    q1_baseline: float = 0.1
    q2_baseline: float = 0.01
    k0_scale_baseline: float = 0.01
    input_std: float = 1.0
    fir_lag: int = 50
    model_order: int | None = None
    # evaluation settings
    n_eval: int = 200
    tau_eval: float = 300.0
    h_sim: float = 0.01
    # execution: worker processes for trials (None: auto, 1: inline)
    workers: int | None = None

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        cfg = ExperimentConfig()
        for key, value in d.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
        if cfg.stage not in ("feedforward", "full"):
            raise ValueError(f"stage must be 'feedforward' or 'full', got {cfg.stage!r}")
        if cfg.trials < 1 or not cfg.system_seeds:
            raise ValueError("need at least one system seed and one trial")
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetricRow:
    system_id: int
    trial_id: int
    method: str                    # "proposed" | "model-based"
    steady_state_rel_err: float
    fbar: float
    u0_err: float
    wallclock_s: float
    status: str

    def to_csv_line(self) -> str:
        return ",".join([str(self.system_id), str(self.trial_id), self.method,
                         fmt_real(self.steady_state_rel_err), fmt_real(self.fbar),
                         fmt_real(self.u0_err), fmt_real(self.wallclock_s), self.status])


def _derived_int_seed(*path: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in path]).generate_state(1)[0])


def _grid_round_up(value: float, h: float) -> float:
    return math.ceil(value / h - 1e-9) * h


# ---------------------------------------------------------------------------
# per-trial pipelines
# ---------------------------------------------------------------------------

def _run_proposed_trial(cfg: ExperimentConfig, plant: LtiPlant, tau_u: float,
                        sys_idx: int, trial: int):
    """Feedforward estimation and (in stage 'full') zeroth-order PI tuning."""
    y_star = np.asarray(cfg.y_star, dtype=float)
    equi = compute_equilibrium(plant, y_star)
    kp_probe = cfg.kp_probe_scale * np.eye(plant.m, plant.p)
    rng_ff = streams.substream(cfg.master_seed, streams.TAG_EXPERIMENT, sys_idx, trial, 0)
    est = ff.estimate_feedforward(plant, kp_probe, y_star, tau_u, cfg.h_sim, rng_ff)
    out = {
        "u_hat": est.u_hat,
        "u0_err": float(np.linalg.norm(est.u_hat - equi.u_star)),
        "ss_err": steady_state_rel_err(plant, est.u_hat, y_star),
        "trace": None,
        "fbar": float("nan"),
    }
    if cfg.stage == "feedforward":
        return out

    q1 = cfg.q1 * np.eye(plant.p)
    q2 = cfg.q2 * np.eye(plant.p)
    omega = tuner.ConstraintBox(cfg.kp_radius, cfg.ki_radius)
    k0 = PiGain(kp=cfg.k0_scale * np.eye(plant.m, plant.p),
                ki=cfg.k0_scale * np.eye(plant.m, plant.p))
    rollout = make_pi_rollout(plant, y_star, est.u_hat, q1, q2, cfg.tau, cfg.h_sim)
    zo = tuner.ZoConfig(n_dirs=cfg.n_dirs, n_sub=cfg.n_sub, tau=cfg.tau, r=cfg.r,
                        h_sim=cfg.h_sim,
                        master_seed=_derived_int_seed(cfg.master_seed, 11, sys_idx, trial))
    pgd = tuner.PgdConfig(t_max=cfg.t_max, eta=cfg.eta, eps_stop=cfg.eps_stop)

    def cost_oracle(gain: PiGain) -> float:
        return oracle.analytic_cost(build_closed_loop(plant, gain, q1, q2))

    trace = tuner.tune_gains(rollout, k0, omega, zo, pgd, cost_oracle=cost_oracle,
                             use_stop_test=cfg.use_stop_test)
    rng_eval = streams.substream(cfg.master_seed, streams.TAG_EXPERIMENT, sys_idx, trial, 1)
    # feedforward fixed to the true equilibrium input to isolate the gains
    out["fbar"] = eval_fbar(plant, trace.final_gain, equi.u_star, y_star, q1, q2,
                            cfg.n_eval, cfg.tau_eval, cfg.h_sim, "continuous", rng_eval)
    out["trace"] = trace
    return out


def _run_baseline_trial(cfg: ExperimentConfig, plant: LtiPlant, n_id: int,
                        sys_idx: int, trial: int):
    """Identification, discrete feedforward and (in stage 'full') model-based tuning."""
    y_star = np.asarray(cfg.y_star, dtype=float)
    equi = compute_equilibrium(plant, y_star)
    dplant = bl.discretize_zoh(plant, cfg.h)
    rng_id = streams.substream(cfg.master_seed, streams.TAG_EXPERIMENT, sys_idx, trial, 2)
    model = bl.identify_ho_kalman(bl.make_openloop_sim(dplant), plant.m, n_id,
                                  input_std=cfg.input_std, model_order=cfg.model_order,
                                  fir_lag=cfg.fir_lag, rng=rng_id, h=cfg.h)
    u_star_id = bl.discrete_equilibrium(model, y_star).u_star_d
    out = {
        "u_star_id": u_star_id,
        "u0_err": float(np.linalg.norm(u_star_id - equi.u_star)),
        "ss_err": steady_state_rel_err(plant, u_star_id, y_star),
        "trace": None,
        "fbar": float("nan"),
    }
    if cfg.stage == "feedforward":
        return out

    q1b = cfg.q1_baseline * np.eye(plant.p)
    q2b = cfg.q2_baseline * np.eye(plant.p)
    omega = tuner.ConstraintBox(cfg.kp_radius, cfg.ki_radius)
    k0 = PiGain(kp=cfg.k0_scale_baseline * np.eye(plant.m, plant.p),
                ki=cfg.k0_scale_baseline * np.eye(plant.m, plant.p))
    # the descent stays inside the stabilizing set only for a sufficiently
    # small step, which depends on the identified model; back off when needed
    trace = None
    last_err = None
    for eta_b in (cfg.eta_baseline, cfg.eta_baseline / 10, cfg.eta_baseline / 100):
        try:
            trace = bl.tune_gains_modelbased(model, k0, omega, eta_b,
                                             cfg.iters_baseline, q1b, q2b,
                                             record_every=max(1, cfg.iters_baseline // 200))
            break
        except StabilityError as err:
            last_err = err
    if trace is None:
        raise last_err
    q1 = cfg.q1 * np.eye(plant.p)
    q2 = cfg.q2 * np.eye(plant.p)
    rng_eval = streams.substream(cfg.master_seed, streams.TAG_EXPERIMENT, sys_idx, trial, 3)
    out["fbar"] = eval_fbar(plant, trace.final_gain, equi.u_star, y_star, q1, q2,
                            cfg.n_eval, cfg.tau_eval, cfg.h_sim, "zoh", rng_eval)
    out["trace"] = trace
    return out


# ---------------------------------------------------------------------------
# full study
# ---------------------------------------------------------------------------

def _trial_task(payload):
    """One (system, trial) pair: both pipelines under matched budgets (picklable)."""
    cfg_dict, seed, sys_idx, trial, tau_u, n_id, limit_threads = payload
    if limit_threads:
        try:
            import threadpoolctl
            threadpoolctl.threadpool_limits(1)
        except ImportError:
            pass
    cfg = ExperimentConfig.from_dict(cfg_dict)
    plant = generate_random_plant(cfg.n, cfg.m, cfg.p, np.random.default_rng(seed))
    out = {"sys_idx": sys_idx, "trial": trial}
    for method, runner, budget in (("proposed", _run_proposed_trial, tau_u),
                                   ("model-based", _run_baseline_trial, n_id)):
        t0 = time.perf_counter()
        status = "ok"
        res = None
        try:
            res = runner(cfg, plant, budget, sys_idx, trial)
        except _HANDLED as err:
            status = f"error:{type(err).__name__}"
        wall = time.perf_counter() - t0
        if res is None:
            out[method] = {"status": status, "wall": wall, "ss_err": float("nan"),
                           "fbar": float("nan"), "u0_err": float("nan")}
        else:
            entry = {"status": status, "wall": wall, "ss_err": res["ss_err"],
                     "fbar": res["fbar"], "u0_err": res["u0_err"]}
            if res["trace"] is not None:
                entry["final_gain"] = res["trace"].final_gain.k.tolist()
                entry["cost_trace"] = res["trace"].analytic_costs
            if "u_hat" in res:
                entry["u0_vec"] = np.asarray(res["u_hat"]).tolist()
            if "u_star_id" in res:
                entry["u0_vec"] = np.asarray(res["u_star_id"]).tolist()
            out[method] = entry
    return out


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Run the configured study and write metrics.csv / aggregates.json / trajectories.

    Per system seed and trial the proposed pipeline and the model-based
    pipeline run under matched simulated-time budgets, optionally across
    worker processes (results are independent of scheduling: every trial owns
    derived seeds and assembly is in fixed order).  Failures are retained as
    tagged rows rather than dropped.  Returns the aggregate summary dict.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    y_star = np.asarray(cfg.y_star, dtype=float)
    rows: list[MetricRow] = []
    summary: dict = {"config": cfg.to_dict(), "systems": [], "overall": {}}
    cost_traces: dict = {}
    ratios_all = []

    budgets = []
    for seed in cfg.system_seeds:
        plant = generate_random_plant(cfg.n, cfg.m, cfg.p, np.random.default_rng(seed))
        kp_probe = cfg.kp_probe_scale * np.eye(cfg.m, cfg.p)
        if cfg.tau_u == "auto":
            bounds = ff.feedforward_bounds(plant, kp_probe, y_star, eps_u=cfg.eps_u,
                                           delta_u=cfg.delta_u,
                                           subgauss_norm=cfg.subgauss_norm,
                                           abs_const_c=cfg.abs_const_c)
            tau_u = _grid_round_up(bounds.tau_lower, cfg.h_sim)
        else:
            tau_u = float(cfg.tau_u)
        if cfg.stage == "feedforward":
            total_time = (cfg.m + 1) * tau_u
        else:
            total_time = proposed_sim_time(cfg.n_dirs, cfg.n_sub, cfg.t_max, cfg.tau,
                                           cfg.m, tau_u)
        budgets.append((tau_u, total_time, matched_nid(total_time, cfg.h)))

    workers = cfg.workers if cfg.workers is not None else min(2, os.cpu_count() or 1)
    payloads = [(cfg.to_dict(), seed, sys_idx, trial, budgets[sys_idx][0],
                 budgets[sys_idx][2], workers > 1)
                for sys_idx, seed in enumerate(cfg.system_seeds)
                for trial in range(cfg.trials)]
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_task, payloads))
    else:
        results = [_trial_task(p) for p in payloads]
    by_key = {(r["sys_idx"], r["trial"]): r for r in results}

    for sys_idx, seed in enumerate(cfg.system_seeds):
        tau_u, total_time, n_id = budgets[sys_idx]
        sys_summary = {"system_id": sys_idx, "seed": seed, "tau_u": tau_u, "n_id": n_id,
                       "total_sim_time": total_time, "per_method": {}}
        sys_ratios = []
        per_method_rows = {"proposed": [], "model-based": []}
        for trial in range(cfg.trials):
            res = by_key[(sys_idx, trial)]
            for method in ("proposed", "model-based"):
                entry = res[method]
                row = MetricRow(sys_idx, trial, method, entry["ss_err"], entry["fbar"],
                                entry["u0_err"], entry["wall"], entry["status"])
                rows.append(row)
                per_method_rows[method].append(row)
            prop, base = res["proposed"], res["model-based"]
            if (cfg.stage == "full" and math.isfinite(prop["fbar"])
                    and math.isfinite(base["fbar"]) and base["fbar"] > 0):
                sys_ratios.append(prop["fbar"] / base["fbar"])
            if cfg.stage == "full" and "cost_trace" in prop:
                cost_traces[f"sys{sys_idx}_trial{trial}"] = prop["cost_trace"]
            if (trial == 0 and cfg.stage == "full"
                    and "final_gain" in prop and "final_gain" in base):
                plant = generate_random_plant(cfg.n, cfg.m, cfg.p,
                                              np.random.default_rng(seed))
                _dump_trajectories(cfg, plant, prop, base, y_star, sys_idx, out_dir)

        for method, mrows in per_method_rows.items():
            ok = [r for r in mrows if r.status == "ok"]
            sys_summary["per_method"][method] = {
                "n_ok": len(ok),
                "median_ss_err": _median([r.steady_state_rel_err for r in ok]),
                "median_fbar": _median([r.fbar for r in ok]),
                "median_u0_err": _median([r.u0_err for r in ok]),
            }
        sys_summary["fbar_ratio_median"] = _median(sys_ratios)
        ratios_all.extend(sys_ratios)
        summary["systems"].append(sys_summary)

    ok_rows = [r for r in rows if r.status == "ok"]
    summary["overall"] = {
        "median_ss_err_proposed": _median([r.steady_state_rel_err for r in ok_rows
                                           if r.method == "proposed"]),
        "median_ss_err_baseline": _median([r.steady_state_rel_err for r in ok_rows
                                           if r.method == "model-based"]),
        "median_fbar_ratio": _median(ratios_all),
        "n_rows": len(rows),
        "n_failed": len(rows) - len(ok_rows),
    }
    if cost_traces:
        summary["proposed_cost_traces"] = cost_traces

    _write_csv(out_dir / "metrics.csv", rows)
    with open(out_dir / "aggregates.json", "w") as fh:
        json.dump(summary, fh, indent=1, default=_json_default)
        fh.write("\n")
    _write_gnuplot(out_dir / "plots.gp")
    return summary


def _dump_trajectories(cfg, plant, prop, base, y_star, sys_idx, out_dir):
    """Output trajectories of both tuned controllers for one trial (overshoot study)."""
    horizon = min(cfg.tau_eval, 60.0)
    q1 = cfg.q1 * np.eye(plant.p)
    q2 = cfg.q2 * np.eye(plant.p)
    equi = compute_equilibrium(plant, y_star)
    rng_p = streams.substream(cfg.master_seed, streams.TAG_EXPERIMENT, sys_idx, 900)
    rng_b = streams.substream(cfg.master_seed, streams.TAG_EXPERIMENT, sys_idx, 901)
    gain_p = PiGain.from_matrix(np.array(prop["final_gain"]))
    gain_b = PiGain.from_matrix(np.array(base["final_gain"]))

    cl = build_closed_loop(plant, gain_p, q1, q2)
    nsteps = int(round(horizon / cfg.h_sim))
    vl = linmath.van_loan(cl.abar_k, cl.bbar, cl.wtilde_k, cfg.h_sim)
    lw = linmath.psd_factor(vl.wd)
    lv = linmath.psd_factor(plant.v)
    drive = vl.bd @ (np.asarray(prop["u0_vec"]) - equi.u_star)
    state = np.concatenate([plant.init.sample(rng_p) - equi.x_star, np.zeros(plant.p)])
    ys_p = np.empty((nsteps + 1, plant.p))
    for k in range(nsteps + 1):
        x = state[: plant.n] + equi.x_star
        ys_p[k] = plant.c @ x + lv @ rng_p.standard_normal(plant.p)
        if k < nsteps:
            state = vl.ad @ state + drive + lw @ rng_p.standard_normal(plant.n + plant.p)

    _, traj_b = bl.simulate_zoh_closed_loop(plant, gain_b, np.array(base["u0_vec"]),
                                            y_star, horizon, cfg.h_sim, rng_b, q1, q2)
    times = np.arange(nsteps + 1) * cfg.h_sim
    path = out_dir / f"trajectories_sys{sys_idx}.csv"
    with open(path, "w") as fh:
        head = ["t"] + [f"y_proposed_{i}" for i in range(plant.p)] \
            + [f"y_baseline_{i}" for i in range(plant.p)]
        fh.write(",".join(head) + "\n")
        for k in range(nsteps + 1):
            vals = [times[k], *ys_p[k], *traj_b["y"][k]]
            fh.write(",".join(fmt_real(v) for v in vals) + "\n")


def _median(values) -> float:
    values = [v for v in values if isinstance(v, (int, float)) and math.isfinite(v)]
    return float(np.median(values)) if values else float("nan")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_csv(path, rows: list[MetricRow]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(row.to_csv_line() + "\n")


def _write_gnuplot(path) -> None:
    script = """# gnuplot script for the experiment artifacts (run from the output directory)
set datafile separator ','
set terminal pngcairo size 900,600
set output 'ss_err.png'
set logscale y
set ylabel 'steady-state relative error'
plot 'metrics.csv' using (column('method') eq 'proposed' ? 1 : 2):(column('steady_state_rel_err')) \\
     with points pt 7 title 'per trial (1=proposed, 2=model-based)'
set output 'fbar.png'
set ylabel 'time-averaged cost'
plot 'metrics.csv' using (column('method') eq 'proposed' ? 1 : 2):(column('fbar')) \\
     with points pt 7 title 'per trial (1=proposed, 2=model-based)'
"""
    with open(path, "w") as fh:
        fh.write(script)
