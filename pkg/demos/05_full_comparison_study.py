"""Desk-scale head-to-head study: proposed pipeline vs model-based baseline.

Runs the full experiment harness (feedforward + PI tuning, matched simulated
time budgets) on two small systems and prints the aggregate table.  The
benchmark-scale configuration is simply ``ExperimentConfig()`` with its defaults;
this demo shrinks every knob so it finishes in about a minute.
"""

from pathlib import Path

from pi2dof import ExperimentConfig, run_experiment

cfg = ExperimentConfig.from_dict({
    "n": 10, "m": 2, "p": 2,
    "system_seeds": [1, 2],
    "trials": 3,
    "master_seed": 0,
    "stage": "full",
    "tau_u": "auto",
    "n_dirs": 8, "n_sub": 10, "tau": 5.0, "r": 0.09,
    "eta": 1e-3, "t_max": 10,
    "iters_baseline": 20_000,
    "n_eval": 50, "tau_eval": 60.0,
})

out_dir = Path("experiment_demo_out")
summary = run_experiment(cfg, out_dir)

print(f"\nartifacts written to {out_dir}/ (metrics.csv, aggregates.json, "
      "trajectories_sys*.csv, plots.gp)")
print("\nper-system medians:")
for sys in summary["systems"]:
    per = sys["per_method"]
    print(f"  system seed {sys['seed']} (tau_u={sys['tau_u']:.1f}, "
          f"N_id={sys['n_id']}):")
    for method, stats in per.items():
        print(f"    {method:>11}: ss_err={stats['median_ss_err']:.4f} "
              f"fbar={stats['median_fbar']:.4g} u0_err={stats['median_u0_err']:.4f}")
    print(f"    fbar ratio proposed/model-based: {sys['fbar_ratio_median']:.3f}")
print(f"\noverall median fbar ratio: {summary['overall']['median_fbar_ratio']:.3f}")
