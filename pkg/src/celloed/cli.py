"""Command-line entry point.

Subcommands: simulate, sensitivity-map, train, nmpc, profile, estimate,
compare. One JSON config file feeds every command; flags override the
config. Exit codes: 0 success, 1 runtime failure, 2 config/validation
failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, env, estimation, model, nmpc, profiles, runio, sensitivity, td3
from .errors import CellOedError, DomainError, LoadError
from .params import CellParameters, default_cell_parameters, load_cell_parameters

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _load_params(resolved) -> CellParameters:
    if resolved["cell_params"]:
        return load_cell_parameters(resolved["cell_params"])
    return default_cell_parameters()


def _out_dir(resolved) -> Path:
    out = Path(resolved["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_profile_arg(args, resolved, params):
    """Profile from --profile-csv when given, else built from the config."""
    if getattr(args, "profile_csv", None):
        return profiles.load_profile_csv(args.profile_csv)
    return profiles.build_profile(runio.build_profile_spec(resolved), params)


def cmd_simulate(args, resolved):
    params = _load_params(resolved)
    prof = _load_profile_arg(args, resolved, params)
    res = model.simulate_profile(prof, resolved["env"].get("soc0", 1.0), params)
    fp = runio.config_fingerprint(resolved)
    out = _out_dir(resolved)
    rows = zip(res.t, prof.currents, res.v, res.soc, res.c_se_p, res.c_se_n)
    runio.write_csv(out / "simulation.csv",
                    ["t_s", "current_A", "voltage_V", "soc", "c_se_p", "c_se_n"],
                    rows, fp)
    summary = {
        "label": prof.label,
        "n_steps": len(prof.currents),
        "duration_s": prof.duration,
        "temperature_K": prof.temperature,
        "fi_raw_kp": sensitivity.fisher_of_profile(prof, resolved["env"].get("soc0", 1.0),
                                                   params, "k_p").fi_raw,
        "fi_raw_kn": sensitivity.fisher_of_profile(prof, resolved["env"].get("soc0", 1.0),
                                                   params, "k_n").fi_raw,
        "v_limit_low_crossings": int(res.limit_low.sum()),
        "v_limit_high_crossings": int(res.limit_high.sum()),
    }
    runio.write_json(out / "simulation_summary.json", summary, fp)
    print(f"simulate: {len(prof.currents)} steps -> {out / 'simulation.csv'}")
    return EXIT_OK


def cmd_sensitivity_map(args, resolved):
    params = _load_params(resolved)
    section = resolved["map"]
    m = sensitivity.sensitivity_map(
        section["c_rates"], section["soc_grid"], params,
        resolved["target"], T=section.get("temperature_K", 298.15),
    )
    fp = runio.config_fingerprint(resolved)
    out = _out_dir(resolved)
    rows = [(c, s, m.values[i, j])
            for i, c in enumerate(m.c_rates) for j, s in enumerate(m.soc_grid)]
    runio.write_csv(out / f"sensitivity_map_{resolved['target']}.csv",
                    ["c_rate", "soc", "squared_sensitivity"], rows, fp)
    runio.write_json(out / f"sensitivity_map_{resolved['target']}.json", m.summary(), fp)
    print(f"sensitivity-map: {m.values.size} cells -> {out}")
    return EXIT_OK


def cmd_train(args, resolved):
    params = _load_params(resolved)
    env_cfg = runio.build_env_config(resolved)
    td3_cfg = runio.build_td3_config(resolved)
    fp = runio.config_fingerprint(resolved)
    out = _out_dir(resolved)
    t0 = time.time()

    def progress(ep, row):
        if (ep + 1) % 50 == 0:
            print(f"episode {ep + 1}/{td3_cfg.max_episodes} "
                  f"return {row['return']:.3e} ({time.time() - t0:.0f}s)", flush=True)

    agent, log = td3.train(env_cfg, params, td3_cfg, progress=progress)
    agent.save(out / f"td3_weights_{resolved['target']}.json", fp)
    td3.save_training_log_csv(log, out / f"training_log_{resolved['target']}.csv", fp)
    profile, fi, _ = env.rollout(lambda o: agent.select_action(o), env_cfg, params,
                                 seed=resolved["seed"])
    profiles.save_profile_csv(profile, out / f"designed_profile_{resolved['target']}.csv", fp)
    runio.write_json(out / f"train_summary_{resolved['target']}.json", {
        "episodes": len(log.episodes),
        "eval_fi_raw": fi.fi_raw,
        "profile_steps": len(profile.currents),
        "wall_time_s": 0.0 if resolved["deterministic"] else time.time() - t0,
    }, fp)
    print(f"train: best-eval FI {fi.fi_raw:.4e} -> {out}")
    return EXIT_OK


def cmd_nmpc(args, resolved):
    params = _load_params(resolved)
    env_cfg = runio.build_env_config(resolved)
    nmpc_cfg = runio.build_nmpc_config(resolved)
    fp = runio.config_fingerprint(resolved)
    out = _out_dir(resolved)
    profile, fi, stats = nmpc.run_nmpc(params, env_cfg, nmpc_cfg, resolved["target"])
    profiles.save_profile_csv(profile, out / f"nmpc_profile_{resolved['target']}.csv", fp)
    summary = nmpc.summarize_stats(stats)
    summary["fi_raw"] = fi.fi_raw
    summary["per_step_objective"] = [s.objective for s in stats]
    if resolved["deterministic"]:
        summary["mean_wall_time_s"] = 0.0
        summary["max_wall_time_s"] = 0.0
    runio.write_json(out / f"nmpc_stats_{resolved['target']}.json", summary, fp)
    print(f"nmpc: FI {fi.fi_raw:.4e}, mean step {summary['mean_wall_time_s'] * 1e3:.1f} ms -> {out}")
    return EXIT_OK


def cmd_profile(args, resolved):
    params = _load_params(resolved)
    prof = profiles.build_profile(runio.build_profile_spec(resolved), params)
    fp = runio.config_fingerprint(resolved)
    out = _out_dir(resolved)
    path = profiles.save_profile_csv(prof, out / f"profile_{prof.label}.csv", fp)
    print(f"profile: {len(prof.currents)} samples -> {path}")
    return EXIT_OK


def cmd_estimate(args, resolved):
    params = _load_params(resolved)
    prof = _load_profile_arg(args, resolved, params)
    section = resolved["estimation"]
    fp = runio.config_fingerprint(resolved)
    out = _out_dir(resolved)
    task = estimation.default_task(
        resolved["target"], prof, params,
        n_starts=section.get("n_starts", 10),
        noise_sigma=section.get("noise_sigma", 0.0),
        optimizer=runio.build_optimizer_settings(resolved),
    )
    result = estimation.run_task(task, params, seed=resolved["seed"])
    rows = [(s.start, s.theta_star, s.abs_pct_error, s.n_evals, s.converged)
            for s in result.starts]
    runio.write_csv(out / f"estimation_starts_{resolved['target']}.csv",
                    ["start", "theta_star", "abs_pct_error", "n_evals", "converged"],
                    rows, fp)
    agg = result.aggregate()
    agg["wall_time_s"] = 0.0 if resolved["deterministic"] else result.wall_time_s
    runio.write_json(out / f"estimation_{resolved['target']}.json", agg, fp)
    med = result.median_abs_pct_error
    print(f"estimate: {resolved['target']} median abs error "
          f"{med if not math.isnan(med) else float('nan'):.4g}% -> {out}")
    return EXIT_OK


def _policy_inference_time(weights_path, resolved, params):
    env_cfg = runio.build_env_config(resolved)
    agent = td3.Td3Agent.load(weights_path, env_cfg)
    obs = env.Observation(v=3.8, c_bar_se_p=0.5)
    agent.select_action(obs)
    n = 2000
    t0 = time.perf_counter()
    for _ in range(n):
        agent.select_action(obs)
    return (time.perf_counter() - t0) / n


def cmd_compare(args, resolved):
    params = _load_params(resolved)
    methods = []
    meta = {}
    for spec in resolved["compare"]["methods"]:
        prof = profiles.load_profile_csv(spec["profile_csv"])
        step_time = math.nan
        if spec.get("stats_json"):
            import json as _json

            stats = _json.loads(Path(spec["stats_json"]).read_text())
            step_time = float(stats.get("mean_wall_time_s", math.nan))
        if spec.get("weights_json"):
            step_time = _policy_inference_time(spec["weights_json"], resolved, params)
        methods.append(estimation.MethodRun(
            label=spec["label"], profile=prof,
            soc0=float(spec.get("soc0", 1.0)), mean_step_time_s=step_time,
        ))
        meta[spec["label"]] = spec
    if not methods:
        raise LoadError("compare: no methods configured (compare.methods is empty)")
    section = resolved["estimation"]
    rows = estimation.run_comparison(
        methods, params, n_starts=section.get("n_starts", 10),
        noise_sigma=section.get("noise_sigma", 0.0), seed=resolved["seed"],
    )
    if resolved["deterministic"]:
        for row in rows:
            row["mean_step_time_s"] = 0.0
    fp = runio.config_fingerprint(resolved)
    out = _out_dir(resolved)
    header = list(rows[0].keys())
    runio.write_csv(out / "comparison.csv", header,
                    [[r[c] for c in header] for r in rows], fp)
    text = estimation.render_comparison(rows)
    (out / "comparison.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="celloed",
        description="Design and evaluate information-optimal cell excitations",
    )
    parser.add_argument("--version", action="version", version=f"celloed {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "simulate": cmd_simulate,
        "sensitivity-map": cmd_sensitivity_map,
        "train": cmd_train,
        "nmpc": cmd_nmpc,
        "profile": cmd_profile,
        "estimate": cmd_estimate,
        "compare": cmd_compare,
    }
    for name, fn in commands.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run-config file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="RNG seed (overrides config)")
        p.add_argument("--deterministic", action="store_true",
                       help="suppress wall-clock fields for byte-identical artifacts")
        p.add_argument("--target", choices=["kp", "kn"], help="rate constant to design for")
        if name in ("simulate", "estimate"):
            p.add_argument("--profile-csv", help="use this profile instead of the config spec")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {
        "output_dir": args.out,
        "seed": args.seed,
        "target": {"kp": "k_p", "kn": "k_n"}.get(args.target) if args.target else None,
    }
    if args.deterministic:
        overrides["deterministic"] = True
    try:
        resolved = runio.load_run_config(args.config, overrides)
        return args.fn(args, resolved)
    except (LoadError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CellOedError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
