"""Command-line harness: simulate, calibrate, train, evaluate.

Every command takes a config file, honors a global seed and writes CSV
artifacts (traces, learning curves, velocity traces, histograms) to the
output directory.  Exit codes: 0 ok, 2 config error, 3 runtime/numerical
error.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .calibrate import NotBracketed, calibrate_power
from .config import ConfigError, RunConfig, emit_config, load_config
from .env import MeltPoolEnv
from .params import LaserParams
from .ppo import PPOConfig, load_checkpoint, policy_forward, save_checkpoint, train
from .snapshots import write_snapshot
from .thermal import LineSolutionCache, ThermalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_env(cfg: RunConfig, cache: LineSolutionCache | None = None) -> MeltPoolEnv:
    path = cfg.build_path()
    return MeltPoolEnv(
        cfg.material,
        cfg.laser,
        cfg.grid,
        path,
        bc=cfg.boundary,
        bounds=cfg.velocity,
        reward=cfg.reward,
        obs_spec=cfg.observation,
        cache=cache,
    )


def _action_for(env: MeltPoolEnv, velocity: float) -> float:
    b = env.bounds
    return 2.0 * (velocity - b.v_min) / (b.v_max - b.v_min) - 1.0


def _run_constant(env: MeltPoolEnv, velocity: float, seed: int):
    env.reset(seed)
    a = _action_for(env, velocity)
    while not env.done:
        env.step(a)
    return env.trace


def _run_policy(env: MeltPoolEnv, params, seed: int):
    obs = env.reset(seed)
    while not env.done:
        mean, _, _ = policy_forward(params, obs)
        obs, _, _ = env.step(float(mean))
    return env.trace


def _summary(label: str, depths: np.ndarray) -> str:
    return "%s: n=%d mean=%.2f um std=%.2f um min=%.2f max=%.2f" % (
        label,
        len(depths),
        depths.mean(),
        depths.std(),
        depths.min(),
        depths.max(),
    )


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env = _build_env(cfg)
    velocity = args.velocity if args.velocity is not None else 0.5 * (
        cfg.velocity.v_min + cfg.velocity.v_max
    )
    _run_constant(env, velocity, cfg.seed)
    env.trace.write_csv(out / "trace.csv")
    env.write_episode_csv(out / "episode.csv")
    if args.snapshot:
        write_snapshot(env.sim.field, out / "field_final.msrl")
    print(_summary(f"constant v={velocity:g} m/s", env.trace.depths()))
    print(f"wrote {out / 'trace.csv'}")
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    velocity = args.velocity if args.velocity is not None else 0.5 * (
        cfg.velocity.v_min + cfg.velocity.v_max
    )
    target = args.target if args.target is not None else cfg.reward.target_depth_um
    power = calibrate_power(cfg.material, cfg.laser.beam_sigma_um, velocity, target)
    cfg2 = replace(cfg, laser=LaserParams(power=power, beam_sigma_um=cfg.laser.beam_sigma_um))
    cfg_path = out / "calibrated.cfg"
    cfg_path.write_text(emit_config(cfg2))
    print(f"calibrated power: {power:.10g} W at v={velocity:g} m/s, target {target:g} um")
    print(f"wrote {cfg_path}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ppo_cfg = replace(cfg.ppo, seed=cfg.seed)
    if args.updates is not None:
        ppo_cfg = replace(ppo_cfg, n_updates=args.updates)
    cache = LineSolutionCache(cfg.material, cfg.laser, cfg.grid.dx_um)
    envs = [_build_env(cfg, cache) for _ in range(ppo_cfg.n_envs)]

    params = None
    start_update = 0
    if args.checkpoint:
        params, meta = load_checkpoint(args.checkpoint)
        start_update = int(meta.get("update", 0))
        if params.policy.dims[0] != envs[0].obs_dim:
            print("error: checkpoint dimensions do not match the configured observation", file=sys.stderr)
            return EXIT_RUNTIME

    curve_path = out / "learning_curve.csv"
    mode = "a" if start_update > 0 and curve_path.exists() else "w"
    curve = open(curve_path, mode)
    if mode == "w":
        curve.write("update,mean_episode_reward,depth_std_um,depth_mean_um\n")

    def on_update(rec):
        curve.write(
            "%d,%r,%r,%r\n"
            % (
                rec["update"],
                rec["mean_episode_reward"],
                rec["depth_std_um"],
                rec["depth_mean_um"],
            )
        )
        curve.flush()

    def checkpoint_cb(update, p):
        save_checkpoint(out / "policy.ckpt", p, update=update, cfg=ppo_cfg, seed=cfg.seed)

    try:
        train(
            envs,
            ppo_cfg,
            params=params,
            start_update=start_update,
            on_update=on_update,
            checkpoint_cb=checkpoint_cb,
        )
    finally:
        curve.close()
    print(f"wrote {curve_path} and {out / 'policy.ckpt'}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not args.checkpoint:
        print("error: evaluate requires --checkpoint", file=sys.stderr)
        return EXIT_CONFIG
    params, _meta = load_checkpoint(args.checkpoint)
    cache = LineSolutionCache(cfg.material, cfg.laser, cfg.grid.dx_um)
    env = _build_env(cfg, cache)
    if params.policy.dims[0] != env.obs_dim:
        print("error: checkpoint dimensions do not match the configured observation", file=sys.stderr)
        return EXIT_RUNTIME

    _run_policy(env, params, cfg.seed)
    policy_depths = env.trace.depths()
    env.trace.write_csv(out / "policy_trace.csv")
    env.write_episode_csv(out / "policy_episode.csv")
    print(_summary("policy", policy_depths))

    sweep = np.linspace(cfg.velocity.v_min, cfg.velocity.v_max, max(args.sweep, 2))
    baselines = {}
    for v in sweep:
        _run_constant(env, float(v), cfg.seed)
        d = env.trace.depths()
        baselines[float(v)] = d
        env.trace.write_csv(out / ("baseline_v%.3f.csv" % v))
        print(_summary("constant v=%.3f" % v, d))

    lo = min(min(d.min() for d in baselines.values()), policy_depths.min())
    hi = max(max(d.max() for d in baselines.values()), policy_depths.max())
    edges = np.linspace(lo, hi + 1e-9, 25)
    with open(out / "depth_histogram.csv", "w") as fh:
        fh.write("run,bin_lo_um,bin_hi_um,count\n")
        rows = [("policy", policy_depths)] + [
            ("v%.3f" % v, d) for v, d in baselines.items()
        ]
        for name, d in rows:
            counts, _ = np.histogram(d, bins=edges)
            for b, c in enumerate(counts):
                fh.write("%s,%r,%r,%d\n" % (name, float(edges[b]), float(edges[b + 1]), c))
    print(f"wrote {out / 'depth_histogram.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meltrl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    common = dict(add_help=True)

    def add_shared(sp):
        sp.add_argument("--config", type=str, default=None, help="run config file")
        sp.add_argument("--seed", type=int, default=None, help="override [run] seed")
        sp.add_argument("--out", type=str, default=None, help="override output directory")

    sp = sub.add_parser("simulate", help="constant-velocity run, depth trace CSV", **common)
    add_shared(sp)
    sp.add_argument("--velocity", type=float, default=None, help="m/s (default: mid-range)")
    sp.add_argument("--snapshot", action="store_true", help="dump the final field")
    sp = sub.add_parser("calibrate", help="bisect power to hit the target depth", **common)
    add_shared(sp)
    sp.add_argument("--velocity", type=float, default=None)
    sp.add_argument("--target", type=float, default=None, help="target depth um")
    sp = sub.add_parser("train", help="run synchronous PPO", **common)
    add_shared(sp)
    sp.add_argument("--updates", type=int, default=None, help="override ppo n_updates")
    sp.add_argument("--checkpoint", type=str, default=None, help="resume from checkpoint")
    sp = sub.add_parser("evaluate", help="trained policy vs constant baselines", **common)
    add_shared(sp)
    sp.add_argument("--checkpoint", type=str, default=None)
    sp.add_argument("--sweep", type=int, default=5, help="number of baseline velocities")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, out_dir=args.out)
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    handlers = {
        "simulate": cmd_simulate,
        "calibrate": cmd_calibrate,
        "train": cmd_train,
        "evaluate": cmd_evaluate,
    }
    try:
        return handlers[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ThermalError, NotBracketed, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
