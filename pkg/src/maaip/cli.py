"""Command-line entry points: train, eval, gen-demos, serve."""

from __future__ import annotations

import argparse
import json
import sys


def _cmd_train(args) -> int:
    from .config import load_config
    from .training import Trainer, load_checkpoint

    cfg = load_config(args.config)
    trainer = Trainer(cfg)
    if args.resume:
        ck = load_checkpoint(args.resume, expect_config=cfg, override=args.override_config)
        trainer.restore(ck)
        print(f"resumed from {args.resume} at iteration {ck.iteration}")

    def log(m):
        w = "/".join(f"{x:.2f}" for x in m.weights)
        print(f"iter {m.iteration:4d} step {m.global_step:9d} w={w} "
              f"r={m.reward_mean:.3f} (m={m.r_motion:.3f} i={m.r_interaction:.3f} "
              f"c={m.r_control:.3f}) kl={m.ppo.approx_kl:.4f} {m.seconds:.1f}s",
              flush=True)

    trainer.run(max_iterations=args.max_iterations, log=log)
    print(f"done: {trainer.iteration} iterations, metrics in {trainer.run_dir}")
    return 0


def _cmd_eval(args) -> int:
    from . import evalkit
    from .demos import read_dataset

    if args.mode == "damage":
        if len(args.ckpt) != 2:
            print("eval damage needs exactly two --ckpt arguments", file=sys.stderr)
            return 2
        report = evalkit.eval_damage(args.ckpt[0], args.ckpt[1], episodes=args.episodes,
                                     episode_len=args.len, seed=args.seed)
    elif args.mode == "heading":
        report = evalkit.eval_heading(args.ckpt[0], episodes=args.episodes,
                                      episode_len=args.len or 500, seed=args.seed)
    elif args.mode == "cross":
        if len(args.ckpt) != 2:
            print("eval cross needs exactly two --ckpt arguments", file=sys.stderr)
            return 2
        report = evalkit.eval_cross_style(args.ckpt[0], args.ckpt[1], episodes=args.episodes,
                                          episode_len=args.len, seed=args.seed)
    elif args.mode == "style":
        if not args.dataset:
            print("eval style needs --dataset", file=sys.stderr)
            return 2
        div = evalkit.style_divergence(args.ckpt[0], read_dataset(args.dataset),
                                       episodes=args.episodes, episode_len=args.len or 600,
                                       seed=args.seed)
        payload = json.dumps({"schema_version": 1, "scenario": "style",
                              "divergence": div, "dataset": args.dataset,
                              "episodes": args.episodes, "seed": args.seed}, indent=2)
        _write_report(payload, args.out)
        return 0
    else:
        raise AssertionError(args.mode)
    _write_report(report.to_json(), args.out)
    return 0


def _write_report(payload: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(payload + "\n")
        print(f"wrote {out}")
    else:
        print(payload)


def _cmd_gen_demos(args) -> int:
    from .config import ArenaConfig, load_config
    from .demos import STYLES, generate_interaction_dataset, generate_single_dataset, write_dataset

    arena = load_config(args.config).arena if args.config else ArenaConfig()
    if "+" in args.style:
        a, b = args.style.split("+", 1)
        if a not in STYLES or b not in STYLES:
            print(f"unknown style in pair {args.style!r}; known: {', '.join(STYLES)}",
                  file=sys.stderr)
            return 2
        rounds = max(1, int(round(args.seconds / args.round_seconds)))
        ds = generate_interaction_dataset(STYLES[a], STYLES[b], rounds=rounds,
                                          seed=args.seed, config=arena,
                                          round_seconds=args.round_seconds)
    else:
        if args.style not in STYLES:
            print(f"unknown style {args.style!r}; known: {', '.join(STYLES)}",
                  file=sys.stderr)
            return 2
        ds = generate_single_dataset(STYLES[args.style], seconds=args.seconds,
                                     seed=args.seed, config=arena)
    write_dataset(ds, args.out)
    print(f"wrote {ds.total_frames()} frames ({len(ds.clips)} clips) to {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import asyncio

    from .livebridge import LiveServer

    server = LiveServer(args.ckpt, port=args.port, host=args.host,
                        speed=args.speed, stochastic=args.stochastic, seed=args.seed)
    print(f"serving {list(server.ckpts)} on ws://{args.host}:{args.port}")
    try:
        asyncio.run(server.main())
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maaip",
                                description="Two-fighter imitation training and serving")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the training loop")
    t.add_argument("--config", required=True, help="INI config file")
    t.add_argument("--resume", help="checkpoint to resume from")
    t.add_argument("--override-config", action="store_true",
                   help="allow resuming from a checkpoint with a different config")
    t.add_argument("--max-iterations", type=int, default=None)
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="evaluation protocols")
    e.add_argument("mode", choices=("damage", "heading", "style", "cross"))
    e.add_argument("--ckpt", action="append", required=True,
                   help="checkpoint path (repeat for two-checkpoint modes)")
    e.add_argument("--episodes", type=int, default=32)
    e.add_argument("--len", type=int, default=1200, help="episode length in control steps")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--dataset", help="demo dataset (style mode)")
    e.add_argument("--out", help="write the JSON report here")
    e.set_defaults(fn=_cmd_eval)

    g = sub.add_parser("gen-demos", help="synthesize demonstration datasets")
    g.add_argument("--style", required=True,
                   help="style id for single-actor data, or 'a+b' for interactions")
    g.add_argument("--seconds", type=float, default=300.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output .jsonl path")
    g.add_argument("--round-seconds", type=float, default=30.0)
    g.add_argument("--config", help="take arena geometry from this config file")
    g.set_defaults(fn=_cmd_gen_demos)

    s = sub.add_parser("serve", help="serve a live rollout over WebSocket")
    s.add_argument("--ckpt", action="append", required=True)
    s.add_argument("--port", type=int, default=8787)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--speed", type=float, default=1.0)
    s.add_argument("--stochastic", action="store_true",
                   help="sample actions instead of taking the mean")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=_cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
