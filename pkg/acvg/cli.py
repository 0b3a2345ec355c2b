"""Command-line entry point: gen-data, train, eval, ablate, grad-check and
loss-check.

Exit codes: 0 success, 1 verification failure, 2 usage or prerequisite
error, 3 numeric failure.
"""
import sys
from argparse import ArgumentParser, Namespace
from dataclasses import replace
from typing import Optional, Sequence

from loguru import logger

from acvg.errors import ACVGError, NumericError
from acvg.evaluate import ABLATION_RUNS, ACTION_MODES, evaluate, run_ablation, write_ablation, write_metrics_csv
from acvg.train import (
    PHASE_FUNCTIONS,
    PHASE_ORDER,
    RECON_COLUMNS,
    LossLog,
    load_training_clips,
    loss_log_path,
    loss_ratio,
    train_full,
)
from acvg.utils.checkpoint import load_checkpoint, save_checkpoint
from acvg.utils.config import PHASES, WorldConfig, generate_config
from acvg.utils.generate_sequences import generate_dataset
from acvg.utils.grad_suite import failed_checks, resolve_checks, run_grad_checks
from acvg.utils.storage import load_dataset
from acvg.utils.utils import setup_logging

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _banner(command: str, args: Namespace) -> None:
    settings = ", ".join(f"{k}={v}" for k, v in sorted(vars(args).items()) if k not in ("command", "handler"))
    logger.info(f"acvg {command}: {settings}")


def gen_data(args: Namespace) -> int:
    cfg = WorldConfig(
        height=args.height,
        width=args.width,
        channels=args.channels,
        dt=args.dt,
        mode=args.mode,
        policy=args.policy,
        seed=args.seed,
    )
    generate_dataset(cfg, args.sequences, args.length, args.out, workers=args.workers)
    return EXIT_OK


def train(args: Namespace) -> int:
    cfg = generate_config(args.config)
    overrides = {"phase": args.phase, "data_dir": args.data}
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = replace(cfg, **overrides)
    logger.info(cfg.banner())

    clips = load_training_clips(cfg)
    log = LossLog()
    try:
        if cfg.phase == "full":
            train_full(cfg, clips, args.ckpt_out, log)
        else:
            ckpt = load_checkpoint(args.ckpt_in) if args.ckpt_in else None
            ckpt = PHASE_FUNCTIONS[cfg.phase](cfg, clips, ckpt, log)
            save_checkpoint(ckpt, args.ckpt_out)
    finally:
        if len(log):
            log.write_csv(loss_log_path(args.ckpt_out))
            logger.info(f"Wrote {len(log)} loss rows to {loss_log_path(args.ckpt_out)}.")
    return EXIT_OK


def evaluate_command(args: Namespace) -> int:
    ckpt = load_checkpoint(args.ckpt)
    records = load_dataset(args.data, args.split)
    rows = evaluate(
        ckpt,
        records,
        history=args.past,
        horizon=args.future,
        action_mode=args.action_mode,
        seed=args.seed,
        noise_sigma=args.noise_sigma,
        dt_factor=args.dt_factor,
        clip_len=args.clip_len,
        gap=args.gap,
        num_workers=args.workers,
        dump_frames=args.dump_frames,
    )
    write_metrics_csv(rows, args.metrics_out)
    logger.info(f"Wrote {len(rows)} metric rows to {args.metrics_out}.")
    return EXIT_OK


def ablate(args: Namespace) -> int:
    modes = [mode.strip() for mode in args.modes.split(",") if mode.strip()]
    checkpoints = {
        "acvg": load_checkpoint(args.ckpt_acvg) if args.ckpt_acvg else None,
        "fa": load_checkpoint(args.ckpt_fa) if args.ckpt_fa else None,
    }
    records = load_dataset(args.data, args.split)
    report = run_ablation(
        checkpoints,
        records,
        modes,
        seeds=list(range(args.seed, args.seed + args.seeds)),
        history=args.past,
        horizon=args.future,
        clip_len=args.clip_len,
        gap=args.gap,
        num_workers=args.workers,
    )
    write_ablation(report, args.out)
    return EXIT_OK


def grad_check_command(args: Namespace) -> int:
    errors = run_grad_checks(resolve_checks(args.ops), args.seed)
    for name, error in errors.items():
        print(f"{name:<20} {error:.3e}")
    failed = failed_checks(errors)
    if failed:
        logger.error(f"Gradient checks failed: {', '.join(failed)}")
        return EXIT_VERIFY
    return EXIT_OK


def loss_check(args: Namespace) -> int:
    columns = [c.strip() for c in args.columns.split(",") if c.strip()]
    ratio = loss_ratio(LossLog.read_csv(args.log), args.phase, columns, args.window)
    print(f"{args.phase} {'+'.join(columns)}: last/first {args.window}-step mean ratio {ratio:.3f}")
    if not ratio < args.max_ratio:
        logger.error(f"Loss ratio {ratio:.3f} is not below {args.max_ratio}.")
        return EXIT_VERIFY
    return EXIT_OK


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="acvg", description="Action-conditioned video prediction lab.", allow_abbrev=False)
    parser.add_argument("--log-file", default=None, help="Also write logs to this file.")
    parser.add_argument("--log-level", default="INFO")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("gen-data", help="Simulate a synthetic dataset.")
    p.add_argument("--out", required=True)
    p.add_argument("--sequences", type=int, default=25)
    p.add_argument("--length", type=int, default=50)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--mode", choices=("unicycle", "translate"), default="unicycle")
    p.add_argument("--policy", choices=("waypoint", "hold", "constant"), default="waypoint")
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(handler=gen_data)

    p = commands.add_parser("train", help="Run one training phase or all three.")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--phase", choices=PHASES, default="full")
    p.add_argument("--ckpt-in", default=None)
    p.add_argument("--ckpt-out", required=True)
    p.add_argument("--seed", type=int, default=None, help="Overrides the config file's seed.")
    p.set_defaults(handler=train)

    p = commands.add_parser("eval", help="Per-timestep metrics of a checkpoint.")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--past", type=int, default=5)
    p.add_argument("--future", type=int, default=20)
    p.add_argument("--action-mode", choices=ACTION_MODES, default="actor")
    p.add_argument("--metrics-out", required=True)
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--dt-factor", type=int, default=1)
    p.add_argument("--clip-len", type=int, default=50)
    p.add_argument("--gap", type=int, default=10)
    p.add_argument("--workers", type=int, default=0)
    p.add_argument("--dump-frames", default=None, help="Write predicted and true frames as PPM here.")
    p.set_defaults(handler=evaluate_command)

    p = commands.add_parser("ablate", help="ACVG against the fixed-action baseline.")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt-acvg", default=None)
    p.add_argument("--ckpt-fa", default=None)
    p.add_argument("--modes", default=",".join(ABLATION_RUNS))
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0, help="First evaluation seed.")
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.add_argument("--past", type=int, default=5)
    p.add_argument("--future", type=int, default=20)
    p.add_argument("--clip-len", type=int, default=50)
    p.add_argument("--gap", type=int, default=10)
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(handler=ablate)

    p = commands.add_parser("grad-check", help="Finite-difference gradient suite.")
    p.add_argument("--ops", default="all")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=grad_check_command)

    p = commands.add_parser("loss-check", help="Compare late and early losses of a training log.")
    p.add_argument("--log", required=True, help="Loss CSV written next to a training checkpoint.")
    p.add_argument("--phase", choices=PHASE_ORDER, default="generator")
    p.add_argument("--columns", default=",".join(RECON_COLUMNS))
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--max-ratio", type=float, default=0.5)
    p.set_defaults(handler=loss_check)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    setup_logging(args.log_file, args.log_level)
    _banner(args.command, args)
    try:
        return args.handler(args)
    except NumericError as e:
        logger.error(f"Numeric failure: {e}")
        return EXIT_NUMERIC
    except (ACVGError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
