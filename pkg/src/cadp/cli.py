"""Command-line entry point: train, eval, export-attention, compare."""

from __future__ import annotations

import argparse
import sys

from .config import load_config, parse_config_text
from .errors import CadpError
from .runner import (
    MODE_CENTRALIZED,
    MODE_DECENTRALIZED,
    compare_runs,
    comparison_csv,
    export_attention,
    render_comparison,
    run_eval,
    run_train,
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cadp",
        description=(
            "Cooperative value-decomposition training with attention-based "
            "advice exchange that is pruned away for decentralized execution."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy")
    p_train.add_argument("--config", help="key=value config file")
    p_train.add_argument(
        "--set", dest="overrides", action="append", default=[],
        metavar="KEY=VALUE", help="override a config entry (repeatable)",
    )
    p_train.add_argument("--resume", help="checkpoint to continue from")
    p_train.add_argument("--run-dir", help="explicit output directory")

    p_eval = sub.add_parser("eval", help="evaluate a stored policy")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument(
        "--mode", required=True, choices=[MODE_CENTRALIZED, MODE_DECENTRALIZED],
        help="C: with advice exchange; D: independent execution",
    )
    p_eval.add_argument("--episodes", type=int, default=32)
    p_eval.add_argument("--seed", type=int, default=0)

    p_att = sub.add_parser(
        "export-attention", help="dump per-step confidence matrices to CSV"
    )
    p_att.add_argument("--checkpoint", required=True)
    p_att.add_argument("--episodes", type=int, default=8)
    p_att.add_argument("--seed", type=int, default=0)
    p_att.add_argument("--out", default="attention.csv")

    p_cmp = sub.add_parser("compare", help="aggregate metrics across runs")
    p_cmp.add_argument("run_dirs", nargs="+", metavar="RUN_DIR")
    p_cmp.add_argument("--last-k", type=int, default=1,
                       help="average this many final evaluation rows per run")
    p_cmp.add_argument("--csv", help="also write the table to this CSV file")
    return parser


def _cmd_train(args):
    if args.config is not None:
        config = load_config(args.config, overrides=args.overrides)
    else:
        config = parse_config_text("", overrides=args.overrides)
    summary = run_train(config, run_dir=args.run_dir, resume_from=args.resume)
    print(f"run directory: {summary['run_dir']}")
    print(
        f"finished after {summary['env_steps']} environment steps, "
        f"{summary['episodes']} episodes, {summary['train_steps']} train steps"
    )
    row = summary["final_row"]
    if row is not None:
        print(
            f"final evaluation: return C={row['eval_return_c']:.4f} "
            f"D={row['eval_return_d']:.4f}, win rate C={row['eval_win_c']:.3f} "
            f"D={row['eval_win_d']:.3f}"
        )
    return 0


def _cmd_eval(args):
    result = run_eval(args.checkpoint, args.mode, args.episodes, args.seed)
    print(
        f"mode {result['mode']}: mean return {result['mean_return']:.6f} "
        f"± {result['std_return']:.6f} over {result['episodes']} episodes"
    )
    print(
        f"win rate {result['win_rate']:.3f} "
        f"(optimal return {result['optimal_return']:.6f})"
    )
    return 0


def _cmd_export_attention(args):
    result = export_attention(args.checkpoint, args.episodes, args.seed, args.out)
    print(f"wrote {result['rows']} confidence entries to {result['path']}")
    return 0


def _cmd_compare(args):
    results = compare_runs(args.run_dirs, last_k=args.last_k)
    print(render_comparison(results))
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(comparison_csv(results))
        print(f"wrote {args.csv}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "export-attention": _cmd_export_attention,
    "compare": _cmd_compare,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CadpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
