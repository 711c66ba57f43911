"""
Command-line front door
Resolves the run config, echoes it, and dispatches to the command handlers
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional, Sequence

from pydantic import ValidationError

from .config import load_flat_config, nest_flat_config
from .errors import ConfigError, KGDiffError
from .handlers import handle_eval, handle_sample, handle_train
from .models import RunConfig, config_error

logger = logging.getLogger(__name__)

# Named flags and the config keys they override
FLAG_KEYS = {
    "seed": "run.seed",
    "out": "run.out",
    "snapshot_steps": "sample.snapshot_steps",
    "assumption": "eval.assumption",
    "similarity": "eval.similarity",
    "mode": "sample.mode",
    "resume": "train.resume",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgdiff", description="Triple set prediction with discrete diffusion")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_command(name: str, help_text: str) -> argparse.ArgumentParser:
        command = commands.add_parser(name, help=help_text)
        command.add_argument("--config", help="flat section.key = value config file")
        command.add_argument("--seed", help="run seed")
        command.add_argument("--out", help="output directory")
        return command

    train = add_command("train", "train a denoiser and write a checkpoint")
    train.add_argument("--resume", help="checkpoint to continue training from")

    sample = add_command("sample", "predict triples with a trained checkpoint")
    sample.add_argument("--checkpoint", help="checkpoint file (default: <out>/checkpoint.bin)")
    sample.add_argument("--snapshot-steps", dest="snapshot_steps", help="comma-separated reverse steps to export")
    sample.add_argument("--mode", choices=["standard", "repaint"])

    evaluate = add_command("eval", "score a prediction file")
    evaluate.add_argument("--predictions", help="prediction TSV (default: <out>/predictions.tsv)")
    evaluate.add_argument("--assumption", choices=["cwa", "rs-powa"])
    evaluate.add_argument("--similarity", help="'default' or a similarity matrix file")
    return parser


def parse_overrides(extra: Sequence[str]) -> Dict[str, str]:
    """Collect generic `--section.key VALUE` (or `--section.key=VALUE`) flags"""
    overrides: Dict[str, str] = {}
    tokens = list(extra)
    while tokens:
        token = tokens.pop(0)
        if not token.startswith("--") or "." not in token:
            raise ConfigError(token, "unrecognized argument")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        elif tokens:
            value = tokens.pop(0)
        else:
            raise ConfigError(key, "missing value")
        overrides[key] = value
    return overrides


def resolve_config(args: argparse.Namespace, extra: Sequence[str]) -> RunConfig:
    overrides = parse_overrides(extra)
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    values = load_flat_config(args.config, overrides)
    try:
        return RunConfig.model_validate(nest_flat_config(values))
    except ValidationError as e:
        raise config_error(e) from e


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns the process exit code"""
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)

    handler_map = {
        "train": handle_train,
        "sample": handle_sample,
        "eval": handle_eval,
    }

    try:
        config = resolve_config(args, extra)
        logger.info(f"🚀 Running {args.command} with resolved config:")
        for line in config.render():
            logger.info(f"  {line}")
        handler = handler_map[args.command]
        for line in handler(config, vars(args)):
            print(line)
        return 0
    except KGDiffError as e:
        logger.error(f"💥 {args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"💥 {args.command} failed unexpectedly: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
