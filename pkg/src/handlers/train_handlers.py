"""
Train Handlers
Runs the training loop and writes the checkpoint, the per-epoch log and the resolved config
"""

import logging
from pathlib import Path
from typing import Any, Dict, List

from ..checkpoint import load_checkpoint, save_checkpoint
from ..errors import IoError
from ..kg.data import load_dataset
from ..models import RunConfig
from ..training import epoch_logger, train

logger = logging.getLogger(__name__)


def write_resolved_config(config: RunConfig, out_dir: Path) -> Path:
    path = out_dir / "resolved_config.txt"
    try:
        path.write_text("\n".join(config.render()) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path


def prepare_out_dir(config: RunConfig) -> Path:
    out_dir = Path(config.run.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create output directory {out_dir}: {e}") from e
    return out_dir


def handle_train(config: RunConfig, arguments: Dict[str, Any]) -> List[str]:
    """Handle the train command"""
    out_dir = prepare_out_dir(config)
    write_resolved_config(config, out_dir)

    log_mode = "a" if config.train.resume else "w"
    log_handler = logging.FileHandler(out_dir / "train.log", mode=log_mode, encoding="utf-8")
    log_handler.setFormatter(logging.Formatter("%(message)s"))
    epoch_logger.setLevel(logging.INFO)
    epoch_logger.addHandler(log_handler)
    try:
        bundle = load_dataset(config.data.train, config.data.valid, config.data.test)
        resume = load_checkpoint(config.train.resume, bundle.vocab) if config.train.resume else None
        checkpoint = train(bundle, config.train_config(), resume=resume)
    finally:
        epoch_logger.removeHandler(log_handler)
        log_handler.close()

    checkpoint_path = out_dir / "checkpoint.bin"
    save_checkpoint(checkpoint, checkpoint_path)
    return [
        f"checkpoint = {checkpoint_path}",
        f"best_epoch = {checkpoint.header.epoch}",
        f"val_f_tsp = {checkpoint.header.val_f_tsp}",
    ]
