"""
Sample Handlers
Loads a checkpoint, samples every subgraph and writes the deduplicated prediction file
"""

import logging
from pathlib import Path
from typing import Any, Dict, List

from pydantic import ValidationError

from ..checkpoint import load_checkpoint
from ..diffusion import make_schedule
from ..errors import IoError
from ..kg.data import load_dataset, partition_graph
from ..models import RunConfig, config_error
from ..sampling import export_snapshots, predict_graph
from .train_handlers import prepare_out_dir, write_resolved_config

logger = logging.getLogger(__name__)


def handle_sample(config: RunConfig, arguments: Dict[str, Any]) -> List[str]:
    """Handle the sample command"""
    out_dir = prepare_out_dir(config)
    write_resolved_config(config, out_dir)
    checkpoint_path = Path(arguments.get("checkpoint") or out_dir / "checkpoint.bin")

    bundle = load_dataset(config.data.train, config.data.valid, config.data.test)
    checkpoint = load_checkpoint(checkpoint_path, bundle.vocab)
    header = checkpoint.header

    try:
        sampler_cfg = config.sampler_config(steps=header.steps)
    except ValidationError as e:
        raise config_error(e) from e
    subgraphs = partition_graph(bundle.train, header.cap, header.seed, entities=range(bundle.vocab.n_entities))
    prediction = predict_graph(
        subgraphs,
        checkpoint.params,
        make_schedule(header.steps),
        sampler_cfg,
        config.run.seed,
        checkpoint_mode=header.mode,
    )

    rows = sorted(bundle.vocab.decode(t) for t in prediction.triples)
    predictions_path = out_dir / "predictions.tsv"
    try:
        predictions_path.write_text("".join(f"{h}\t{r}\t{t}\n" for h, r, t in rows), encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {predictions_path}: {e}") from e
    logger.info(f"✅ Wrote {len(rows)} predictions to {predictions_path}")

    snapshot_files = 0
    for subgraph_id, trajectory in prediction.trajectories:
        snapshot_files += len(export_snapshots(
            trajectory,
            bundle.vocab,
            out_dir / "snapshots" / f"subgraph_{subgraph_id:04d}",
            ground_truth=bundle.test,
            fmt=sampler_cfg.snapshot_format,
        ))

    return [
        f"predictions = {predictions_path}",
        f"t_pred = {len(rows)}",
        f"snapshot_files = {snapshot_files}",
    ]
