"""
Eval Handlers
Scores a prediction file against the test split under CWA or RS-POWA
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Set, Tuple

from ..errors import IoError
from ..evaluation import cwa_metrics, default_similarity, load_similarity, rs_powa_metrics
from ..kg.core import RawTriple, Triple, Vocab
from ..kg.data import DatasetBundle, load_dataset, load_tsv
from ..models import MetricsReport, RunConfig
from .train_handlers import prepare_out_dir

logger = logging.getLogger(__name__)


def resolve_predictions(rows: List[RawTriple], vocab: Vocab) -> Tuple[Set[Triple], int]:
    """Encode prediction rows; rows naming unknown entities or relations are counted, not raised"""
    resolved: Set[Triple] = set()
    unresolved: Set[RawTriple] = set()
    for head, relation, tail in rows:
        if vocab.has_entity(head) and vocab.has_relation(relation) and vocab.has_entity(tail):
            resolved.add(vocab.encode((head, relation, tail)))
        else:
            unresolved.add((head, relation, tail))
    if unresolved:
        logger.warning(f"⚠️ {len(unresolved)} predicted triples use unknown names; counted as wrong")
    return resolved, len(unresolved)


def score(bundle: DatasetBundle, predicted: Set[Triple], unresolved: int, config: RunConfig) -> MetricsReport:
    if config.eval.assumption == "cwa":
        return cwa_metrics(predicted, bundle.test, unresolved)
    if config.eval.similarity == "default":
        sim = default_similarity(bundle.train, config.eval.theta)
    else:
        sim = load_similarity(config.eval.similarity, bundle.vocab, config.eval.theta)
    return rs_powa_metrics(predicted, bundle.test, bundle.train, sim, unresolved)


def handle_eval(config: RunConfig, arguments: Dict[str, Any]) -> List[str]:
    """Handle the eval command"""
    out_dir = prepare_out_dir(config)
    predictions_path = Path(arguments.get("predictions") or out_dir / "predictions.tsv")

    bundle = load_dataset(config.data.train, config.data.valid, config.data.test)
    predicted, unresolved = resolve_predictions(load_tsv(predictions_path), bundle.vocab)
    report = score(bundle, predicted, unresolved, config)

    record = report.to_record()
    try:
        (out_dir / "metrics.txt").write_text("\n".join(record) + "\n", encoding="utf-8")
        (out_dir / "metrics.json").write_text(report.to_json() + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write metrics to {out_dir}: {e}") from e
    logger.info(f"✅ {report.assumption} f_tsp={report.f_tsp:.4f}")
    return record + [report.to_json()]
