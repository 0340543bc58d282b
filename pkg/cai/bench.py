"""
Benchmarking
Scores extracted records against a golden dataset and runs the sensitivity
sweeps (chunk size, number of prompt examples, sampling parameters).

Metrics per document:
- accuracy / recall / total_recall: matched / golden
- precision: matched / predicted
- high_conf_precision: matched high-confidence / high-confidence
- high_conf_recall: matched high-confidence / golden
A rate whose denominator is zero is reported as null.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from cai.corpus import Document, chunk_text
from cai.errors import CAIError, ConfigError, SweepAborted
from cai.relevance import RELEVANT, classify_chunks
from cai.validate import METRIC_FIELDS, field_evidenced, is_high_confidence, normalize

logger = logging.getLogger(__name__)

MetricTuple = Tuple[Any, ...]

LLM_PRESETS = {
    'provider_defaults': {'temperature': 0.7, 'top_p': 0.95, 'top_k': 40},
    'deterministic': {'temperature': 0.0, 'top_p': 0.0, 'top_k': 1},
}


@dataclass(frozen=True)
class GoldenCommitment:
    company_id: str
    doc_id: str
    target_year: Optional[int]
    base_year: Optional[int]
    target_percent: Optional[float]
    target_type: Optional[str]
    scope: Optional[str]

    def metrics(self) -> MetricTuple:
        return tuple(getattr(self, name) for name in METRIC_FIELDS)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GoldenCommitment':
        percent = data.get('target_percent')
        return cls(
            company_id=str(data['company_id']),
            doc_id=str(data['doc_id']),
            target_year=data.get('target_year'),
            base_year=data.get('base_year'),
            target_percent=None if percent is None else float(percent),
            target_type=data.get('target_type'),
            scope=None if data.get('scope') is None else str(data['scope']),
        )


def metrics_of(row: Dict[str, Any]) -> MetricTuple:
    values = []
    for name in METRIC_FIELDS:
        value = row.get(name)
        if name == 'target_percent' and value is not None:
            value = float(value)
        values.append(value)
    return tuple(values)


def read_jsonl(path) -> List[Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path} not found")
    rows = []
    for line_no, line in enumerate(path.read_text(encoding='utf-8').splitlines(), 1):
        if line.strip():
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}:{line_no}: {e}") from e
    return rows


def load_golden(path) -> List[GoldenCommitment]:
    golden = [GoldenCommitment.from_dict(row) for row in read_jsonl(path)]
    logger.info(f"Loaded {len(golden)} golden commitments from {path}")
    return golden


def match(golden: Sequence[MetricTuple], predicted: Sequence[MetricTuple]) -> List[Tuple[int, int]]:
    """Greedy exact matching on all five fields; each side is used at most once."""
    used = set()
    pairs = []
    for gi, g in enumerate(golden):
        for pi, p in enumerate(predicted):
            if pi not in used and p == g:
                used.add(pi)
                pairs.append((gi, pi))
                break
    return pairs


def _rate(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


def doc_metrics(golden: Sequence[MetricTuple], predicted: Sequence[MetricTuple],
                high_conf_subset: Sequence[MetricTuple] = ()) -> Dict[str, Any]:
    matched = len(match(golden, predicted))
    matched_high = len(match(golden, high_conf_subset))
    recall = _rate(matched, len(golden))
    return {
        'matched': matched,
        'golden': len(golden),
        'predicted': len(predicted),
        'high_conf': len(high_conf_subset),
        'matched_high_conf': matched_high,
        'accuracy': recall,
        'recall': recall,
        'precision': _rate(matched, len(predicted)),
        'total_recall': recall,
        'high_conf_recall': _rate(matched_high, len(golden)),
        'high_conf_precision': _rate(matched_high, len(high_conf_subset)),
    }


@dataclass
class EvalReport:
    documents: pd.DataFrame
    aggregates: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {'documents': frame_to_rows(self.documents), 'aggregates': self.aggregates}

    def to_text(self) -> str:
        lines = [self.documents.to_string(index=False, na_rep='-', float_format='{:.3f}'.format)
                 if not self.documents.empty else '(no documents)', '']
        for key, value in self.aggregates.items():
            shown = '-' if value is None else (f"{value:.3f}" if isinstance(value, float) else value)
            lines.append(f"{key:>22}: {shown}")
        return '\n'.join(lines) + '\n'


def evaluate(golden: Sequence[GoldenCommitment], predicted: Sequence[Dict[str, Any]]) -> EvalReport:
    """Per-document metrics plus micro-averaged aggregates over all documents."""
    golden_by_doc: Dict[str, List[MetricTuple]] = {}
    for g in golden:
        golden_by_doc.setdefault(g.doc_id, []).append(g.metrics())
    predicted_by_doc: Dict[str, List[Dict[str, Any]]] = {}
    for row in predicted:
        predicted_by_doc.setdefault(row['doc_id'], []).append(row)

    rows = []
    for doc_id in sorted(set(golden_by_doc) | set(predicted_by_doc)):
        preds = predicted_by_doc.get(doc_id, [])
        high = [metrics_of(r) for r in preds
                if is_high_confidence(float(r['confidence']), r.get('error_codes', []))]
        rows.append({'doc_id': doc_id,
                     **doc_metrics(golden_by_doc.get(doc_id, []),
                                   [metrics_of(r) for r in preds], high)})
    columns = ['doc_id'] + list(doc_metrics([], []).keys())
    table = pd.DataFrame(rows, columns=columns)

    total = {key: int(table[key].sum()) for key in
             ('matched', 'golden', 'predicted', 'high_conf', 'matched_high_conf')}
    recall = _rate(total['matched'], total['golden'])
    aggregates = {
        'documents': len(table),
        **total,
        'accuracy': recall,
        'recall': recall,
        'precision': _rate(total['matched'], total['predicted']),
        'total_recall': recall,
        'high_conf_recall': _rate(total['matched_high_conf'], total['golden']),
        'high_conf_precision': _rate(total['matched_high_conf'], total['high_conf']),
    }
    return EvalReport(table, aggregates)


def compare_runs(golden: Sequence[GoldenCommitment],
                 runs: Dict[str, Sequence[Dict[str, Any]]]) -> pd.DataFrame:
    """One row per record file, in the columns of a model comparison table."""
    rows = []
    for name, records in runs.items():
        agg = evaluate(golden, records).aggregates
        rows.append({'run': name,
                     'Total Recall': agg['total_recall'],
                     'High Scored Data Precision': agg['high_conf_precision'],
                     'High Scored Data Recall': agg['high_conf_recall']})
    return pd.DataFrame(rows, columns=['run', 'Total Recall', 'High Scored Data Precision',
                                       'High Scored Data Recall'])


def commitment_in_text(golden: GoldenCommitment, text: str) -> bool:
    """All populated metric values of a golden commitment are evidenced in the text."""
    folded = ' '.join(text.split()).casefold()
    return all(field_evidenced(name, getattr(golden, name), folded)
               for name in METRIC_FIELDS if getattr(golden, name) is not None)


def sweep_chunk_size(documents: Sequence[Document], golden: Sequence[GoldenCommitment],
                     relevance_backend, sizes: Iterable[int] = (60, 80, 100, 120, 160)) -> pd.DataFrame:
    """
    For each window size (overlap a quarter of it), the share of golden commitments
    whose metric values all sit inside at least one chunk labelled relevant.
    """
    golden_by_doc: Dict[str, List[GoldenCommitment]] = {}
    for g in golden:
        golden_by_doc.setdefault(g.doc_id, []).append(g)
    rows = []
    for size in sizes:
        overlap = size // 4
        found = chunks_total = relevant_total = 0
        for doc in documents:
            chunks = chunk_text(doc, size, overlap)
            results = classify_chunks(chunks, relevance_backend)
            relevant = [c.text for c, r in zip(chunks, results) if r.label == RELEVANT]
            chunks_total += len(chunks)
            relevant_total += len(relevant)
            for g in golden_by_doc.get(doc.doc_id, []):
                if any(commitment_in_text(g, text) for text in relevant):
                    found += 1
        expected = sum(len(golden_by_doc.get(doc.doc_id, [])) for doc in documents)
        rows.append({'window_words': size, 'overlap_words': overlap, 'chunks': chunks_total,
                     'relevant_chunks': relevant_total, 'golden': expected, 'found': found,
                     'recall': _rate(found, expected)})
        logger.info(f"chunk size {size}/{overlap}: recall {found}/{expected}")
    return pd.DataFrame(rows)


def context_splits(store: Sequence, cv_samples: int, train_fraction: float,
                   seed: int) -> List[Tuple[List[int], List[int]]]:
    """
    Random train/test splits grouped by context: examples sharing a context always
    fall on the same side. Returns store indices for each split.
    """
    groups: Dict[str, List[int]] = {}
    for i, example in enumerate(store):
        groups.setdefault(example.context, []).append(i)
    keys = list(groups)
    if len(keys) < 2:
        raise ConfigError("k-shot sweep needs at least two distinct example contexts")
    n_train = min(len(keys) - 1, max(1, round(train_fraction * len(keys))))
    rng = np.random.default_rng(seed)
    splits = []
    for _ in range(cv_samples):
        order = rng.permutation(len(keys))
        train = sorted(i for g in order[:n_train] for i in groups[keys[g]])
        test = sorted(i for g in order[n_train:] for i in groups[keys[g]])
        splits.append((train, test))
    return splits


def _evaluate_split(extractor, store: Sequence, train: List[int], test: List[int],
                    k: int) -> Tuple[int, int, int]:
    train_store = [store[i] for i in train]
    matched = golden_total = predicted_total = 0
    seen_contexts = set()
    for i in test:
        example = store[i]
        if example.context in seen_contexts:
            continue
        seen_contexts.add(example.context)
        expected = [normalize(raw).metrics() for j in test if store[j].context == example.context
                    for raw in store[j].expected]
        raws = extractor.extract_text(example.context, k=k, store=train_store)
        predicted = [normalize(raw).metrics() for raw in raws]
        matched += len(match(expected, predicted))
        golden_total += len(expected)
        predicted_total += len(predicted)
    return matched, golden_total, predicted_total


def _sweep(store, splits, points: List[Tuple[Dict[str, Any], Any, int]],
           label: str) -> pd.DataFrame:
    rows: List[Dict[str, Any]] = []
    for row_head, point_extractor, k in points:
        recalls, precisions = [], []
        try:
            for train, test in splits:
                matched, golden_total, predicted_total = _evaluate_split(
                    point_extractor, store, train, test, k)
                recalls.append(_rate(matched, golden_total))
                precisions.append(_rate(matched, predicted_total))
        except CAIError as e:
            raise SweepAborted(f"{label} sweep stopped at {row_head}: {e.message}", rows) from e
        recall = _mean(recalls)
        rows.append({**row_head, 'samples': len(splits), 'recall': recall, 'accuracy': recall,
                     'precision': _mean(precisions)})
        logger.info(f"{label} sweep {row_head}: recall {recall}")
    return pd.DataFrame(rows)


def _mean(values: List[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def sweep_kshot(store: Sequence, extractor, k_range: Iterable[int] = range(1, 11),
                cv_samples: int = 6, train_fraction: float = 0.7, seed: int = 42) -> pd.DataFrame:
    """Mean recall per k over the same seeded context-grouped splits."""
    splits = context_splits(store, cv_samples, train_fraction, seed)
    points = [({'k': k}, extractor, k) for k in k_range]
    return _sweep(store, splits, points, 'k-shot')


def sweep_llm_params(store: Sequence, extractor, presets: Optional[Dict[str, Dict]] = None,
                     k: int = 6, cv_samples: int = 6, train_fraction: float = 0.7,
                     seed: int = 42) -> pd.DataFrame:
    """Mean recall per sampling preset, same splits as the k-shot sweep."""
    presets = presets or LLM_PRESETS
    splits = context_splits(store, cv_samples, train_fraction, seed)
    points = [({'preset': name, **params}, replace(extractor, **params), k)
              for name, params in presets.items()]
    return _sweep(store, splits, points, 'sampling')


def frame_to_rows(frame: pd.DataFrame) -> List[Dict[str, Any]]:
    cleaned = frame.astype(object).where(frame.notna(), None)
    return cleaned.to_dict(orient='records')
