"""
Deduplication and Consolidation
Groups near-identical commitments of one company, merges each group by majority
vote and keeps the best record per five-metric tuple.

Similarity of two records is the mean over the components both sides have:
cosine of the target_wording, sub_context and entity_name embeddings, and exact
match of the five metric fields.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

from cai.embedding import BaselineEmbedder, cosine
from cai.errors import BackendError, DedupError
from cai.validate import METRIC_FIELDS, TEXT_FIELDS, ScoredRecord, score

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.95
VOTE_FIELDS = METRIC_FIELDS + TEXT_FIELDS


@dataclass(frozen=True)
class SimilarityBreakdown:
    text_components: Dict[str, Optional[float]]
    exact_components: Dict[str, Optional[float]]
    applicable_count: int
    score: float


@dataclass(frozen=True)
class Cluster:
    members: Tuple[int, ...]
    records: Tuple[ScoredRecord, ...] = field(repr=False)


@dataclass
class DedupResult:
    final: List[ScoredRecord]
    debug: List[Dict[str, Any]]


class UnionFind:
    def __init__(self, size: int):
        self.parent = list(range(size))
        self.rank = [1] * size

    def find(self, u: int) -> int:
        if self.parent[u] != u:
            self.parent[u] = self.find(self.parent[u])
        return self.parent[u]

    def union(self, u: int, v: int):
        root_u, root_v = self.find(u), self.find(v)
        if root_u == root_v:
            return
        if self.rank[root_u] > self.rank[root_v]:
            self.parent[root_v] = root_u
        elif self.rank[root_u] < self.rank[root_v]:
            self.parent[root_u] = root_v
        else:
            self.parent[root_v] = root_u
            self.rank[root_u] += 1


def similarity(a: ScoredRecord, b: ScoredRecord, backend=None) -> SimilarityBreakdown:
    if a.record.company_id != b.record.company_id:
        raise DedupError(f"cannot compare records of {a.record.company_id} "
                         f"and {b.record.company_id}")
    backend = backend or BaselineEmbedder()
    text_components: Dict[str, Optional[float]] = {}
    for name in TEXT_FIELDS:
        left, right = getattr(a.record, name), getattr(b.record, name)
        if left is None or right is None:
            text_components[name] = None
            continue
        try:
            text_components[name] = cosine(backend.embed(left), backend.embed(right))
        except BackendError as e:
            raise DedupError(f"embedding failed while comparing records: {e.message}") from e
    exact_components: Dict[str, Optional[float]] = {}
    for name in METRIC_FIELDS:
        left, right = getattr(a.record, name), getattr(b.record, name)
        exact_components[name] = None if left is None or right is None else float(left == right)
    present = [v for v in list(text_components.values()) + list(exact_components.values())
               if v is not None]
    value = sum(present) / len(present) if present else 0.0
    return SimilarityBreakdown(text_components, exact_components, len(present),
                               min(1.0, max(0.0, value)))


def cluster(records: Sequence[ScoredRecord], threshold: float = DEFAULT_THRESHOLD,
            backend=None) -> List[Cluster]:
    """Connected components of the graph joining pairs scoring above the threshold."""
    records = list(records)
    uf = UnionFind(len(records))
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            if similarity(records[i], records[j], backend).score > threshold:
                uf.union(i, j)
    groups: Dict[int, List[int]] = {}
    for i in range(len(records)):
        groups.setdefault(uf.find(i), []).append(i)
    return [Cluster(tuple(members), tuple(records[i] for i in members))
            for members in groups.values()]


def _rank_key(rec: ScoredRecord):
    return (-rec.confidence, rec.record.doc_id, rec.record.chunk_index)


def _vote(values: List[Tuple[Any, int]]) -> Any:
    """Modal value; ties go to the value held by the best-ranked member."""
    if not values:
        return None
    counts = Counter(value for value, _ in values)
    top = max(counts.values())
    for value, _ in sorted(values, key=lambda pair: pair[1]):
        if counts[value] == top:
            return value


def consolidate(group: Cluster, min_year: int = 1990, max_year: int = 2100) -> ScoredRecord:
    """Majority vote per attribute, then the validators re-run on the merged record."""
    if not group.records:
        raise DedupError("cannot consolidate an empty cluster")
    if len(group.records) == 1:
        return group.records[0]
    ranked = sorted(group.records, key=_rank_key)
    best = ranked[0]
    chosen = {}
    for name in VOTE_FIELDS:
        chosen[name] = _vote([(getattr(member.record, name), position)
                              for position, member in enumerate(ranked)
                              if getattr(member.record, name) is not None])
    contexts = list(dict.fromkeys(member.record.context for member in ranked))
    rejects = sorted({name for member in ranked for name in member.record.parse_rejects
                      if chosen.get(name) is None})
    merged = replace(best.record, **chosen, context=' '.join(contexts),
                     parse_rejects=tuple(rejects))
    return score(merged, merged.context, best.entity_match, best.boundary, min_year, max_year)


def _dedup_company(records: List[ScoredRecord], threshold: float, backend,
                   min_year: int, max_year: int):
    clusters = cluster(records, threshold, backend)
    consolidated = [consolidate(c, min_year, max_year) for c in clusters]
    best_by_metrics: Dict[Tuple, int] = {}
    for n, rec in enumerate(consolidated):
        key = rec.record.metrics()
        held = best_by_metrics.get(key)
        if held is None or rec.confidence > consolidated[held].confidence:
            best_by_metrics[key] = n
    kept = sorted(best_by_metrics.values())
    cluster_of = {}
    for n, group in enumerate(clusters):
        for member in group.members:
            cluster_of[member] = n
    return [consolidated[n] for n in kept], cluster_of, set(kept)


def deduplicate(records: Sequence[ScoredRecord], threshold: float = DEFAULT_THRESHOLD,
                backend=None, min_year: int = 1990, max_year: int = 2100) -> DedupResult:
    """
    Per company: cluster, consolidate, keep the highest confidence record per
    five-metric tuple. The output is ordered by confidence, highest first; the
    debug rows hold every input record with its cluster id.
    """
    backend = backend or BaselineEmbedder()
    by_company: Dict[str, List[int]] = {}
    for i, rec in enumerate(records):
        by_company.setdefault(rec.record.company_id, []).append(i)

    final: List[ScoredRecord] = []
    debug: List[Optional[Dict[str, Any]]] = [None] * len(records)
    for company_id, indices in by_company.items():
        members = [records[i] for i in indices]
        kept_records, cluster_of, kept_clusters = _dedup_company(
            members, threshold, backend, min_year, max_year)
        final.extend(kept_records)
        for local, i in enumerate(indices):
            n = cluster_of[local]
            debug[i] = {**records[i].to_dict(), 'cluster_id': f"{company_id}-{n}",
                        'kept': n in kept_clusters}
        logger.info(f"{company_id}: {len(members)} records -> {len(kept_records)} "
                    f"after dedup")
    final.sort(key=lambda rec: -rec.confidence)
    return DedupResult(final, [row for row in debug if row is not None])
