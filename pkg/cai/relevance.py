"""
Relevance Search
Labels chunks as relevant/irrelevant to carbon-reduction commitments and pads
relevant ones with their neighbours (parent document retrieval).

Backends:
- lexical: deterministic vocabulary score, no model needed
- remote:  any served classifier speaking {"contexts": [...]} -> {"scores": [...]}
"""

import logging
import re
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import requests

from cai.corpus import Chunk, ChunkCache, neighbors
from cai.errors import BackendError, ConfigError, ContractError

logger = logging.getLogger(__name__)

RELEVANT, IRRELEVANT = 'relevant', 'irrelevant'

EMISSION_TERMS = r'\bemissions?\b|\bcarbon\b|\bghg\b|\bco2\b|\bnet[- ]zero\b|\bscopes?\b'
COMMITMENT_TERMS = (r'\b(?:reduc(?:e|es|ed|ing|tions?)|target(?:s|ed|ing)?'
                    r'|commit(?:s|ted|ting|ments?)?|aims?|aimed|aiming'
                    r'|goals?|achiev(?:e|es|ed|ing|ements?))\b')
QUANTITATIVE = r'\d(?:\.\d+)?\s*(?:%|percent\b|per cent\b)|\b\d{4}\b'

LEXICAL_WEIGHTS = {'emission': 0.4, 'commitment': 0.3, 'quantitative': 0.3}


@dataclass(frozen=True)
class RelevanceResult:
    doc_id: str
    index: int
    score: float
    label: str

    @property
    def chunk_ref(self):
        return (self.doc_id, self.index)

    def to_dict(self) -> Dict:
        return {'doc_id': self.doc_id, 'index': self.index,
                'score': self.score, 'label': self.label}

    @classmethod
    def from_dict(cls, data: Dict) -> 'RelevanceResult':
        return cls(data['doc_id'], int(data['index']), float(data['score']), data['label'])


@dataclass(frozen=True)
class EnrichedContext:
    center: Chunk
    text: str

    @property
    def doc_id(self) -> str:
        return self.center.doc_id

    @property
    def center_index(self) -> int:
        return self.center.index

    @property
    def starts_mid_document(self) -> bool:
        # the text opens with the previous chunk, which is chunk 0 for centers 0 and 1
        return self.center.index > 1

    def to_dict(self) -> Dict:
        return {'doc_id': self.doc_id, 'center_index': self.center_index, 'text': self.text}


class LexicalRelevanceBackend:
    name = 'lexical'

    def __init__(self, threshold: float = 0.7, emission_terms: str = EMISSION_TERMS,
                 commitment_terms: str = COMMITMENT_TERMS, quantitative: str = QUANTITATIVE,
                 weights: Optional[Dict[str, float]] = None):
        self.threshold = threshold
        self.patterns = {
            'emission': re.compile(emission_terms, re.IGNORECASE),
            'commitment': re.compile(commitment_terms, re.IGNORECASE),
            'quantitative': re.compile(quantitative, re.IGNORECASE),
        }
        self.weights = dict(weights or LEXICAL_WEIGHTS)

    def score(self, texts: Sequence[str]) -> List[float]:
        return [lexical_score(t, self.patterns, self.weights) for t in texts]


def lexical_score(text: str, patterns: Optional[Dict[str, re.Pattern]] = None,
                  weights: Optional[Dict[str, float]] = None) -> float:
    """
    Weighted presence of emission vocabulary (0.4), commitment vocabulary (0.3)
    and a quantitative pattern (0.3).
    """
    if patterns is None:
        patterns = _DEFAULT_PATTERNS
    weights = weights or LEXICAL_WEIGHTS
    score = sum(weights[name] for name, pattern in patterns.items() if pattern.search(text))
    # keeps 0.4 + 0.3 + 0.3 at exactly 1.0
    return min(1.0, round(score, 9))


_DEFAULT_PATTERNS = LexicalRelevanceBackend().patterns


class RemoteRelevanceBackend:
    """
    Client for a served classifier.

    POST {"contexts": [...]} with a bearer token, expects {"scores": [...]} in
    the same order and length. Batches share one in-flight limit across threads.
    """
    name = 'remote'

    def __init__(self, url: str, token: Optional[str] = None, threshold: float = 0.5,
                 batch_size: int = 32, max_in_flight: int = 4, timeout: int = 60,
                 session: Optional[requests.Session] = None):
        if not url:
            raise ConfigError("CAI_RELEVANCE_URL is not set for the remote relevance backend")
        self.url = url
        self.token = token
        self.threshold = threshold
        self.batch_size = batch_size
        self.timeout = timeout
        self.session = session or requests.Session()
        self._in_flight = threading.BoundedSemaphore(max_in_flight)

    def score(self, texts: Sequence[str]) -> List[float]:
        scores: List[float] = []
        for start in range(0, len(texts), self.batch_size):
            scores.extend(self._score_batch(list(texts[start:start + self.batch_size])))
        return scores

    def _score_batch(self, batch: List[str]) -> List[float]:
        headers = {'Content-Type': 'application/json'}
        if self.token:
            headers['Authorization'] = f'Bearer {self.token}'
        with self._in_flight:
            try:
                response = self.session.post(self.url, json={'contexts': batch},
                                             headers=headers, timeout=self.timeout)
            except requests.RequestException as e:
                raise BackendError(self.name, f"request failed: {e}") from e
        if response.status_code != 200:
            raise BackendError(self.name, f"HTTP {response.status_code}: {response.text[:200]}")
        try:
            scores = [float(s) for s in response.json()['scores']]
        except (ValueError, KeyError, TypeError) as e:
            raise BackendError(self.name, f"malformed response: {e}") from e
        if len(scores) != len(batch):
            raise BackendError(self.name, f"expected {len(batch)} scores, got {len(scores)}")
        if any(not 0.0 <= s <= 1.0 for s in scores):
            raise BackendError(self.name, "scores outside [0, 1]")
        return scores


def classify_chunks(chunks: Sequence[Chunk], backend) -> List[RelevanceResult]:
    """One result per chunk, input order preserved. Empty chunks score 0."""
    chunks = list(chunks)
    texts = [c.text for c in chunks]
    to_score = [i for i, t in enumerate(texts) if t.strip()]
    try:
        scored = backend.score([texts[i] for i in to_score]) if to_score else []
    except BackendError as e:
        e.chunk_refs = [(c.doc_id, c.index) for c in chunks]
        raise
    scores = [0.0] * len(chunks)
    for i, s in zip(to_score, scored):
        scores[i] = s
    return [RelevanceResult(c.doc_id, c.index, s,
                            RELEVANT if s >= backend.threshold and s > 0 else IRRELEVANT)
            for c, s in zip(chunks, scores)]


def enrich(result: RelevanceResult, cache: ChunkCache,
           merge_overlap: bool = False) -> EnrichedContext:
    """
    Pad a relevant chunk with its previous and next chunk.

    By default the chunk texts are joined verbatim, so overlapping words appear
    twice. With merge_overlap the neighbours contribute only the words the center
    does not already hold, and the text is a contiguous span of the document.
    """
    if result.label != RELEVANT:
        raise ContractError(f"chunk {result.chunk_ref} is not relevant; it cannot be enriched")
    center = cache.get(result.doc_id, result.index)
    previous, following = neighbors(cache, result.doc_id, result.index)
    if not merge_overlap:
        parts = [c.text for c in (previous, center, following) if c is not None]
        return EnrichedContext(center, ' '.join(parts))

    words: List[str] = []
    if previous is not None:
        words.extend(previous.words[:center.start_word - previous.start_word])
    words.extend(center.words)
    if following is not None:
        center_end = center.start_word + len(center.words)
        words.extend(following.words[center_end - following.start_word:])
    return EnrichedContext(center, ' '.join(words))
