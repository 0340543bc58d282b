"""
Metrics Extraction
Runs dynamic k-shot prompts over enriched contexts, parses the model output into
raw commitments and attaches the entity-match and boundary answers.
"""

import json
import logging
import re
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from cai.corpus import DocumentMeta
from cai.errors import ExtractionError, OutputParseError
from cai.llm_client import (TASK_BOUNDARY, TASK_ENTITY, TASK_EXTRACT, LlmClient, LlmRequest,
                            call_llm)
from cai.patterns import CORPORATE_WIDE, NO_ANSWER, NON_CORPORATE_WIDE, RAW_FIELDS
from cai.prompting import (GoldenExample, PromptSpec, boundary_prompt, entity_prompt,
                           fit_prompt, select_examples)
from cai.relevance import EnrichedContext

logger = logging.getLogger(__name__)

_FENCE = re.compile(r'```(?:json|JSON)?')


def parse_output(text: str, provenance: Optional[Dict[str, Any]] = None) -> List[Dict[str, str]]:
    """
    Parse the first JSON array of objects (or lone object) in a model reply.

    Surrounding prose and code fences are ignored. Missing keys and nulls become
    NO_ANSWER; a lone object is wrapped into a one-element list.
    """
    cleaned = _FENCE.sub('', text)
    decoder = json.JSONDecoder()
    parsed = None
    for match in re.finditer(r'[\[{]', cleaned):
        try:
            candidate, _ = decoder.raw_decode(cleaned, match.start())
        except json.JSONDecodeError:
            continue
        if isinstance(candidate, dict):
            candidate = [candidate]
        # bracketed prose such as a citation "[1]" is skipped
        if isinstance(candidate, list) and all(isinstance(item, dict) for item in candidate):
            parsed = candidate
            break
    if parsed is None:
        raise OutputParseError(text, provenance)
    records = []
    for item in parsed:
        records.append({name: NO_ANSWER if item.get(name) is None else str(item[name])
                        for name in RAW_FIELDS})
    return records


def classify_entity_match(entity_name: str, company_name: str, backend,
                          provenance: Optional[Dict[str, Any]] = None) -> bool:
    """True when the extracted entity is the reporting company. No entity counts as a match."""
    if not entity_name or entity_name == NO_ANSWER:
        return True
    request = LlmRequest(entity_prompt(entity_name, company_name), task=TASK_ENTITY)
    answer = call_llm(request, backend, provenance).text.strip().lower()
    if answer.startswith(('yes', 'true')):
        return True
    if answer.startswith(('no', 'false')):
        return False
    raise ExtractionError(f"unrecognized entity-match answer {answer[:40]!r}", provenance)


def classify_boundary(target_wording: str, sub_context: str, backend,
                      provenance: Optional[Dict[str, Any]] = None) -> str:
    wording = '' if target_wording == NO_ANSWER else target_wording
    sentence = '' if sub_context == NO_ANSWER else sub_context
    if not wording and not sentence:
        return CORPORATE_WIDE
    request = LlmRequest(boundary_prompt(wording, sentence), task=TASK_BOUNDARY)
    answer = call_llm(request, backend, provenance).text.strip().lower()
    if 'non_corporate' in answer or 'non-corporate' in answer:
        return NON_CORPORATE_WIDE
    if 'corporate' in answer:
        return CORPORATE_WIDE
    raise ExtractionError(f"unrecognized boundary answer {answer[:40]!r}", provenance)


@dataclass(frozen=True)
class ExtractedCommitment:
    """One parsed model record plus where it came from and the auxiliary answers."""
    raw: Dict[str, str]
    meta: DocumentMeta
    chunk_index: int
    context: str
    entity_match: bool = True
    boundary: str = CORPORATE_WIDE

    @property
    def doc_id(self) -> str:
        return self.meta.doc_id

    def to_dict(self) -> Dict[str, Any]:
        return {
            **self.meta.to_dict(),
            'chunk_index': self.chunk_index,
            'raw': self.raw,
            'entity_match': self.entity_match,
            'boundary': self.boundary,
            'context': self.context,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExtractedCommitment':
        return cls(
            raw={name: str(data['raw'].get(name, NO_ANSWER)) for name in RAW_FIELDS},
            meta=DocumentMeta.from_dict(data),
            chunk_index=int(data['chunk_index']),
            context=data['context'],
            entity_match=bool(data.get('entity_match', True)),
            boundary=data.get('boundary', CORPORATE_WIDE),
        )


@dataclass
class Extractor:
    """
    Extraction stage for one run.

    The example store and embedder are shared read-only; parse rejects are
    collected under a lock so contexts can be processed from several threads.
    """
    client: LlmClient
    store: Sequence[GoldenExample]
    embedder: Any
    k_shots: int = 6
    max_input_tokens: int = 8192
    max_output_tokens: int = 1024
    temperature: float = 0.0
    top_p: float = 0.0
    top_k: int = 1
    seed: Optional[int] = None
    rejects: List[Dict[str, Any]] = field(default_factory=list)

    def __post_init__(self):
        self._lock = threading.Lock()

    @classmethod
    def from_config(cls, config, client: LlmClient, store: Sequence[GoldenExample],
                    embedder) -> 'Extractor':
        return cls(client=client, store=store, embedder=embedder,
                   k_shots=config['prompt.k_shots'],
                   max_input_tokens=config['llm.max_input_tokens'],
                   max_output_tokens=config['llm.max_output_tokens'],
                   temperature=config['llm.temperature'], top_p=config['llm.top_p'],
                   top_k=config['llm.top_k'], seed=config['llm.seed'])

    def request(self, prompt: str, leading_fragment: bool = False) -> LlmRequest:
        return LlmRequest(prompt, temperature=self.temperature, top_p=self.top_p,
                          top_k=self.top_k, max_output_tokens=self.max_output_tokens,
                          seed=self.seed, task=TASK_EXTRACT, leading_fragment=leading_fragment)

    def extract_text(self, text: str, k: Optional[int] = None,
                     store: Optional[Sequence[GoldenExample]] = None,
                     provenance: Optional[Dict[str, Any]] = None,
                     leading_fragment: bool = False) -> List[Dict[str, str]]:
        """Prompt with the k most similar examples and parse the reply."""
        store = self.store if store is None else store
        k = self.k_shots if k is None else k
        examples = select_examples(text, store, k, self.embedder)
        prompt, _ = fit_prompt(PromptSpec(text, tuple(examples)), self.max_input_tokens)
        reply = call_llm(self.request(prompt, leading_fragment), self.client, provenance)
        return parse_output(reply.text, provenance)

    def extract_context(self, context: EnrichedContext, meta: DocumentMeta,
                        rejects: Optional[List[Dict[str, Any]]] = None) -> List[ExtractedCommitment]:
        """Records found in one enriched context; unparseable replies go to rejects."""
        provenance = {'doc_id': context.doc_id, 'chunk': context.center_index}
        try:
            raws = self.extract_text(context.text, provenance=provenance,
                                     leading_fragment=context.starts_mid_document)
        except OutputParseError as e:
            logger.warning(f"Rejected unparseable output for {context.doc_id}#"
                           f"{context.center_index}")
            row = {**provenance, 'error': e.message, 'raw_text': e.raw_text}
            if rejects is not None:
                rejects.append(row)
            else:
                with self._lock:
                    self.rejects.append(row)
            return []
        results = []
        for raw in raws:
            entity_match = classify_entity_match(raw['entity_name'], meta.company_name,
                                                 self.client, provenance)
            boundary = classify_boundary(raw['target_wording'], raw['sub_context'],
                                         self.client, provenance)
            results.append(ExtractedCommitment(raw, meta, context.center_index, context.text,
                                               entity_match, boundary))
        return results
