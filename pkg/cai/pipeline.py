"""
Commitment Extraction Pipeline
Coordinates ingestion, relevance search, extraction, validation and dedup, and
persists every stage's output so each stage can be re-run from files.

Artifacts (under paths.output):
- documents.jsonl, cache/<doc_id>.jsonl   ingest
- relevance.jsonl, contexts.jsonl        classify + enrich
- extracted.jsonl, rejects.jsonl         extract
- scored.jsonl                           validate
- records.jsonl, debug.jsonl             dedup
- failures.jsonl                         documents that could not be processed
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import requests

from cai.config import PipelineConfig
from cai.corpus import (ChunkCache, Chunk, Document, DocumentMeta, chunk_text, converter_for,
                        discover_documents, load_document)
from cai.dedup import deduplicate
from cai.embedding import BaselineEmbedder, CachedEmbedder, RemoteEmbedder
from cai.extract import ExtractedCommitment, Extractor
from cai.llm_client import LlmClient
from cai.prompting import load_example_store
from cai.relevance import (RELEVANT, EnrichedContext, LexicalRelevanceBackend,
                           RelevanceResult, RemoteRelevanceBackend, classify_chunks, enrich)
from cai.validate import NON_EMISSIONS, ScoredRecord, validate_extracted

logger = logging.getLogger(__name__)

DOCUMENTS_FILE = 'documents.jsonl'
RELEVANCE_FILE = 'relevance.jsonl'
CONTEXTS_FILE = 'contexts.jsonl'
EXTRACTED_FILE = 'extracted.jsonl'
SCORED_FILE = 'scored.jsonl'
RECORDS_FILE = 'records.jsonl'
FAILURES_FILE = 'failures.jsonl'


def write_jsonl(path: Path, rows: Iterable[Dict[str, Any]]) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open('w', encoding='utf-8', newline='\n') as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + '\n')
            count += 1
    return count


def read_jsonl(path: Path) -> List[Dict[str, Any]]:
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text(encoding='utf-8').splitlines()
            if line.strip()]


@dataclass
class DocumentOutcome:
    meta: DocumentMeta
    chunks: List[Chunk] = field(default_factory=list)
    relevance: List[RelevanceResult] = field(default_factory=list)
    contexts: List[EnrichedContext] = field(default_factory=list)
    extracted: List[ExtractedCommitment] = field(default_factory=list)
    rejects: List[Dict[str, Any]] = field(default_factory=list)
    scored: List[ScoredRecord] = field(default_factory=list)
    failure: Optional[Dict[str, Any]] = None


@dataclass
class RunSummary:
    documents: int
    failures: List[Dict[str, Any]]
    scored: List[ScoredRecord]
    records: List[ScoredRecord]

    def describe(self) -> str:
        return (f"{self.documents} documents, {len(self.failures)} failed, "
                f"{len(self.scored)} scored records, {len(self.records)} final records")


def failure_row(meta: DocumentMeta, error: Exception) -> Dict[str, Any]:
    stage = getattr(error, 'stage', 'pipeline')
    message = getattr(error, 'message', str(error))
    return {'doc_id': meta.doc_id, 'source_path': meta.source_path, 'stage': stage,
            'error': f"[{stage}] {message}"}


class CommitmentPipeline:
    """
    End-to-end extraction run over a set of documents.

    Backends are built from the config once; the chunk cache, example store and
    embedder are read-only while documents are processed in parallel.
    """

    def __init__(self, config: PipelineConfig, session: Optional[requests.Session] = None):
        logger.info("=== Initializing commitment extraction pipeline ===")
        self.config = config
        self.session = session
        self.output_dir = Path(config['paths.output'])

        self.relevance_backend = None
        self.embedder = None
        self.client = None
        self._extractor: Optional[Extractor] = None

        self._initialize_components()

    def _initialize_components(self):
        cfg = self.config
        if cfg['relevance.backend'] == 'remote':
            secrets = cfg.secrets('relevance')
            self.relevance_backend = RemoteRelevanceBackend(
                secrets['url'], secrets['token'], threshold=cfg['relevance.threshold'],
                batch_size=cfg['relevance.batch_size'],
                max_in_flight=cfg['relevance.max_in_flight'],
                timeout=cfg['llm.timeout_seconds'], session=self.session)
        else:
            self.relevance_backend = LexicalRelevanceBackend(
                threshold=cfg['relevance.lexical_threshold'])

        if cfg['embedding.backend'] == 'remote':
            secrets = cfg.secrets('embedding')
            backend = RemoteEmbedder(secrets['url'], secrets['token'],
                                     dimension=cfg['embedding.dimension'],
                                     max_in_flight=cfg['embedding.max_in_flight'],
                                     timeout=cfg['llm.timeout_seconds'], session=self.session)
        else:
            backend = BaselineEmbedder(cfg['embedding.dimension'])
        self.embedder = CachedEmbedder(backend)

        self.client = LlmClient.from_config(cfg, session=self.session)
        logger.info(f"Backends: relevance={self.relevance_backend.name}, "
                    f"embedding={backend.name}, llm={self.client.backend.name}")

    @property
    def extractor(self) -> Extractor:
        if self._extractor is None:
            store = load_example_store(self.config['paths.examples'], self.embedder)
            self._extractor = Extractor.from_config(self.config, self.client, store,
                                                    self.embedder)
        return self._extractor

    def path(self, name: str) -> Path:
        return self.output_dir / name

    # per-document work

    def load(self, source: Path, meta: DocumentMeta) -> Document:
        converter = converter_for(source, self.config['corpus.converter_command'])
        return load_document(source, meta, converter, self.config['corpus.strip_carriage'])

    def process_document(self, source: Path, meta: DocumentMeta) -> DocumentOutcome:
        """Run one document from raw file to scored records; failures are captured."""
        outcome = DocumentOutcome(meta)
        try:
            doc = self.load(source, meta)
            outcome.chunks = chunk_text(doc, self.config['chunk.window_words'],
                                        self.config['chunk.overlap_words'])
            cache = ChunkCache()
            cache.add(doc.doc_id, outcome.chunks)
            outcome.relevance = classify_chunks(outcome.chunks, self.relevance_backend)
            outcome.contexts = [enrich(r, cache, self.config['relevance.merge_overlap'])
                                for r in outcome.relevance if r.label == RELEVANT]
            for context in outcome.contexts:
                outcome.extracted.extend(
                    self.extractor.extract_context(context, meta, outcome.rejects))
            outcome.scored = self._validate(outcome.extracted)
        except Exception as e:
            outcome.failure = failure_row(meta, e)
            logger.error(f"Document {meta.doc_id} failed: {outcome.failure['error']}")
            return outcome
        logger.info(f"{meta.doc_id}: {len(outcome.chunks)} chunks, {len(outcome.contexts)} "
                    f"relevant, {len(outcome.scored)} records")
        return outcome

    def _validate(self, extracted: List[ExtractedCommitment]) -> List[ScoredRecord]:
        return validate_extracted(extracted, fy_pivot=self.config['validate.fy_pivot'],
                                  min_year=self.config['validate.min_year'],
                                  max_year=self.config['validate.max_year'])

    # end-to-end

    def run(self, input_path, emissions_only: bool = False) -> RunSummary:
        entries = discover_documents(input_path, self.config['corpus.default_year'])
        if entries:
            # a broken example store aborts the run instead of failing every document
            _ = self.extractor
        logger.info(f"Processing {len(entries)} documents with "
                    f"{self.config['pipeline.workers']} workers")
        with ThreadPoolExecutor(max_workers=self.config['pipeline.workers']) as pool:
            outcomes = list(pool.map(lambda entry: self.process_document(*entry), entries))

        ok = [o for o in outcomes if o.failure is None]
        failures = [o.failure for o in outcomes if o.failure is not None]

        write_jsonl(self.path(DOCUMENTS_FILE), (o.meta.to_dict() for o in ok))
        cache = ChunkCache()
        for o in ok:
            cache.add(o.meta.doc_id, o.chunks)
        cache.save(self.config.output_path('paths.cache'))
        write_jsonl(self.path(RELEVANCE_FILE), (r.to_dict() for o in ok for r in o.relevance))
        write_jsonl(self.path(CONTEXTS_FILE), (c.to_dict() for o in ok for c in o.contexts))
        write_jsonl(self.path(EXTRACTED_FILE), (e.to_dict() for o in ok for e in o.extracted))
        write_jsonl(self.config.output_path('paths.rejects'),
                    (r for o in ok for r in o.rejects))
        scored = [s for o in ok for s in o.scored]
        write_jsonl(self.path(SCORED_FILE), (s.to_stage_dict() for s in scored))
        write_jsonl(self.path(FAILURES_FILE), failures)

        records = self._dedup(scored, emissions_only)
        summary = RunSummary(len(entries), failures, scored, records)
        logger.info(f"Run complete: {summary.describe()}")
        return summary

    # stage re-runs from files

    def ingest(self, input_path) -> List[DocumentMeta]:
        entries = discover_documents(input_path, self.config['corpus.default_year'])
        cache = ChunkCache()
        metas, failures = [], []
        for source, meta in entries:
            try:
                doc = self.load(source, meta)
            except Exception as e:
                failures.append(failure_row(meta, e))
                logger.error(f"Document {meta.doc_id} failed: {failures[-1]['error']}")
                continue
            cache.add(doc.doc_id, chunk_text(doc, self.config['chunk.window_words'],
                                             self.config['chunk.overlap_words']))
            metas.append(meta)
        write_jsonl(self.path(DOCUMENTS_FILE), (m.to_dict() for m in metas))
        cache.save(self.config.output_path('paths.cache'))
        write_jsonl(self.path(FAILURES_FILE), failures)
        logger.info(f"Ingested {len(metas)} documents ({len(failures)} failed)")
        return metas

    def documents(self) -> List[DocumentMeta]:
        return [DocumentMeta.from_dict(row) for row in read_jsonl(self.path(DOCUMENTS_FILE))]

    def classify(self) -> List[EnrichedContext]:
        metas = self.documents()
        cache = ChunkCache.load(self.config.output_path('paths.cache'),
                                [m.doc_id for m in metas])
        results, contexts = [], []
        for meta in metas:
            doc_results = classify_chunks(cache.chunks(meta.doc_id), self.relevance_backend)
            results.extend(doc_results)
            contexts.extend(enrich(r, cache, self.config['relevance.merge_overlap'])
                            for r in doc_results if r.label == RELEVANT)
        write_jsonl(self.path(RELEVANCE_FILE), (r.to_dict() for r in results))
        write_jsonl(self.path(CONTEXTS_FILE), (c.to_dict() for c in contexts))
        logger.info(f"Classified {len(results)} chunks, {len(contexts)} relevant")
        return contexts

    def extract(self) -> List[ExtractedCommitment]:
        metas = {m.doc_id: m for m in self.documents()}
        cache = ChunkCache.load(self.config.output_path('paths.cache'), list(metas))
        extracted, rejects = [], []
        for row in read_jsonl(self.path(CONTEXTS_FILE)):
            center = cache.get(row['doc_id'], int(row['center_index']))
            context = EnrichedContext(center, row['text'])
            extracted.extend(self.extractor.extract_context(context, metas[row['doc_id']],
                                                            rejects))
        write_jsonl(self.path(EXTRACTED_FILE), (e.to_dict() for e in extracted))
        write_jsonl(self.config.output_path('paths.rejects'), rejects)
        logger.info(f"Extracted {len(extracted)} commitments ({len(rejects)} rejected replies)")
        return extracted

    def validate(self) -> List[ScoredRecord]:
        extracted = [ExtractedCommitment.from_dict(row)
                     for row in read_jsonl(self.path(EXTRACTED_FILE))]
        scored = self._validate(extracted)
        write_jsonl(self.path(SCORED_FILE), (s.to_stage_dict() for s in scored))
        logger.info(f"Scored {len(scored)} records")
        return scored

    def dedup(self, emissions_only: bool = False) -> List[ScoredRecord]:
        scored = [ScoredRecord.from_dict(row) for row in read_jsonl(self.path(SCORED_FILE))]
        return self._dedup(scored, emissions_only)

    def _dedup(self, scored: List[ScoredRecord], emissions_only: bool) -> List[ScoredRecord]:
        result = deduplicate(scored, self.config['dedup.threshold'], self.embedder,
                             self.config['validate.min_year'], self.config['validate.max_year'])
        records = result.final
        if emissions_only:
            records = [r for r in records if r.emissions_flag != NON_EMISSIONS]
        write_jsonl(self.path(RECORDS_FILE), (r.to_dict() for r in records))
        write_jsonl(self.config.output_path('paths.debug'), result.debug)
        logger.info(f"Dedup kept {len(records)} of {len(scored)} records")
        return records


def read_documents(input_path, config: PipelineConfig) -> List[Document]:
    """Load and clean every document under an input path (used by the sweeps)."""
    docs = []
    for source, meta in discover_documents(input_path, config['corpus.default_year']):
        docs.append(load_document(source, meta,
                                  converter_for(source, config['corpus.converter_command'])))
    return docs
