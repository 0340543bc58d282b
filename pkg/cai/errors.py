"""
Pipeline exceptions

Every error carries the stage it came from so the orchestrator can write
stage-tagged failure rows and exit messages.
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple


class CAIError(Exception):
    stage = 'pipeline'

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def tagged(self) -> str:
        return f"[{self.stage}] {self.message}"


class ConfigError(CAIError):
    stage = 'config'


class IngestionError(CAIError):
    stage = 'ingest'

    def __init__(self, path: str, cause: str):
        super().__init__(f"cannot ingest {path}: {cause}")
        self.path = str(path)
        self.cause = cause


class ChunkLookupError(CAIError, LookupError):
    stage = 'cache'

    def __init__(self, doc_id: str, index: int):
        super().__init__(f"no chunk {index} cached for document {doc_id}")
        self.doc_id = doc_id
        self.index = index


class BackendError(CAIError):
    """Relevance or embedding backend failure."""
    stage = 'classify'

    def __init__(self, backend: str, message: str,
                 chunk_refs: Optional[Sequence[Tuple[str, int]]] = None):
        super().__init__(f"{backend} backend: {message}")
        self.backend = backend
        self.chunk_refs: List[Tuple[str, int]] = list(chunk_refs or [])


class ExtractionError(CAIError):
    stage = 'extract'

    def __init__(self, message: str, provenance: Optional[Dict[str, Any]] = None):
        if provenance:
            where = ', '.join(f"{k}={v}" for k, v in provenance.items())
            message = f"{message} ({where})"
        super().__init__(message)
        self.provenance = dict(provenance or {})


class OutputParseError(ExtractionError):
    def __init__(self, raw_text: str, provenance: Optional[Dict[str, Any]] = None):
        super().__init__("no parseable JSON in model output", provenance)
        self.raw_text = raw_text


class ContractError(CAIError, ValueError):
    stage = 'contract'


class DedupError(CAIError):
    stage = 'dedup'


class SweepAborted(CAIError):
    stage = 'bench'

    def __init__(self, message: str, partial: List[Dict[str, Any]]):
        super().__init__(message)
        self.partial = partial
