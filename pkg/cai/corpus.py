"""
Corpus Ingestion and Chunking
Loads disclosure documents, cleans their text and cuts it into overlapping
word windows that are cached with their positional neighbours.

Features:
- Plain text passthrough, external-command conversion for PDFs
- Unicode quote/dash normalization and whitespace collapse
- Sliding-window chunking (stride = window - overlap)
- JSON-lines chunk cache, one file per document
"""

import json
import logging
import re
import shlex
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from cai.errors import ChunkLookupError, ConfigError, IngestionError

logger = logging.getLogger(__name__)

REPORT_TYPES = ('annual', 'sustainability')
MIN_PUBLICATION_YEAR, MAX_PUBLICATION_YEAR = 1990, 2100

_CHAR_MAP = str.maketrans({
    '\u201c': '"', '\u201d': '"', '\u201e': '"', '\u201f': '"', '\u2033': '"',
    '\u00ab': '"', '\u00bb': '"',
    '\u2018': "'", '\u2019': "'", '\u201a': "'", '\u201b': "'", '\u2032': "'",
    '\u2010': '-', '\u2011': '-', '\u2012': '-', '\u2013': '-', '\u2014': '-',
    '\u2015': '-', '\u2212': '-',
    '\u00a0': ' ', '\u2007': ' ', '\u202f': ' ', '\ufeff': '',
})
_WHITESPACE = re.compile(r'\s+')
_WHITESPACE_KEEP_CR = re.compile(r'[^\S\r]+')
_FILENAME_META = re.compile(
    r'^(?P<company_id>[^_]+)_(?P<report_type>annual|sustainability)_(?P<year>\d{4})$')


@dataclass(frozen=True)
class DocumentMeta:
    company_id: str
    company_name: str
    report_type: str
    publication_year: int
    source_path: str = ''

    def __post_init__(self):
        if not self.company_id:
            raise IngestionError(self.source_path, "company_id must be non-empty")
        if self.report_type not in REPORT_TYPES:
            raise IngestionError(self.source_path, f"unknown report type {self.report_type!r}")
        if not MIN_PUBLICATION_YEAR <= int(self.publication_year) <= MAX_PUBLICATION_YEAR:
            raise IngestionError(
                self.source_path, f"publication year {self.publication_year} out of range")

    @property
    def doc_id(self) -> str:
        if self.source_path:
            return Path(self.source_path).stem
        return f"{self.company_id}_{self.report_type}_{self.publication_year}"

    def to_dict(self) -> Dict:
        return {
            'doc_id': self.doc_id,
            'company_id': self.company_id,
            'company_name': self.company_name,
            'report_type': self.report_type,
            'publication_year': self.publication_year,
            'source_path': self.source_path,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'DocumentMeta':
        return cls(
            company_id=str(data['company_id']),
            company_name=str(data.get('company_name') or data['company_id']),
            report_type=str(data.get('report_type', 'sustainability')),
            publication_year=int(data['publication_year']),
            source_path=str(data.get('source_path', '')),
        )


@dataclass(frozen=True)
class Document:
    meta: DocumentMeta
    text: str

    @property
    def doc_id(self) -> str:
        return self.meta.doc_id


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    index: int
    start_word: int
    words: Tuple[str, ...] = field(repr=False)

    @property
    def text(self) -> str:
        return ' '.join(self.words)

    def to_dict(self) -> Dict:
        return {'doc_id': self.doc_id, 'index': self.index,
                'start_word': self.start_word, 'text': self.text}

    @classmethod
    def from_dict(cls, data: Dict) -> 'Chunk':
        return cls(data['doc_id'], int(data['index']), int(data['start_word']),
                   tuple(data['text'].split()))


def clean_text(raw: str, strip_carriage: bool = True) -> str:
    """
    Map Unicode quotes/dashes to ASCII and collapse every whitespace run to one space.
    With strip_carriage off, carriage returns survive and only other whitespace collapses.
    """
    whitespace = _WHITESPACE if strip_carriage else _WHITESPACE_KEEP_CR
    return whitespace.sub(' ', raw.translate(_CHAR_MAP)).strip()


def chunk_text(doc: Document, window_words: int = 80, overlap_words: int = 20) -> List[Chunk]:
    """
    Cut a document into word windows starting at 0, stride, 2*stride, ...

    The final window may be shorter; it is kept as-is so offsets stay regular.
    """
    if not (isinstance(window_words, int) and isinstance(overlap_words, int)
            and 0 < overlap_words < window_words):
        raise ConfigError(
            f"chunking needs 0 < overlap < window (got overlap={overlap_words}, "
            f"window={window_words})")
    stride = window_words - overlap_words
    words = doc.text.split()
    chunks: List[Chunk] = []
    start = 0
    while start < len(words):
        chunks.append(Chunk(doc.doc_id, len(chunks), start,
                            tuple(words[start:start + window_words])))
        if start + window_words >= len(words):
            break
        start += stride
    return chunks


class PlainTextConverter:
    name = 'plain'

    def convert(self, path: Path) -> str:
        return path.read_text(encoding='utf-8', errors='replace')


class CommandConverter:
    """
    Runs an external converter, e.g. ``pdftotext -layout {input} -``.
    The command must write the extracted text to stdout.
    """
    name = 'command'

    def __init__(self, command: str, timeout: int = 300):
        if '{input}' not in command:
            raise ConfigError("corpus.converter_command must contain an {input} placeholder")
        self.command = command
        self.timeout = timeout

    def convert(self, path: Path) -> str:
        args = [part.replace('{input}', str(path)) for part in shlex.split(self.command)]
        try:
            result = subprocess.run(args, capture_output=True, timeout=self.timeout, check=False)
        except (OSError, subprocess.TimeoutExpired) as e:
            raise IngestionError(str(path), f"converter failed to run: {e}") from e
        if result.returncode != 0:
            stderr = result.stderr.decode('utf-8', errors='replace').strip()
            raise IngestionError(str(path), f"converter exit status {result.returncode}: {stderr}")
        text = result.stdout.decode('utf-8', errors='replace')
        if not text.strip():
            raise IngestionError(str(path), "converter produced empty output")
        return text


def converter_for(path: Path, converter_command: Optional[str] = None):
    if path.suffix.lower() in ('.txt', '.text', '.md', ''):
        return PlainTextConverter()
    if not converter_command:
        raise IngestionError(
            str(path), f"no converter configured for {path.suffix} files "
                       "(set corpus.converter_command)")
    return CommandConverter(converter_command)


def load_document(path, meta: DocumentMeta, converter=None,
                  strip_carriage: bool = True) -> Document:
    path = Path(path)
    converter = converter or converter_for(path)
    try:
        raw = converter.convert(path)
    except IngestionError:
        raise
    except OSError as e:
        raise IngestionError(str(path), str(e)) from e
    text = clean_text(raw, strip_carriage)
    logger.debug(f"Loaded {path.name}: {len(text.split())} words via {converter.name}")
    return Document(meta=meta, text=text)


def discover_documents(input_path, default_year: int = 2023) -> List[Tuple[Path, DocumentMeta]]:
    """
    Resolve an input file or directory into (path, meta) pairs.

    A directory is read through its manifest.jsonl when present, otherwise every
    .txt/.pdf file in it is taken with metadata parsed from the file name.
    """
    input_path = Path(input_path)
    if not input_path.exists():
        raise IngestionError(str(input_path), "input path does not exist")
    if input_path.is_file():
        return [(input_path, _meta_from_filename(input_path, default_year))]

    manifest = input_path / 'manifest.jsonl'
    if manifest.exists():
        entries = []
        for line_no, line in enumerate(manifest.read_text(encoding='utf-8').splitlines(), 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                path = input_path / data['source_path']
                meta = DocumentMeta.from_dict({**data, 'source_path': str(path)})
            except (KeyError, ValueError, TypeError) as e:
                raise IngestionError(str(manifest), f"bad manifest line {line_no}: {e}") from e
            entries.append((path, meta))
        return entries

    files = sorted(p for p in input_path.iterdir()
                   if p.is_file() and p.suffix.lower() in ('.txt', '.pdf'))
    return [(p, _meta_from_filename(p, default_year)) for p in files]


def _meta_from_filename(path: Path, default_year: int) -> DocumentMeta:
    match = _FILENAME_META.match(path.stem)
    if match:
        return DocumentMeta(match['company_id'], match['company_id'], match['report_type'],
                            int(match['year']), str(path))
    return DocumentMeta(path.stem, path.stem, 'sustainability', default_year, str(path))


class ChunkCache:
    """Write-once-per-document, read-many store of chunk lists."""

    def __init__(self):
        self._chunks: Dict[str, List[Chunk]] = {}
        self._lock = threading.Lock()

    def add(self, doc_id: str, chunks: Iterable[Chunk]):
        chunks = list(chunks)
        with self._lock:
            if doc_id in self._chunks:
                raise ConfigError(f"chunk cache already holds document {doc_id}")
            self._chunks[doc_id] = chunks

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._chunks

    def doc_ids(self) -> List[str]:
        return list(self._chunks)

    def chunks(self, doc_id: str) -> List[Chunk]:
        return list(self._chunks.get(doc_id, []))

    def get(self, doc_id: str, index: int) -> Chunk:
        chunks = self._chunks.get(doc_id)
        if chunks is None or not 0 <= index < len(chunks):
            raise ChunkLookupError(doc_id, index)
        return chunks[index]

    def save(self, directory) -> List[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for doc_id, chunks in self._chunks.items():
            path = directory / f"{doc_id}.jsonl"
            with path.open('w', encoding='utf-8', newline='\n') as f:
                for chunk in chunks:
                    f.write(json.dumps(chunk.to_dict(), ensure_ascii=False) + '\n')
            written.append(path)
        return written

    @classmethod
    def load(cls, directory, doc_ids: Optional[Iterable[str]] = None) -> 'ChunkCache':
        directory = Path(directory)
        cache = cls()
        paths = ([directory / f"{d}.jsonl" for d in doc_ids] if doc_ids is not None
                 else sorted(directory.glob('*.jsonl')))
        for path in paths:
            if not path.exists():
                raise ChunkLookupError(path.stem, 0)
            chunks = [Chunk.from_dict(json.loads(line))
                      for line in path.read_text(encoding='utf-8').splitlines() if line.strip()]
            cache.add(path.stem, chunks)
        return cache


def neighbors(cache: ChunkCache, doc_id: str,
              index: int) -> Tuple[Optional[Chunk], Optional[Chunk]]:
    cache.get(doc_id, index)
    chunks = cache.chunks(doc_id)
    previous = chunks[index - 1] if index > 0 else None
    following = chunks[index + 1] if index + 1 < len(chunks) else None
    return previous, following
