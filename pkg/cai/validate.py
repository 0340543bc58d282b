"""
Validation and Confidence Scoring
Normalizes raw commitments and scores them with three checks whose mean is the
confidence score.

Checks:
- rules: target after base, years in range, percent in (0, 100], valid scope and type
- completeness: share of the five metric fields present
- hallucination: every populated value must be lexically evidenced in its context
"""

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

from cai.corpus import DocumentMeta
from cai.extract import ExtractedCommitment
from cai.patterns import CORPORATE_WIDE, NO_ANSWER, canonical_scope, scope_mentions

logger = logging.getLogger(__name__)

METRIC_FIELDS = ('target_year', 'base_year', 'target_percent', 'target_type', 'scope')
TEXT_FIELDS = ('target_wording', 'sub_context', 'entity_name')
EVIDENCE_FIELDS = METRIC_FIELDS + ('sub_context', 'entity_name')

ABSOLUTE, INTENSITY, NET_ZERO = 'absolute', 'intensity', 'net_zero'
TARGET_TYPES = (ABSOLUTE, INTENSITY, NET_ZERO)
CANONICAL_SCOPES = ('1', '2', '3', '12', '13', '23', '123')
EMISSIONS, NON_EMISSIONS = 'emissions', 'non_emissions'

E_TARGET_NOT_AFTER_BASE = 'E_TARGET_NOT_AFTER_BASE'
E_YEAR_OUT_OF_RANGE = 'E_YEAR_OUT_OF_RANGE'
E_PERCENT_OUT_OF_RANGE = 'E_PERCENT_OUT_OF_RANGE'
E_SCOPE_INVALID = 'E_SCOPE_INVALID'
E_TYPE_INVALID = 'E_TYPE_INVALID'
E_PARSE_REJECT = 'E_PARSE_REJECT'


def missing_code(name: str) -> str:
    return f"E_MISSING_FIELD({name})"


def hallucinated_code(name: str) -> str:
    return f"E_HALLUCINATED({name})"


_TYPE_MAP = {
    'net zero': NET_ZERO, 'net-zero': NET_ZERO, 'net_zero': NET_ZERO,
    'carbon neutral': NET_ZERO, 'carbon neutrality': NET_ZERO,
    'absolute': ABSOLUTE,
    'intensity': INTENSITY, 'per unit': INTENSITY, 'per revenue': INTENSITY,
}
_TYPE_EVIDENCE = {
    ABSOLUTE: re.compile(r'\babsolute\b'),
    INTENSITY: re.compile(r'\bintensity\b|\bper (?:unit|tonne|revenue)\b'),
    NET_ZERO: re.compile(r'\bnet[- ]zero\b|\bcarbon neutral'),
}
_YEAR_RE = re.compile(r'^(?:(?P<fy>fy)\s?)?(?P<digits>\d{2}|\d{4})$', re.IGNORECASE)
_PERCENT_RE = re.compile(r'^(?P<value>[+-]?\d+(?:\.\d+)?)\s*(?:%|percent|per cent)?$',
                         re.IGNORECASE)
_WORDING_TERMS = re.compile(r'\bemissions?\b|\bcarbon\b|\bco2\b|\bghg\b|\bnet[- ]zero\b|\bclimate\b',
                            re.IGNORECASE)


@dataclass(frozen=True)
class CommitmentRecord:
    target_year: Optional[int] = None
    base_year: Optional[int] = None
    target_percent: Optional[float] = None
    target_type: Optional[str] = None
    scope: Optional[str] = None
    target_wording: Optional[str] = None
    sub_context: Optional[str] = None
    entity_name: Optional[str] = None
    meta: Optional[DocumentMeta] = field(default=None, compare=False)
    chunk_index: int = field(default=-1, compare=False)
    context: str = field(default='', compare=False, repr=False)
    parse_rejects: Tuple[str, ...] = field(default=(), compare=False)

    @property
    def doc_id(self) -> str:
        return self.meta.doc_id if self.meta else ''

    @property
    def company_id(self) -> str:
        return self.meta.company_id if self.meta else ''

    def metrics(self) -> Tuple:
        return tuple(getattr(self, name) for name in METRIC_FIELDS)


@dataclass(frozen=True)
class ScoredRecord:
    record: CommitmentRecord
    rule_score: float
    completeness_score: float
    hallucination_score: float
    confidence: float
    error_codes: Tuple[str, ...]
    entity_match: bool = True
    boundary: str = CORPORATE_WIDE
    emissions_flag: str = EMISSIONS

    @property
    def high_confidence(self) -> bool:
        return is_high_confidence(self.confidence, self.error_codes)

    def to_dict(self) -> Dict[str, Any]:
        """The published record schema, field names and order fixed."""
        rec, meta = self.record, self.record.meta
        return {
            'company_id': meta.company_id if meta else '',
            'company_name': meta.company_name if meta else '',
            'report_type': meta.report_type if meta else '',
            'publication_year': meta.publication_year if meta else None,
            'target_year': rec.target_year,
            'base_year': rec.base_year,
            'target_percent': rec.target_percent,
            'target_type': rec.target_type,
            'scope': rec.scope,
            'target_wording': rec.target_wording,
            'sub_context': rec.sub_context,
            'entity_name': rec.entity_name,
            'rule_score': self.rule_score,
            'completeness_score': self.completeness_score,
            'hallucination_score': self.hallucination_score,
            'confidence': self.confidence,
            'error_codes': list(self.error_codes),
            'entity_match': self.entity_match,
            'boundary': self.boundary,
            'emissions_flag': self.emissions_flag,
            'doc_id': rec.doc_id,
            'chunk_index': rec.chunk_index,
        }

    def to_stage_dict(self) -> Dict[str, Any]:
        """Published schema plus what the dedup stage needs to re-run validators."""
        return {**self.to_dict(), 'context': self.record.context,
                'parse_rejects': list(self.record.parse_rejects)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ScoredRecord':
        meta = DocumentMeta(data['company_id'], data['company_name'], data['report_type'],
                            int(data['publication_year']),
                            source_path=data.get('source_path') or f"{data['doc_id']}.txt")
        record = CommitmentRecord(
            target_year=data['target_year'], base_year=data['base_year'],
            target_percent=(None if data['target_percent'] is None
                            else float(data['target_percent'])),
            target_type=data['target_type'], scope=data['scope'],
            target_wording=data['target_wording'], sub_context=data['sub_context'],
            entity_name=data['entity_name'], meta=meta, chunk_index=int(data['chunk_index']),
            context=data.get('context', ''),
            parse_rejects=tuple(data.get('parse_rejects', ())))
        return cls(record, float(data['rule_score']), float(data['completeness_score']),
                   float(data['hallucination_score']), float(data['confidence']),
                   tuple(data['error_codes']), bool(data['entity_match']), data['boundary'],
                   data['emissions_flag'])


def is_high_confidence(confidence: float, error_codes: Sequence[str]) -> bool:
    return confidence == 1.0 and not error_codes


def _clean(value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    value = ' '.join(str(value).split())
    return None if not value or value == NO_ANSWER else value


def parse_year(value: str, fy_pivot: int = 49) -> Optional[int]:
    """'2030' -> 2030, 'FY20' -> 2020, 'FY75' -> 1975; None when unparseable."""
    match = _YEAR_RE.match(value.strip())
    if not match:
        return None
    digits = match.group('digits')
    if len(digits) == 4:
        return int(digits)
    if not match.group('fy'):
        return None
    nn = int(digits)
    return 2000 + nn if nn <= fy_pivot else 1900 + nn


def parse_percent(value: str) -> Optional[float]:
    match = _PERCENT_RE.match(value.strip())
    return float(match.group('value')) if match else None


def parse_type(value: str) -> str:
    text = ' '.join(value.lower().replace('_', ' ').split())
    if text in _TYPE_MAP:
        return _TYPE_MAP[text]
    for phrase, kind in _TYPE_MAP.items():
        if phrase in text:
            return kind
    return text


def parse_scope(value: str) -> Optional[str]:
    return canonical_scope(value)


def normalize(raw: Dict[str, str], meta: Optional[DocumentMeta] = None, chunk_index: int = -1,
              context: str = '', fy_pivot: int = 49) -> CommitmentRecord:
    """
    Convert a raw model record into typed fields. Unparseable values become missing
    and are listed in parse_rejects.
    """
    rejects: List[str] = []
    values: Dict[str, Any] = {}
    for name in ('target_year', 'base_year'):
        text = _clean(raw.get(name))
        parsed = parse_year(text, fy_pivot) if text else None
        if text and parsed is None:
            rejects.append(name)
        values[name] = parsed
    text = _clean(raw.get('target_percent'))
    values['target_percent'] = parse_percent(text) if text else None
    if text and values['target_percent'] is None:
        rejects.append('target_percent')
    text = _clean(raw.get('target_type'))
    values['target_type'] = parse_type(text) if text else None
    text = _clean(raw.get('scope'))
    values['scope'] = parse_scope(text) if text else None
    if text and values['scope'] is None:
        rejects.append('scope')
    for name in TEXT_FIELDS:
        values[name] = _clean(raw.get(name))
    if rejects:
        logger.debug(f"Parse rejects {rejects} in {meta.doc_id if meta else '?'}#{chunk_index}")
    return CommitmentRecord(**values, meta=meta, chunk_index=chunk_index, context=context,
                            parse_rejects=tuple(rejects))


def renormalize(rec: CommitmentRecord, fy_pivot: int = 49) -> CommitmentRecord:
    """normalize applied to an already normalized record; a fixed point."""
    raw = {name: (NO_ANSWER if getattr(rec, name) is None else _raw_text(name, getattr(rec, name)))
           for name in METRIC_FIELDS + TEXT_FIELDS}
    again = normalize(raw, rec.meta, rec.chunk_index, rec.context, fy_pivot)
    return replace(again, parse_rejects=rec.parse_rejects + again.parse_rejects)


def _raw_text(name: str, value: Any) -> str:
    if name == 'target_type' and value == NET_ZERO:
        return 'net zero'
    return str(value)


def rule_check(rec: CommitmentRecord, min_year: int = 1990,
               max_year: int = 2100) -> Tuple[float, List[str]]:
    applicable, codes = 0, []
    if rec.target_year is not None and rec.base_year is not None:
        applicable += 1
        if not rec.target_year > rec.base_year:
            codes.append(E_TARGET_NOT_AFTER_BASE)
    years = [y for y in (rec.target_year, rec.base_year) if y is not None]
    if years:
        applicable += 1
        if not all(min_year <= y <= max_year for y in years):
            codes.append(E_YEAR_OUT_OF_RANGE)
    if rec.target_percent is not None:
        applicable += 1
        if not 0.0 < rec.target_percent <= 100.0:
            codes.append(E_PERCENT_OUT_OF_RANGE)
    if rec.scope is not None:
        applicable += 1
        if rec.scope not in CANONICAL_SCOPES:
            codes.append(E_SCOPE_INVALID)
    if rec.target_type is not None:
        applicable += 1
        if rec.target_type not in TARGET_TYPES:
            codes.append(E_TYPE_INVALID)
    if not applicable:
        return 1.0, codes
    return (applicable - len(codes)) / applicable, codes


def completeness(rec: CommitmentRecord) -> Tuple[float, List[str]]:
    missing = [name for name in METRIC_FIELDS if getattr(rec, name) is None]
    return (len(METRIC_FIELDS) - len(missing)) / len(METRIC_FIELDS), [missing_code(m) for m in missing]


def _fold(text: str) -> str:
    return ' '.join(text.split()).casefold()


def year_evidenced(year: int, context: str) -> bool:
    yy = f"{year % 100:02d}"
    pattern = rf'(?<!\d){year}(?!\d)|\bfy\s?(?:{yy}|{year})(?!\d)'
    return re.search(pattern, context) is not None


def percent_evidenced(percent: float, context: str) -> bool:
    if float(percent).is_integer():
        number = rf'{int(percent)}(?:\.0+)?'
    else:
        number = re.escape(f"{percent:g}") + r'0*'
    pattern = rf'(?<![\d.]){number}\s*(?:%|percent\b|per cent\b)'
    return re.search(pattern, context) is not None


def scope_evidenced(scope: str, context: str) -> bool:
    return scope in scope_mentions(context)


def type_evidenced(target_type: str, context: str) -> bool:
    pattern = _TYPE_EVIDENCE.get(target_type)
    if pattern is None:
        return target_type.casefold() in context
    return pattern.search(context) is not None


def field_evidenced(name: str, value: Any, context: str) -> bool:
    """Whether one normalized value is supported by an already case-folded context."""
    if name in ('target_year', 'base_year'):
        return year_evidenced(value, context)
    if name == 'target_percent':
        return percent_evidenced(value, context)
    if name == 'scope':
        return scope_evidenced(value, context)
    if name == 'target_type':
        return type_evidenced(value, context)
    return _fold(value) in context


def hallucination(rec: CommitmentRecord, context: str) -> Tuple[float, List[str]]:
    folded = _fold(context)
    populated = [name for name in EVIDENCE_FIELDS if getattr(rec, name) is not None]
    codes = [hallucinated_code(name) for name in populated
             if not field_evidenced(name, getattr(rec, name), folded)]
    if not populated:
        return 1.0, codes
    return (len(populated) - len(codes)) / len(populated), codes


def classify_wording(target_wording: Optional[str]) -> str:
    if target_wording and _WORDING_TERMS.search(target_wording):
        return EMISSIONS
    return NON_EMISSIONS


def confidence_of(rule_score: float, completeness_score: float,
                  hallucination_score: float) -> float:
    return (rule_score + completeness_score + hallucination_score) / 3.0


def score(rec: CommitmentRecord, context: Optional[str] = None, entity_match: bool = True,
          boundary: str = CORPORATE_WIDE, min_year: int = 1990,
          max_year: int = 2100) -> ScoredRecord:
    context = rec.context if context is None else context
    rule_score, rule_codes = rule_check(rec, min_year, max_year)
    completeness_score, missing_codes = completeness(rec)
    hallucination_score, hallucinated_codes = hallucination(rec, context)
    codes = rule_codes + missing_codes + hallucinated_codes
    if rec.parse_rejects:
        codes.append(E_PARSE_REJECT)
    flag = classify_wording(rec.target_wording or rec.sub_context)
    return ScoredRecord(
        record=rec,
        rule_score=rule_score,
        completeness_score=completeness_score,
        hallucination_score=hallucination_score,
        confidence=confidence_of(rule_score, completeness_score, hallucination_score),
        error_codes=tuple(codes),
        entity_match=entity_match,
        boundary=boundary,
        emissions_flag=flag,
    )


def validate_extracted(items: Sequence[ExtractedCommitment], fy_pivot: int = 49,
                       min_year: int = 1990, max_year: int = 2100) -> List[ScoredRecord]:
    """Normalize and score extracted commitments, keeping input order."""
    scored = []
    for item in items:
        rec = normalize(item.raw, item.meta, item.chunk_index, item.context, fy_pivot)
        scored.append(score(rec, item.context, item.entity_match, item.boundary,
                            min_year, max_year))
    return scored

