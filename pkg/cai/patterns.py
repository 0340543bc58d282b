"""
Commitment Pattern Grammar
Regular-expression reading of formulaic target language such as
"We plan to reduce absolute scope 1 and 2 emissions by 30% and scope 3 emissions
by 20% by 2030 from 2015." It backs the mock LLM and the lexical evidence checks.

The grammar only understands templated sentences; free prose yields nothing.
"""

import re
from typing import Dict, List, Optional, Set

NO_ANSWER = 'NO_ANSWER'

RAW_FIELDS = ('target_year', 'base_year', 'target_percent', 'target_type', 'scope',
              'target_wording', 'sub_context', 'entity_name')

_SENTENCE_SPLIT = re.compile(r'(?<=[.!?])\s+')

# shortest back-to-back word run read as duplicated chunk overlap
MIN_REPEAT = 4

SCOPE_PHRASE = (r'scopes?\s*\d(?:\s*(?:,|and|&|\+|/)\s*(?:scope\s*)?\d)*'
                r'|own operations|all (?:emissions|scopes)|(?:the |our )?value chain')
_GAS = r'(?:ghg|greenhouse gas|carbon|co2)'
_PERCENT = r'(?P<percent>\d{1,3}(?:\.\d+)?)\s*(?:%|percent\b|per cent\b)'
_YEAR = r'FY\s?\d{2,4}|\d{4}'

CLAUSE = re.compile(
    rf'(?:(?P<type_a>absolute|intensity)\s+)?'
    rf'(?:{_GAS}\s+)?'
    rf'(?:emissions?\s+(?:for|from|across|in)\s+)?'
    rf'(?P<scope>{SCOPE_PHRASE})'
    rf'(?:\s+{_GAS})?(?:\s+emissions?)?'
    rf'(?:\s+(?P<type_b>intensity))?'
    rf'(?:\s+per\s+\w+(?:\s+of\s+\w+)?)?'
    rf'\s+by\s+{_PERCENT}',
    re.IGNORECASE)

NET_ZERO = re.compile(
    rf'(?P<type>net[- ]zero|carbon neutral(?:ity)?)'
    rf'(?:\s+{_GAS})?(?:\s+emissions)?'
    rf'(?:\s+(?:across|for|in)\s+(?P<scope>{SCOPE_PHRASE}))?'
    rf'(?:\s+emissions)?'
    rf'\s+by\s+(?P<year>{_YEAR})\b',
    re.IGNORECASE)

TARGET_YEAR = re.compile(rf'\bby\s+(?:the\s+end\s+of\s+)?(?P<year>{_YEAR})\b', re.IGNORECASE)
BASE_YEAR = re.compile(
    rf'(?:\bfrom|\bagainst|\bcompared (?:to|with)|\brelative to|\bversus)\s+'
    rf'(?:(?:a|the|its|our)\s+)?(?:base\s*(?:year|line)\s+(?:of\s+)?)?(?P<year>{_YEAR})\b',
    re.IGNORECASE)

_ENTITY = re.compile(
    r'^(?P<name>[A-Z][\w&.\-]*(?:\s+[A-Z][\w&.\-]*)*)\s+'
    r'(?:plans?|aims?|commits?|will|intends?|targets?|pledges?|has committed|is committed)\b')
_NOT_ENTITIES = {'we', 'our', 'the company', 'the group', 'it', 'this'}

SCOPE_PHRASES = {
    'own operations': '12',
    'all emissions': '123',
    'all scopes': '123',
    'value chain': '3',
    'the value chain': '3',
    'our value chain': '3',
}

CORPORATE_SUFFIXES = {'inc', 'corp', 'corporation', 'ltd', 'plc', 'co', 'group'}

_REGIONS = (
    'germany', 'german', 'france', 'french', 'united kingdom', 'uk', 'british', 'china',
    'chinese', 'japan', 'japanese', 'india', 'indian', 'brazil', 'brazilian', 'canada',
    'canadian', 'mexico', 'mexican', 'australia', 'australian', 'spain', 'spanish', 'italy',
    'italian', 'europe', 'european', 'asia', 'asian', 'africa', 'african', 'north america',
    'north american', 'latin america', 'latin american', 'united states', 'usa',
)
BOUNDARY_QUALIFIERS = re.compile(
    r'\bsubsidiar(?:y|ies)\b|\bdivisions?\b|\bfacilit(?:y|ies)\b|\bplants?\b(?!-)'
    r'|\bsites?\b|\bour\s+\w+\s+business\b|\b(?:' + '|'.join(_REGIONS) + r')\b',
    re.IGNORECASE)

CORPORATE_WIDE, NON_CORPORATE_WIDE = 'corporate_wide', 'non_corporate_wide'


def canonical_scope(phrase: str) -> Optional[str]:
    """'scope 2 and 1' -> '12', 'own operations' -> '12'; None when nothing is recognized."""
    text = ' '.join(phrase.lower().split())
    if text in SCOPE_PHRASES:
        return SCOPE_PHRASES[text]
    digits = sorted(set(re.findall(r'\d', text)))
    return ''.join(digits) or None


def scope_mentions(text: str) -> Set[str]:
    """Canonical scopes of every scope phrase in a text."""
    found = set()
    for match in re.finditer(SCOPE_PHRASE, text, re.IGNORECASE):
        scope = canonical_scope(match.group(0))
        if scope:
            found.add(scope)
    return found


def collapse_repeats(words: List[str], min_run: int = MIN_REPEAT) -> List[str]:
    """
    Drop a run of words that immediately repeats the words before it.

    Neighbouring chunks joined verbatim repeat their overlap back to back; the
    longest such repeat at each position is read once.
    """
    out: List[str] = []
    i = 0
    while i < len(words):
        skip = 0
        for run in range(min(len(out), len(words) - i), min_run - 1, -1):
            if out[-run] == words[i] and out[-run:] == words[i:i + run]:
                skip = run
                break
        if skip:
            i += skip
        else:
            out.append(words[i])
            i += 1
    return out


def commitment_sentences(text: str, leading_fragment: bool = False) -> List[str]:
    """
    Sentences that are complete inside the text.

    A context cut from the middle of a document (leading_fragment) opens
    mid-sentence, so its first segment is skipped; a trailing segment must end
    with punctuation.
    """
    segments = [s.strip() for s in _SENTENCE_SPLIT.split(text.strip()) if s.strip()]
    if len(segments) <= 1:
        return segments
    kept = []
    last = len(segments) - 1
    for i, segment in enumerate(segments):
        if i == 0 and leading_fragment:
            continue
        if i == last and segment[-1] not in '.!?':
            continue
        kept.append(segment)
    return kept


def entity_in(sentence: str) -> str:
    match = _ENTITY.match(sentence)
    if not match or match.group('name').lower() in _NOT_ENTITIES:
        return NO_ANSWER
    return match.group('name')


def _blank() -> Dict[str, str]:
    return {name: NO_ANSWER for name in RAW_FIELDS}


def _percent_records(sentence: str, entity: str) -> List[tuple]:
    matches = list(CLAUSE.finditer(sentence))
    records = []
    for i, match in enumerate(matches):
        tail_end = matches[i + 1].start() if i + 1 < len(matches) else len(sentence)
        tail = sentence[match.end():tail_end]
        target = TARGET_YEAR.search(tail)
        base = BASE_YEAR.search(tail)
        type_word = match.group('type_a') or match.group('type_b')
        record = _blank()
        record.update({
            'target_year': target.group('year') if target else NO_ANSWER,
            'base_year': base.group('year') if base else NO_ANSWER,
            'target_percent': f"{match.group('percent')}%",
            'target_type': type_word.lower() if type_word else NO_ANSWER,
            'scope': canonical_scope(match.group('scope')) or NO_ANSWER,
            'sub_context': sentence,
            'entity_name': entity,
        })
        records.append((match.start(), record))

    # trailing years are shared backwards, the target type carries forward
    for key in ('target_year', 'base_year'):
        later = NO_ANSWER
        for _, record in reversed(records):
            if record[key] == NO_ANSWER:
                record[key] = later
            else:
                later = record[key]
    earlier = NO_ANSWER
    for _, record in records:
        if record['target_type'] == NO_ANSWER:
            record['target_type'] = earlier
        else:
            earlier = record['target_type']
    for _, record in records:
        kind = record['target_type']
        if kind == 'intensity':
            record['target_wording'] = 'emissions intensity reduction'
        elif kind == NO_ANSWER:
            record['target_wording'] = 'emissions reduction'
        else:
            record['target_wording'] = f"{kind} emissions reduction"
    return records


def _net_zero_records(sentence: str, entity: str) -> List[tuple]:
    records = []
    for match in NET_ZERO.finditer(sentence):
        word = match.group('type').lower()
        record = _blank()
        record.update({
            'target_year': match.group('year'),
            'target_type': 'carbon neutral' if word.startswith('carbon') else 'net zero',
            'scope': canonical_scope(match.group('scope') or '') or NO_ANSWER,
            'target_wording': ('Carbon neutrality' if word.startswith('carbon')
                               else 'Net Zero emissions'),
            'sub_context': sentence,
            'entity_name': entity,
        })
        records.append((match.start(), record))
    return records


def pattern_extract(text: str, leading_fragment: bool = False) -> List[Dict[str, str]]:
    """
    Extract raw commitments from formulaic sentences, in order of appearance.
    Every record carries all eight raw keys, NO_ANSWER where nothing was found.
    """
    results: List[Dict[str, str]] = []
    flat = ' '.join(collapse_repeats(text.split()))
    for sentence in commitment_sentences(flat, leading_fragment):
        entity = entity_in(sentence)
        found = _percent_records(sentence, entity) + _net_zero_records(sentence, entity)
        found.sort(key=lambda pair: pair[0])
        results.extend(record for _, record in found)
    return results


def _name_tokens(name: str) -> Set[str]:
    return {t for t in re.split(r'[^0-9a-z]+', name.lower()) if t} - CORPORATE_SUFFIXES


def entity_matches(entity_name: str, company_name: str) -> bool:
    """Token-set containment either way, corporate suffixes ignored."""
    entity, company = _name_tokens(entity_name), _name_tokens(company_name)
    if not entity or not company:
        return False
    return entity <= company or company <= entity


def boundary_of(*texts: str) -> str:
    for text in texts:
        if text and BOUNDARY_QUALIFIERS.search(text):
            return NON_CORPORATE_WIDE
    return CORPORATE_WIDE
