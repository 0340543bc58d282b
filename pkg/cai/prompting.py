"""
Prompt Construction
Golden example store, similarity-ranked example selection and byte-stable prompt
rendering for the extraction and auxiliary prompts.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from cai.embedding import BaselineEmbedder, cosine
from cai.errors import ConfigError, ExtractionError
from cai.llm_client import INPUT_MARKER, OUTPUT_MARKER
from cai.patterns import NO_ANSWER, RAW_FIELDS

logger = logging.getLogger(__name__)

INSTRUCTION = (
    "You extract corporate carbon-reduction commitments from disclosure text. "
    "Use only information stated in the input context; do not infer or add values. "
    "Return a JSON array with one object per commitment, each object having exactly the keys "
    + ', '.join(RAW_FIELDS) + ". "
    f"If an attribute cannot be found in the input, return \"{NO_ANSWER}\" for that attribute. "
    "Return [] when the input states no commitment."
)

FIELD_DESCRIPTIONS = {
    'target_year': 'year by which the target is to be met, as written (e.g. 2030, FY30)',
    'base_year': 'baseline year the reduction is measured from, as written',
    'target_percent': 'reduction percentage, e.g. 30%',
    'target_type': 'absolute, intensity or net zero',
    'scope': 'emission scopes covered as digits, e.g. 12 for scope 1 and 2',
    'target_wording': 'short label for the commitment, e.g. Net Zero emissions',
    'sub_context': 'the exact sentence of the input stating the commitment',
    'entity_name': 'organization making the commitment, as named in the input',
}


def schema_block() -> str:
    lines = ['### Output schema']
    lines.extend(f"- {name}: {FIELD_DESCRIPTIONS[name]}" for name in RAW_FIELDS)
    return '\n'.join(lines)


@dataclass(frozen=True)
class GoldenExample:
    context: str
    sub_context: str
    expected: Tuple[Dict[str, str], ...]
    sub_context_embedding: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class PromptSpec:
    input_context: str
    examples: Tuple[GoldenExample, ...] = ()
    instruction: str = INSTRUCTION
    schema: str = field(default_factory=schema_block)


def _normalize_ws(text: str) -> str:
    return ' '.join(text.split())


def load_example_store(path, embedder=None) -> List[GoldenExample]:
    """Read the JSON-lines store and embed every sub_context once."""
    embedder = embedder or BaselineEmbedder()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"example store {path} not found")
    store = []
    for line_no, line in enumerate(path.read_text(encoding='utf-8').splitlines(), 1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            context, sub_context = data['context'], data['sub_context']
            expected = tuple({name: str(item.get(name, NO_ANSWER)) for name in RAW_FIELDS}
                             for item in data['expected'])
        except (ValueError, KeyError, TypeError, AttributeError) as e:
            raise ConfigError(f"{path}:{line_no}: malformed example ({e})") from e
        if _normalize_ws(sub_context) not in _normalize_ws(context):
            raise ConfigError(f"{path}:{line_no}: sub_context is not part of its context")
        if not expected:
            raise ConfigError(f"{path}:{line_no}: example has no expected commitments")
        store.append(GoldenExample(context, sub_context, expected, np.zeros(0)))
    vectors = embedder.embed_many([e.sub_context for e in store]) if store else []
    store = [GoldenExample(e.context, e.sub_context, e.expected, v)
             for e, v in zip(store, vectors)]
    logger.info(f"Loaded {len(store)} golden examples from {path}")
    return store


def rank_examples(context: str, store: Sequence[GoldenExample],
                  embedder=None) -> List[Tuple[float, int]]:
    """(similarity, store index) pairs, most similar first, ties in store order."""
    if not store:
        raise ConfigError("example store is empty")
    embedder = embedder or BaselineEmbedder()
    query = embedder.embed(context)
    scored = [(cosine(query, example.sub_context_embedding), i)
              for i, example in enumerate(store)]
    return sorted(scored, key=lambda pair: (-pair[0], pair[1]))


def select_examples(context: str, store: Sequence[GoldenExample], k: int,
                    embedder=None) -> List[GoldenExample]:
    if k < 1:
        raise ConfigError(f"k must be at least 1 (got {k})")
    ranked = rank_examples(context, store, embedder)
    return [store[i] for _, i in ranked[:k]]


def _render_example(n: int, example: GoldenExample) -> str:
    output = json.dumps(list(example.expected), ensure_ascii=False)
    return f"Example {n}\nInput: {example.context}\nOutput: {output}"


def build_prompt(spec: PromptSpec) -> str:
    parts = [spec.instruction, spec.schema]
    parts.extend(_render_example(n, e) for n, e in enumerate(spec.examples, 1))
    parts.append(f"{INPUT_MARKER}\n{spec.input_context}\n{OUTPUT_MARKER}")
    return '\n\n'.join(parts) + '\n'


def estimate_tokens(text: str) -> int:
    """Roughly four tokens per three words."""
    return math.ceil(len(text.split()) * 4 / 3)


def fit_prompt(spec: PromptSpec, max_input_tokens: int) -> Tuple[str, PromptSpec]:
    """
    Render the prompt, dropping the least similar examples (the tail of the list)
    until it fits the input-token budget.
    """
    examples = list(spec.examples)
    while True:
        current = PromptSpec(spec.input_context, tuple(examples), spec.instruction, spec.schema)
        prompt = build_prompt(current)
        tokens = estimate_tokens(prompt)
        if tokens <= max_input_tokens:
            if len(examples) < len(spec.examples):
                logger.warning(f"Prompt shrunk to {len(examples)} examples to fit "
                               f"{max_input_tokens} input tokens")
            return prompt, current
        if not examples:
            raise ExtractionError(
                f"prompt needs ~{tokens} tokens with no examples; limit is {max_input_tokens}")
        examples.pop()


def entity_prompt(entity_name: str, company_name: str) -> str:
    return (
        "Does the entity below refer to the reporting company itself? Answer yes or no.\n"
        f"Entity name: {entity_name}\n"
        f"Company name: {company_name}\n"
    )


def boundary_prompt(target_wording: str, sub_context: str) -> str:
    return (
        "Is this commitment made for the whole corporation, or only for a country, region, "
        "subsidiary, division or site? Answer corporate_wide or non_corporate_wide.\n"
        f"Target wording: {target_wording}\n"
        f"Sub-context: {sub_context}\n"
    )
