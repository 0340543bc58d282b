import json

import numpy as np
import pytest

from cai.embedding import BaselineEmbedder
from cai.errors import ConfigError, ExtractionError
from cai.llm_client import INPUT_MARKER, OUTPUT_MARKER
from cai.patterns import NO_ANSWER, RAW_FIELDS, pattern_extract
from cai.prompting import (INSTRUCTION, GoldenExample, PromptSpec, build_prompt,
                           estimate_tokens, fit_prompt, load_example_store, rank_examples,
                           schema_block, select_examples)

from conftest import EXAMPLES, SAMPLE_SENTENCE


@pytest.fixture(scope='module')
def store():
    return load_example_store(EXAMPLES, BaselineEmbedder())


def _write_store(path, rows):
    path.write_text(''.join(json.dumps(row) + '\n' for row in rows), encoding='utf-8')
    return path


def test_bundled_store_loads_and_matches_the_grammar(store):
    assert len(store) >= 20
    for example in store:
        assert example.sub_context_embedding.shape == (1024,)
        assert list(example.expected) == pattern_extract(example.context)


def test_store_validation(tmp_path):
    good = {'context': 'We will be carbon neutral by 2040. More text.',
            'sub_context': 'We will be carbon neutral by 2040.',
            'expected': [{'target_year': '2040'}]}
    loaded = load_example_store(_write_store(tmp_path / 'ok.jsonl', [good]))
    assert loaded[0].expected[0]['base_year'] == NO_ANSWER
    assert list(loaded[0].expected[0]) == list(RAW_FIELDS)

    with pytest.raises(ConfigError, match='not found'):
        load_example_store(tmp_path / 'missing.jsonl')
    with pytest.raises(ConfigError, match='not part of its context'):
        load_example_store(_write_store(tmp_path / 'a.jsonl',
                                        [{**good, 'sub_context': 'Something else.'}]))
    with pytest.raises(ConfigError, match='no expected'):
        load_example_store(_write_store(tmp_path / 'b.jsonl', [{**good, 'expected': []}]))
    with pytest.raises(ConfigError, match='malformed'):
        load_example_store(_write_store(tmp_path / 'c.jsonl', [{'context': 'x'}]))


def test_ranking_is_by_similarity_then_store_order(store):
    ranked = rank_examples(SAMPLE_SENTENCE, store)
    scores = [s for s, _ in ranked]
    assert scores == sorted(scores, reverse=True)
    for (s1, i1), (s2, i2) in zip(ranked, ranked[1:]):
        if s1 == s2:
            assert i1 < i2


def test_ties_keep_store_order():
    vector = BaselineEmbedder().embed('scope 1')
    twins = [GoldenExample('scope 1', 'scope 1', ({},), vector) for _ in range(3)]
    assert [i for _, i in rank_examples('scope 1', twins)] == [0, 1, 2]


def test_select_examples(store):
    chosen = select_examples(SAMPLE_SENTENCE, store, 6)
    assert len(chosen) == 6
    assert len(select_examples(SAMPLE_SENTENCE, store, 100)) == len(store)
    with pytest.raises(ConfigError):
        select_examples(SAMPLE_SENTENCE, store, 0)
    with pytest.raises(ConfigError):
        select_examples(SAMPLE_SENTENCE, [], 3)


def test_prompt_layout_is_byte_stable(store):
    spec = PromptSpec(SAMPLE_SENTENCE, tuple(store[:2]))
    prompt = build_prompt(spec)
    assert prompt == build_prompt(PromptSpec(SAMPLE_SENTENCE, tuple(store[:2])))
    assert prompt.startswith(INSTRUCTION + '\n\n' + schema_block() + '\n\nExample 1\nInput: ')
    assert prompt.endswith(f'{INPUT_MARKER}\n{SAMPLE_SENTENCE}\n{OUTPUT_MARKER}\n')
    assert '\n\nExample 2\nInput: ' in prompt
    assert prompt.count('Output: [') == 2
    assert 'NO_ANSWER' in INSTRUCTION


def test_schema_lists_every_field():
    block = schema_block()
    for name in RAW_FIELDS:
        assert f'- {name}: ' in block


def test_estimate_tokens():
    assert estimate_tokens('') == 0
    assert estimate_tokens('one two three') == 4
    assert estimate_tokens('one two three four') == 6


def test_fit_prompt_drops_least_similar_examples(store):
    spec = PromptSpec(SAMPLE_SENTENCE, tuple(store[:6]))
    full, _ = fit_prompt(spec, 100000)
    assert full == build_prompt(spec)
    two_examples = estimate_tokens(build_prompt(PromptSpec(SAMPLE_SENTENCE, tuple(store[:2]))))
    prompt, fitted = fit_prompt(spec, two_examples)
    assert fitted.examples == tuple(store[:2])
    assert estimate_tokens(prompt) <= two_examples


def test_fit_prompt_fails_when_the_context_alone_is_too_long(store):
    spec = PromptSpec(SAMPLE_SENTENCE * 50, tuple(store[:3]))
    with pytest.raises(ExtractionError):
        fit_prompt(spec, 200)


def test_example_embedding_is_excluded_from_equality():
    a = GoldenExample('c', 'c', ({},), np.zeros(3))
    b = GoldenExample('c', 'c', ({},), np.ones(3))
    assert a == b
