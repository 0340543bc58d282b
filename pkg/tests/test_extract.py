import pytest

from cai.corpus import Chunk
from cai.embedding import BaselineEmbedder
from cai.errors import ConfigError, ExtractionError, OutputParseError
from cai.extract import (ExtractedCommitment, Extractor, classify_boundary,
                         classify_entity_match, parse_output)
from cai.llm_client import LlmClient, LlmResponse, MockLlmBackend
from cai.patterns import CORPORATE_WIDE, NO_ANSWER, NON_CORPORATE_WIDE, RAW_FIELDS
from cai.prompting import load_example_store
from cai.relevance import EnrichedContext

from conftest import EXAMPLES, SAMPLE_SENTENCE, make_meta


class ScriptedBackend:
    """Answers every request with the same text and remembers the prompts."""
    name = 'scripted'

    def __init__(self, text):
        self.text = text
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        return LlmResponse(self.text)


@pytest.fixture(scope='module')
def store():
    return load_example_store(EXAMPLES, BaselineEmbedder())


def _extractor(store, backend=None, **kwargs):
    client = LlmClient(backend or MockLlmBackend(), sleep=lambda s: None)
    return Extractor(client=client, store=store, embedder=BaselineEmbedder(), **kwargs)


def _context(text, index=0, doc_id='acme_sustainability_2023'):
    return EnrichedContext(Chunk(doc_id, index, 0, tuple(text.split())), text)


def test_parse_output_accepts_fenced_and_wrapped_json():
    reply = 'Here you go:\n```json\n[{"target_year": "2030", "scope": null}]\n```\nDone.'
    (record,) = parse_output(reply)
    assert record['target_year'] == '2030'
    assert record['scope'] == NO_ANSWER
    assert list(record) == list(RAW_FIELDS)


def test_parse_output_wraps_a_single_object_and_accepts_empty_arrays():
    assert parse_output('{"target_year": 2030}')[0]['target_year'] == '2030'
    assert parse_output('[]') == []
    assert parse_output('No commitments found: []') == []


def test_parse_output_reads_past_citation_brackets():
    reply = 'Per disclosure [1], the targets are:\n[{"target_year": "2030", "scope": "12"}]'
    (record,) = parse_output(reply)
    assert record['target_year'] == '2030'
    assert record['scope'] == '12'


@pytest.mark.parametrize('reply', ['nothing here', '[1, 2]', '"just a string"', '{broken'])
def test_parse_output_rejects_non_records(reply):
    with pytest.raises(OutputParseError) as info:
        parse_output(reply, {'doc_id': 'acme'})
    assert info.value.raw_text == reply


def test_entity_match_short_circuits_on_missing_entity():
    backend = ScriptedBackend('no')
    assert classify_entity_match(NO_ANSWER, 'Acme', backend) is True
    assert backend.requests == []
    assert classify_entity_match('Other Corp', 'Acme', backend) is False
    assert classify_entity_match('Acme', 'Acme', ScriptedBackend('Yes.')) is True
    with pytest.raises(ExtractionError):
        classify_entity_match('Acme', 'Acme', ScriptedBackend('maybe'))


def test_boundary_answers():
    assert classify_boundary(NO_ANSWER, NO_ANSWER, ScriptedBackend('x')) == CORPORATE_WIDE
    assert classify_boundary('a', 'b', ScriptedBackend('corporate_wide')) == CORPORATE_WIDE
    assert classify_boundary('a', 'b', ScriptedBackend('Non-corporate')) == NON_CORPORATE_WIDE
    with pytest.raises(ExtractionError):
        classify_boundary('a', 'b', ScriptedBackend('unsure'))


def test_extract_context_with_the_mock(store):
    extractor = _extractor(store)
    meta = make_meta()
    results = extractor.extract_context(_context(SAMPLE_SENTENCE), meta)
    assert [(r.raw['target_percent'], r.raw['scope']) for r in results] == [('30%', '12'),
                                                                          ('20%', '3')]
    assert all(r.entity_match and r.boundary == CORPORATE_WIDE for r in results)
    assert all(r.chunk_index == 0 and r.context == SAMPLE_SENTENCE for r in results)


def test_extract_context_flags_subsidiary_targets(store):
    text = 'Our German subsidiary plans to reduce absolute scope 1 emissions by 55% by 2030 from 2019.'
    (result,) = _extractor(store).extract_context(_context(text), make_meta())
    assert result.boundary == NON_CORPORATE_WIDE


def test_unparseable_reply_goes_to_rejects(store):
    extractor = _extractor(store, ScriptedBackend('I am not sure.'))
    rejects = []
    assert extractor.extract_context(_context(SAMPLE_SENTENCE, index=4), make_meta(),
                                     rejects) == []
    assert rejects[0]['doc_id'] == 'acme_sustainability_2023'
    assert rejects[0]['chunk'] == 4
    assert rejects[0]['raw_text'] == 'I am not sure.'
    extractor.extract_context(_context(SAMPLE_SENTENCE), make_meta())
    assert len(extractor.rejects) == 1


def test_prompt_uses_the_configured_sampling_and_k(store):
    backend = ScriptedBackend('[]')
    extractor = _extractor(store, backend, k_shots=3, temperature=0.7, top_p=0.95, top_k=40,
                           seed=11)
    extractor.extract_text(SAMPLE_SENTENCE)
    request = backend.requests[0]
    assert (request.temperature, request.top_p, request.top_k, request.seed) == (0.7, 0.95, 40, 11)
    assert request.prompt.count('Output: [') == 3
    extractor.extract_text(SAMPLE_SENTENCE, k=1)
    assert backend.requests[1].prompt.count('Output: [') == 1


def test_empty_store_is_a_config_error():
    with pytest.raises(ConfigError):
        _extractor([]).extract_text(SAMPLE_SENTENCE)


def test_extracted_commitment_dict_form(store):
    (first, _) = _extractor(store).extract_context(_context(SAMPLE_SENTENCE), make_meta())
    again = ExtractedCommitment.from_dict(first.to_dict())
    assert again == first
