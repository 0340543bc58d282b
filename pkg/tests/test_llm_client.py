import json

import pytest
import requests

from cai.errors import ConfigError, ExtractionError
from cai.llm_client import (INPUT_MARKER, OUTPUT_MARKER, TASK_BOUNDARY, TASK_ENTITY, LlmClient,
                            LlmRequest, MockLlmBackend, RateLimiter, RemoteLlmBackend,
                            TransientLlmError, call_llm, input_section)
from cai.prompting import boundary_prompt, entity_prompt

from conftest import FakeResponse, FakeSession, SAMPLE_SENTENCE


class FakeClock:
    def __init__(self):
        self.now = 0.0
        self.sleeps = []

    def __call__(self):
        return self.now

    def sleep(self, seconds):
        self.sleeps.append(seconds)
        self.now += seconds


def _remote(*replies):
    session = FakeSession(*replies)
    return RemoteLlmBackend('https://llm.example/complete', 'tok', session=session), session


def test_payload_defaults_are_deterministic_and_seed_is_optional():
    body = LlmRequest('prompt').payload()
    assert body == {'prompt': 'prompt', 'temperature': 0.0, 'top_p': 0.0, 'top_k': 1,
                    'max_tokens': 1024}
    assert LlmRequest('prompt', seed=7).payload()['seed'] == 7
    assert 'task' not in LlmRequest('prompt', task=TASK_ENTITY).payload()


def test_input_section_reads_between_markers():
    prompt = f'Example 1\nInput: other\n\n{INPUT_MARKER}\nthe context\n{OUTPUT_MARKER}\n'
    assert input_section(prompt).strip() == 'the context'
    assert input_section('no markers') == 'no markers'


def test_mock_answers_all_three_prompt_kinds():
    mock = MockLlmBackend()
    prompt = f'{INPUT_MARKER}\n{SAMPLE_SENTENCE}\n{OUTPUT_MARKER}\n'
    records = json.loads(mock.complete(LlmRequest(prompt)).text)
    assert [r['scope'] for r in records] == ['12', '3']
    entity = LlmRequest(entity_prompt('Nordwind Energy', 'Nordwind Energy plc'),
                        task=TASK_ENTITY)
    assert mock.complete(entity).text == 'yes'
    other = LlmRequest(entity_prompt('Orchid Germany', 'Kestrel Motors'), task=TASK_ENTITY)
    assert mock.complete(other).text == 'no'
    boundary = LlmRequest(boundary_prompt('emissions reduction',
                                          'Our German subsidiary plans to cut scope 1 emissions.'),
                          task=TASK_BOUNDARY)
    assert mock.complete(boundary).text == 'non_corporate_wide'


def test_mock_is_deterministic():
    prompt = f'{INPUT_MARKER}\n{SAMPLE_SENTENCE}\n{OUTPUT_MARKER}\n'
    assert MockLlmBackend().complete(LlmRequest(prompt)) == \
        MockLlmBackend().complete(LlmRequest(prompt))


def test_remote_success_sends_payload_and_token():
    backend, session = _remote(FakeResponse(payload={'text': '[]'}))
    assert backend.complete(LlmRequest('hello', seed=3)).text == '[]'
    call = session.calls[0]
    assert call['json']['seed'] == 3
    assert call['headers']['Authorization'] == 'Bearer tok'


@pytest.mark.parametrize('reply,transient', [
    (FakeResponse(status_code=429, text='slow down'), True),
    (FakeResponse(status_code=503, text='busy'), True),
    (requests.ConnectionError('reset'), True),
    (requests.Timeout('timed out'), True),
    (FakeResponse(status_code=401, text='bad token'), False),
    (FakeResponse(status_code=413, text='too long'), False),
    (FakeResponse(status_code=404, text='no route'), False),
    (FakeResponse(payload={'choices': []}), False),
])
def test_remote_error_classification(reply, transient):
    backend, _ = _remote(reply)
    with pytest.raises(ExtractionError) as info:
        backend.complete(LlmRequest('x'))
    assert isinstance(info.value, TransientLlmError) is transient


def test_remote_needs_a_url():
    with pytest.raises(ConfigError):
        RemoteLlmBackend(None)


def test_client_retries_transient_failures_with_doubling_backoff():
    clock = FakeClock()
    backend, session = _remote(FakeResponse(status_code=503), FakeResponse(status_code=503),
                               FakeResponse(payload={'text': 'ok'}))
    client = LlmClient(backend, max_attempts=3, backoff_seconds=1.0,
                       sleep=clock.sleep, clock=clock)
    assert client.complete(LlmRequest('x')).text == 'ok'
    assert len(session.calls) == 3
    assert clock.sleeps == [1.0, 2.0]


def test_client_gives_up_after_max_attempts_with_provenance():
    clock = FakeClock()
    backend, session = _remote(FakeResponse(status_code=500))
    client = LlmClient(backend, max_attempts=3, backoff_seconds=0.5,
                       sleep=clock.sleep, clock=clock)
    with pytest.raises(ExtractionError) as info:
        client.complete(LlmRequest('x'), {'doc_id': 'acme', 'chunk': 2})
    assert len(session.calls) == 3
    assert clock.sleeps == [0.5, 1.0]
    assert 'after 3 attempts' in info.value.message
    assert info.value.provenance == {'doc_id': 'acme', 'chunk': 2}


def test_client_does_not_retry_auth_failures():
    clock = FakeClock()
    backend, session = _remote(FakeResponse(status_code=403))
    client = LlmClient(backend, sleep=clock.sleep, clock=clock)
    with pytest.raises(ExtractionError):
        client.complete(LlmRequest('x'))
    assert len(session.calls) == 1
    assert clock.sleeps == []


def test_rate_limiter_waits_for_the_window():
    clock = FakeClock()
    limiter = RateLimiter(2, clock=clock, sleep=clock.sleep)
    limiter.acquire()
    clock.now = 10.0
    limiter.acquire()
    limiter.acquire()
    assert clock.sleeps == [50.0]
    assert clock.now == 60.0


def test_client_from_config_builds_the_selected_backend(make_config, monkeypatch):
    assert isinstance(LlmClient.from_config(make_config()).backend, MockLlmBackend)
    monkeypatch.setenv('CAI_LLM_URL', 'https://llm.example/complete')
    remote = LlmClient.from_config(make_config(llm__backend='remote'))
    assert isinstance(remote.backend, RemoteLlmBackend)
    monkeypatch.delenv('CAI_LLM_URL')
    with pytest.raises(ConfigError):
        LlmClient.from_config(make_config(llm__backend='remote'))


def test_call_llm_wraps_a_bare_backend():
    prompt = f'{INPUT_MARKER}\n{SAMPLE_SENTENCE}\n{OUTPUT_MARKER}\n'
    assert len(json.loads(call_llm(LlmRequest(prompt), MockLlmBackend()).text)) == 2
