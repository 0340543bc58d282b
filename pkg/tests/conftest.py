import json
from pathlib import Path

import pytest
import requests

from cai.config import PipelineConfig
from cai.corpus import DocumentMeta
from cai.validate import normalize, score

DATA_DIR = Path(__file__).resolve().parent.parent / 'data'
EXAMPLES = DATA_DIR / 'examples.jsonl'
GOLDEN = DATA_DIR / 'golden.jsonl'
CORPUS = DATA_DIR / 'corpus'
SAMPLE = DATA_DIR / 'sample' / 'sbti_sample.txt'

SAMPLE_SENTENCE = ('We plan to reduce absolute scope 1 and 2 emissions by 30% and scope 3 '
                   'emissions by 20% by 2030 from 2015.')


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text=''):
        self.status_code = status_code
        self._payload = payload
        self.text = text or (json.dumps(payload) if payload is not None else '')

    def json(self):
        if self._payload is None:
            raise ValueError('no JSON body')
        return self._payload


class FakeSession:
    """Replays queued responses (or raises queued exceptions) and records every post."""

    def __init__(self, *replies):
        self.replies = list(replies)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({'url': url, 'json': json, 'headers': headers, 'timeout': timeout})
        reply = self.replies.pop(0) if len(self.replies) > 1 else self.replies[0]
        if isinstance(reply, Exception):
            raise reply
        if callable(reply):
            return reply(json)
        return reply


@pytest.fixture
def fake_session():
    return FakeSession


@pytest.fixture
def connection_error():
    return requests.ConnectionError('connection reset')


@pytest.fixture
def make_config(tmp_path):
    def build(**overrides):
        values = {
            'paths.output': str(tmp_path / 'out'),
            'paths.examples': str(EXAMPLES),
            'paths.golden': str(GOLDEN),
        }
        values.update({key.replace('__', '.'): value for key, value in overrides.items()})
        return PipelineConfig(values)
    return build


def make_meta(company_id='acme', company_name='Acme Industries', report_type='sustainability',
              year=2023, source_path=''):
    return DocumentMeta(company_id, company_name, report_type, year, source_path)


def make_scored(context=SAMPLE_SENTENCE, meta=None, chunk_index=0, entity_match=True,
                boundary='corporate_wide', **raw_fields):
    """A scored record built from raw field strings through normalize and score."""
    raw = {
        'target_year': '2030', 'base_year': '2015', 'target_percent': '30%',
        'target_type': 'absolute', 'scope': '12',
        'target_wording': 'absolute emissions reduction',
        'sub_context': SAMPLE_SENTENCE, 'entity_name': 'NO_ANSWER',
    }
    raw.update(raw_fields)
    rec = normalize(raw, meta or make_meta(), chunk_index, context)
    return score(rec, context, entity_match, boundary)
