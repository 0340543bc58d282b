import numpy as np
import pytest

from cai.embedding import (BaselineEmbedder, CachedEmbedder, RemoteEmbedder, cosine, embed,
                           fnv1a_64, tokenize)
from cai.errors import BackendError, ConfigError, ContractError

from conftest import FakeResponse, FakeSession


def test_fnv1a_reference_values():
    assert fnv1a_64(b'') == 0xcbf29ce484222325
    assert fnv1a_64(b'a') == 0xaf63dc4c8601ec8c


def test_tokenize_lowercases_and_splits_on_non_alphanumerics():
    assert tokenize('Net-Zero by FY2030, Scope 1&2!') == ['net', 'zero', 'by', 'fy2030',
                                                         'scope', '1', '2']


def test_baseline_vectors_are_unit_length_and_deterministic():
    embedder = BaselineEmbedder()
    a = embedder.embed('absolute emissions reduction')
    b = BaselineEmbedder().embed('absolute emissions reduction')
    assert a.shape == (1024,)
    assert np.linalg.norm(a) == pytest.approx(1.0)
    assert np.array_equal(a, b)


def test_empty_text_embeds_to_zero_and_cosine_is_zero():
    embedder = BaselineEmbedder()
    zero = embedder.embed('')
    assert not zero.any()
    assert cosine(zero, embedder.embed('carbon')) == 0.0


def test_cosine_properties():
    embedder = BaselineEmbedder()
    a = embedder.embed('net zero emissions')
    b = embedder.embed('absolute emissions reduction')
    assert cosine(a, a) == pytest.approx(1.0)
    assert cosine(a, b) == pytest.approx(cosine(b, a))
    assert -1.0 <= cosine(a, -b) <= 1.0
    assert cosine(a, -a) == pytest.approx(-1.0)
    with pytest.raises(ContractError):
        cosine(np.ones(3), np.ones(4))


def test_embed_helper_uses_the_backend():
    assert np.array_equal(embed('scope 3', BaselineEmbedder(64)), BaselineEmbedder(64).embed('scope 3'))


def test_remote_embedder_normalizes_and_checks_shape():
    session = FakeSession(FakeResponse(payload={'vectors': [[3.0, 4.0], [0.0, 0.0]]}))
    embedder = RemoteEmbedder('https://embed.example', 'tok', dimension=2, session=session)
    first, second = embedder.embed_many(['a', 'b'])
    assert np.allclose(first, [0.6, 0.8])
    assert not second.any()
    assert session.calls[0]['json'] == {'texts': ['a', 'b']}
    assert session.calls[0]['headers']['Authorization'] == 'Bearer tok'


@pytest.mark.parametrize('reply', [
    FakeResponse(payload={'vectors': [[1.0, 0.0, 0.0]]}),
    FakeResponse(payload={'vectors': []}),
    FakeResponse(payload={'wrong': []}),
    FakeResponse(status_code=500, text='boom'),
])
def test_remote_embedder_failures(reply):
    embedder = RemoteEmbedder('https://embed.example', dimension=2, session=FakeSession(reply))
    with pytest.raises(BackendError):
        embedder.embed('a')


def test_remote_embedder_needs_a_url():
    with pytest.raises(ConfigError):
        RemoteEmbedder(None)


def test_cached_embedder_calls_backend_once_per_text():
    class Counting(BaselineEmbedder):
        def __init__(self):
            super().__init__(32)
            self.seen = []

        def embed_many(self, texts):
            self.seen.extend(texts)
            return super().embed_many(texts)

    backend = Counting()
    cached = CachedEmbedder(backend)
    first = cached.embed_many(['x', 'y', 'x'])
    second = cached.embed('y')
    assert backend.seen == ['x', 'y']
    assert np.array_equal(first[0], first[2])
    assert np.array_equal(second, first[1])
    assert cached.dimension == 32


def test_disjoint_token_buckets_have_zero_cosine():
    embedder = BaselineEmbedder(1024)
    left = ['reduce', 'emissions']
    taken = {embedder.bucket(t) for t in left}
    right = [t for t in ('cafeteria', 'menu', 'changed', 'food', 'waste')
             if embedder.bucket(t) not in taken][:2]
    assert right
    assert cosine(embedder.embed(' '.join(left)), embedder.embed(' '.join(right))) == 0.0
