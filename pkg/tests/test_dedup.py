import random

import pytest

from cai.dedup import (Cluster, UnionFind, _vote, cluster, consolidate, deduplicate,
                       similarity)
from cai.embedding import BaselineEmbedder, CachedEmbedder
from cai.errors import DedupError

from conftest import SAMPLE_SENTENCE, make_meta, make_scored


def test_identical_records_collapse():
    first, second = make_scored(chunk_index=0), make_scored(chunk_index=1)
    assert similarity(first, second).score == pytest.approx(1.0)
    result = deduplicate([first, second])
    assert len(result.final) == 1
    assert result.final[0].confidence == 1.0


def test_missing_scope_is_filled_by_the_cluster():
    complete = make_scored(chunk_index=0)
    partial = make_scored(chunk_index=1, scope='NO_ANSWER')
    breakdown = similarity(complete, partial)
    assert breakdown.exact_components['scope'] is None
    assert breakdown.applicable_count == 6
    (merged,) = deduplicate([partial, complete]).final
    assert merged.record.scope == '12'
    assert merged.confidence == 1.0
    assert merged.error_codes == ()


def test_entity_named_on_one_side_only_is_left_out_of_the_score():
    named = make_scored(chunk_index=0, entity_name='Acme')
    unnamed = make_scored(chunk_index=1)
    breakdown = similarity(named, unnamed)
    assert breakdown.text_components['entity_name'] is None
    assert breakdown.applicable_count == 7
    assert breakdown.score == pytest.approx(1.0)


def test_different_metrics_stay_apart():
    twelve = make_scored()
    three = make_scored(target_percent='20%', scope='scope 3')
    assert similarity(twelve, three).score == pytest.approx(5 / 7)
    final = deduplicate([twelve, three]).final
    assert sorted(rec.record.scope for rec in final) == ['12', '3']
    assert all(rec.record.context == SAMPLE_SENTENCE for rec in final)


def test_records_of_different_companies_are_not_compared():
    other = make_scored(meta=make_meta(company_id='globex', company_name='Globex'))
    with pytest.raises(DedupError):
        similarity(make_scored(), other)


def test_same_metrics_keep_the_most_confident_record():
    weaker = make_scored(context='An unrelated paragraph about offices.',
                         sub_context='An unrelated paragraph about offices.')
    strong = make_scored()
    assert weaker.confidence < strong.confidence
    result = deduplicate([weaker, strong], threshold=1.0)
    assert result.final == [strong]
    assert [row['kept'] for row in result.debug] == [False, True]


def test_debug_rows_follow_input_order_with_company_cluster_ids():
    globex = make_meta(company_id='globex', company_name='Globex')
    rows = deduplicate([make_scored(), make_scored(meta=globex), make_scored(chunk_index=2)]).debug
    assert [row['cluster_id'] for row in rows] == ['acme-0', 'globex-0', 'acme-0']
    assert all(row['kept'] for row in rows)
    assert rows[2]['chunk_index'] == 2


def test_final_records_are_ordered_by_confidence():
    low = make_scored(target_percent='45%', scope='scope 2')
    high = make_scored()
    final = deduplicate([low, high]).final
    assert [rec.confidence for rec in final] == sorted((low.confidence, high.confidence),
                                                       reverse=True)


def test_vote_ties_go_to_the_best_ranked_member():
    assert _vote([('x', 1), ('y', 0)]) == 'y'
    assert _vote([('a', 0), ('b', 1), ('b', 2)]) == 'b'
    assert _vote([]) is None


def test_consolidate_refuses_an_empty_cluster():
    with pytest.raises(DedupError):
        consolidate(Cluster((), ()))


def test_union_find():
    uf = UnionFind(5)
    uf.union(0, 1)
    uf.union(3, 4)
    uf.union(1, 4)
    assert len({uf.find(i) for i in (0, 1, 3, 4)}) == 1
    assert uf.find(2) == 2


def _components(records, threshold, backend):
    """Brute-force connected components by depth-first search."""
    size = len(records)
    adjacent = {i: [j for j in range(size) if j != i and
                    similarity(records[i], records[j], backend).score > threshold]
                for i in range(size)}
    seen, groups = set(), []
    for start in range(size):
        if start in seen:
            continue
        stack, group = [start], []
        seen.add(start)
        while stack:
            node = stack.pop()
            group.append(node)
            for other in adjacent[node]:
                if other not in seen:
                    seen.add(other)
                    stack.append(other)
        groups.append(sorted(group))
    return sorted(groups)


def test_clusters_match_connected_components():
    rng = random.Random(3)
    backend = CachedEmbedder(BaselineEmbedder(64))
    wordings = ['absolute emissions reduction', 'emissions intensity reduction']
    for _ in range(200):
        records = []
        for n in range(rng.randint(1, 7)):
            records.append(make_scored(
                chunk_index=n,
                target_year=rng.choice(['2030', '2035', 'NO_ANSWER']),
                base_year=rng.choice(['2015', '2019']),
                target_percent=rng.choice(['30%', '20%', 'NO_ANSWER']),
                scope=rng.choice(['scope 1 and 2', 'scope 3']),
                target_wording=rng.choice(wordings)))
        threshold = rng.choice([0.5, 0.7, 0.95])
        found = sorted(sorted(group.members) for group in cluster(records, threshold, backend))
        assert found == _components(records, threshold, backend)
