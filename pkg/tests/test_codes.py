import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from addgp.codes import CodeDomainError, _lexicode_scan, _random_greedy, pairwise_min_distance, vg_code
from oracles import greedy_code


def to_int(w):
    return int("".join("1" if b else "0" for b in w), 2)


@pytest.mark.parametrize("M,d", [(8, 1), (8, 3), (9, 2), (10, 3), (11, 4), (12, 3), (12, 5)])
def test_matches_exhaustive_greedy(M, d):
    code = vg_code(M, d)
    assert [to_int(w) for w in code.words] == greedy_code(M, d)


def test_all_strings_at_distance_one():
    code = vg_code(8, 1)
    assert len(code) == 256


def test_m16_d2_count():
    code = vg_code(16, 2)
    assert len(code) >= 4
    assert len(code) == 2**15  # even-weight code, as the exhaustive greedy gives


@pytest.mark.parametrize("M", [8, 16, 24, 32, 48, 64])
def test_vg_guarantee(M):
    d = math.ceil(M / 8)
    code = vg_code(M, d)
    assert len(code) >= 2 ** (M / 8)
    assert not code.words[0].any()
    assert pairwise_min_distance(code.words) >= d


@given(st.integers(8, 14), st.integers(1, 6), st.integers(1, 40))
def test_distance_postcondition(M, d, max_words):
    code = vg_code(M, min(d, M), max_words=max_words)
    assert len(code) <= max_words
    assert pairwise_min_distance(code.words) >= min(d, M)
    assert code.as_strings()[0] == "0" * M


def test_domain_errors():
    with pytest.raises(CodeDomainError):
        vg_code(7, 1)
    with pytest.raises(CodeDomainError):
        vg_code(10, 11)
    with pytest.raises(CodeDomainError):
        vg_code(10, 0)


def test_scan_budget_fallback():
    assert _lexicode_scan(40, 6, 64, budget=10) is None
    words = _random_greedy(40, 6, 16, seed=3)
    assert len(words) == 16
    assert pairwise_min_distance(words) >= 6
    assert np.array_equal(words, _random_greedy(40, 6, 16, seed=3))
