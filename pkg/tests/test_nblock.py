import math

import numpy as np
import pytest
from scipy.stats import linregress

from src.chain_core import coalescence_exponent, validate_chain
from src.errors import CapExceeded, InvalidChain, InvalidWord
from src.nblock import (
    build_nblock_chain, delta_enumerate, delta_exact, enumerate_words, log_delta_exact, make_word, mu_log_prob
)
from tests.chains import CORPUS_NAMES, LN2

ORACLE_WORD_LIMIT = 2 ** 16


def test_mu_log_prob_uniform(uniform):
    assert mu_log_prob(uniform, [0, 1, 1, 0, 1]) == pytest.approx(-5 * LN2, abs=1e-12)


def test_mu_log_prob_single_symbol(golden):
    assert mu_log_prob(golden, [1]) == pytest.approx(math.log(golden.stationary[1]), abs=1e-15)


def test_mu_log_prob_forbidden_word(golden):
    assert mu_log_prob(golden, [1, 1]) == -math.inf


def test_make_word_rejects_forbidden_and_out_of_range(golden):
    with pytest.raises(InvalidWord):
        make_word(golden, [0, 1, 1])
    with pytest.raises(InvalidWord):
        make_word(golden, [0, 2])
    assert make_word(golden, [0, 1, 0]) == (0, 1, 0)


def test_one_block_chain_is_the_base_chain(biased):
    nb = build_nblock_chain(biased, 1)
    assert np.allclose(nb.transition.toarray(), biased.transition, atol=0.0)
    assert nb.pi_n == pytest.approx(biased.stationary, abs=1e-15)


def test_uniform_three_block_chain(uniform):
    nb = build_nblock_chain(uniform, 3)
    dense = nb.transition.toarray()
    assert nb.size == 8
    assert all(sorted(row[row > 0].tolist()) == [0.5, 0.5] for row in dense)
    assert nb.pi_n == pytest.approx(np.full(8, 1 / 8), abs=1e-15)


def test_golden_mean_three_block_count(golden):
    nb = build_nblock_chain(golden, 3)
    assert nb.size == 5
    assert all(not (a == 1 and b == 1) for word in nb.words for a, b in zip(word, word[1:]))


def test_words_are_lexicographic(golden):
    words = [tuple(row) for row in build_nblock_chain(golden, 5).words.tolist()]
    assert words == sorted(words)


@pytest.mark.parametrize("name", CORPUS_NAMES)
def test_nblock_invariants(chain_corpus, name):
    chain = chain_corpus[name]
    n = 3
    nb = build_nblock_chain(chain, n)
    dense = nb.transition.toarray()

    assert np.allclose(dense.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(nb.pi_n @ dense, nb.pi_n, atol=1e-10)
    out_degree = chain.support.sum(axis=1)
    assert np.array_equal((dense > 0).sum(axis=1), out_degree[nb.words[:, -1]])

    rows, cols = np.nonzero(dense)
    assert np.array_equal(nb.words[rows, 1:], nb.words[cols, :-1])

    longer = {tuple(row) for row in build_nblock_chain(chain, n + 1).words.tolist()}
    current = {tuple(row) for row in nb.words.tolist()}
    assert {word[:n] for word in longer} <= current


def test_index_of_and_labels(golden):
    nb = build_nblock_chain(golden, 3)
    for i in range(nb.size):
        assert nb.index_of(nb.word(i)) == i
    assert nb.labels()[0] == '1-1-1'
    with pytest.raises(InvalidWord):
        nb.index_of((1, 1, 0))
    with pytest.raises(InvalidWord):
        nb.index_of((0, 0))


def test_successor_table_follows_the_shift(golden):
    nb = build_nblock_chain(golden, 3)
    for i in range(nb.size):
        for symbol in range(golden.size):
            target = nb.successor_table[i, symbol]
            if golden.support[nb.words[i, -1], symbol]:
                assert nb.word(target) == nb.word(i)[1:] + (symbol,)
            else:
                assert target == -1


def test_nblock_chain_revalidates(golden):
    nb = build_nblock_chain(golden, 2)
    chain = nb.to_chain()
    assert chain.states == ('1-1', '1-2', '2-1')
    assert chain.stationary == pytest.approx(nb.pi_n, abs=1e-10)
    assert nb.to_chain_dict()['states'] == list(chain.states)


def test_separator_in_labels_is_rejected_for_blocks():
    chain = validate_chain([[0.5, 0.5], [0.5, 0.5]], ['a-b', 'a'])
    assert build_nblock_chain(chain, 1).labels() == ['a-b', 'a']
    with pytest.raises(InvalidChain):
        build_nblock_chain(chain, 2)


def test_exported_block_chain_rebuilds_at_n_one(golden):
    chain = build_nblock_chain(golden, 2).to_chain()
    assert build_nblock_chain(chain, 1).size == 3
    with pytest.raises(InvalidChain):
        build_nblock_chain(chain, 2)


def test_cap_exceeded_reports_the_count(uniform):
    with pytest.raises(CapExceeded) as info:
        build_nblock_chain(uniform, 5, cap=16)
    assert info.value.found == 32
    assert info.value.cap == 16


def test_enumerate_words_log_measures(biased):
    words, log_mu = enumerate_words(biased, 2)
    assert [tuple(w) for w in words.tolist()] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert np.exp(log_mu) == pytest.approx([0.5625, 0.1875, 0.1875, 0.0625], abs=1e-15)


def test_delta_uniform_closed_form(uniform):
    for n in range(1, 16):
        assert delta_exact(uniform, n) == pytest.approx(2.0 ** -n, rel=1e-12)
    assert delta_enumerate(uniform, 4) == pytest.approx(1 / 16, rel=1e-15)


def test_delta_biased_two_blocks(biased):
    assert delta_enumerate(biased, 2) == pytest.approx(0.390625, abs=1e-15)
    assert delta_exact(biased, 2) == pytest.approx(0.390625, abs=1e-15)


def test_delta_one_block_is_collision_probability(golden):
    expected = float(np.sum(golden.stationary ** 2))
    assert delta_exact(golden, 1) == pytest.approx(expected, rel=1e-14)
    assert delta_enumerate(golden, 1) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("name", CORPUS_NAMES)
def test_delta_matches_enumeration(chain_corpus, name):
    chain = chain_corpus[name]
    for n in range(1, 13):
        if chain.size ** n > ORACLE_WORD_LIMIT:
            break
        exact = delta_exact(chain, n)
        assert abs(exact - delta_enumerate(chain, n)) <= 1e-10 * exact


@pytest.mark.parametrize("name", CORPUS_NAMES)
def test_delta_exponent_converges_to_minus_l(chain_corpus, name):
    chain = chain_corpus[name]
    L = coalescence_exponent(chain).L
    ns = np.arange(8, 41)
    fit = linregress(ns, [log_delta_exact(chain, int(n)) for n in ns])
    if L == 0.0:
        assert abs(fit.slope) <= 1e-12
    else:
        assert abs(fit.slope + L) <= 0.01 * L


def test_log_delta_stays_finite_past_underflow(uniform):
    assert log_delta_exact(uniform, 2000) == pytest.approx(-2000 * LN2, rel=1e-12)
    assert delta_exact(uniform, 2000) == 0.0
