"""
n-block chains (V_n, P_n), word measures and Δ_n.

V_n holds the length-n words of positive probability, in lexicographic order
of state indices. P_n shifts a word by one symbol: P_n(u, v) = P(u_n, v_n)
when u_2..u_n equals v_1..v_{n-1}.
"""

import math
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix

from src.chain_core import MarkovChain, validate_chain
from src.errors import CapExceeded, InvalidChain, InvalidWord
from src.utils import WORD_SEPARATOR, separator_labels, word_label

logger = logging.getLogger(__name__)

DEFAULT_NBLOCK_CAP = 2 ** 20
CODE_LIMIT = 2 ** 62

Word = Tuple[int, ...]


def make_word(chain: MarkovChain, symbols: Sequence[int]) -> Word:
    """Validate symbols as a word of positive probability"""
    word = tuple(int(s) for s in symbols)
    if not word:
        raise InvalidWord("Words have length at least 1")
    if any(s < 0 or s >= chain.size for s in word):
        raise InvalidWord(f"Word {word} has symbols outside 0..{chain.size - 1}")
    if mu_log_prob(chain, word) == -math.inf:
        raise InvalidWord(f"Word {word_label(word, chain.states)} has probability zero")
    return word


def mu_log_prob(chain: MarkovChain, word: Sequence[int]) -> float:
    """log μ(u) = log π(u_1) + Σ log P(u_j, u_{j+1}); -inf for a forbidden word"""
    symbols = [int(s) for s in word]
    if not symbols:
        raise InvalidWord("Words have length at least 1")
    if any(s < 0 or s >= chain.size for s in symbols):
        raise InvalidWord(f"Word {tuple(symbols)} has symbols outside 0..{chain.size - 1}")

    support = chain.support
    total = math.log(chain.stationary[symbols[0]])
    for a, b in zip(symbols, symbols[1:]):
        if not support[a, b]:
            return -math.inf
        total += math.log(chain.transition[a, b])
    return total


def enumerate_words(chain: MarkovChain, n: int, cap: int = DEFAULT_NBLOCK_CAP) -> Tuple[np.ndarray, np.ndarray]:
    """
    Words of V_n in lexicographic order together with their log-measures.

    Extends every word along the positive transitions of its last symbol, one
    length at a time; np.nonzero visits rows in order and columns ascending, so
    the order is the depth-first lexicographic order.
    """
    if n < 1:
        raise ValueError(f"Block length must be at least 1, got {n}")
    if chain.size > cap:
        raise CapExceeded('n-block words', chain.size, cap)

    support = chain.support
    log_transition = chain.log_transition()
    words = np.arange(chain.size, dtype=np.int64).reshape(-1, 1)
    log_mu = np.log(chain.stationary)

    for _ in range(2, n + 1):
        last = words[:, -1]
        found = int(support[last].sum())
        if found > cap:
            raise CapExceeded('n-block words', found, cap)
        parent, symbol = np.nonzero(support[last])
        words = np.column_stack([words[parent], symbol.astype(np.int64)])
        log_mu = log_mu[parent] + log_transition[last[parent], symbol]

    return words, log_mu


@dataclass(frozen=True, eq=False)
class NBlockChain:
    base: MarkovChain
    n: int
    words: np.ndarray
    transition: csr_matrix
    pi_n: np.ndarray
    log_mu: np.ndarray
    successor_table: np.ndarray
    codes: Optional[np.ndarray]
    lookup: Optional[Dict[Word, int]]

    @property
    def size(self) -> int:
        return self.words.shape[0]

    def word(self, index: int) -> Word:
        return tuple(int(s) for s in self.words[index])

    def labels(self) -> List[str]:
        return [word_label(row, self.base.states) for row in self.words]

    def index_of(self, word: Sequence[int]) -> int:
        word = tuple(int(s) for s in word)
        if len(word) != self.n:
            raise InvalidWord(f"Expected a word of length {self.n}, got {len(word)}")
        if self.codes is not None:
            code = _word_code(word, self.base.size)
            index = int(np.searchsorted(self.codes, code))
            if index < self.size and self.codes[index] == code:
                return index
        elif word in self.lookup:
            return self.lookup[word]
        raise InvalidWord(f"Word {word_label(word, self.base.states)} is not in V_{self.n}")

    def to_chain_dict(self) -> Dict[str, List]:
        return {
            'states': self.labels(),
            'transition': self.transition.toarray().tolist()
        }

    def to_chain(self) -> MarkovChain:
        return validate_chain(self.transition.toarray(), self.labels())


def _word_code(word: Sequence[int], base: int) -> int:
    code = 0
    for symbol in word:
        code = code * base + int(symbol)
    return code


def build_nblock_chain(chain: MarkovChain, n: int, cap: int = DEFAULT_NBLOCK_CAP) -> NBlockChain:
    """Materialize (V_n, P_n) with π_n(u) = μ(u)"""
    ambiguous = separator_labels(chain.states)
    if n >= 2 and ambiguous:
        raise InvalidChain(f"State labels containing '{WORD_SEPARATOR}' make {n}-block labels ambiguous: "
                           f"{', '.join(ambiguous)}")
    words, log_mu = enumerate_words(chain, n, cap)
    size = words.shape[0]
    k = chain.size

    codes = None
    lookup = None
    if k ** n < CODE_LIMIT:
        codes = np.zeros(size, dtype=np.int64)
        for column in range(n):
            codes = codes * k + words[:, column]
    else:
        lookup = {tuple(int(s) for s in row): i for i, row in enumerate(words)}

    last = words[:, -1]
    parent, symbol = np.nonzero(chain.support[last])
    if codes is not None:
        target_codes = (codes[parent] % (k ** (n - 1))) * k + symbol
        targets = np.searchsorted(codes, target_codes)
    else:
        targets = np.array([
            lookup[tuple(int(s) for s in words[p, 1:]) + (int(s_next),)]
            for p, s_next in zip(parent, symbol)
        ], dtype=np.int64)

    data = chain.transition[last[parent], symbol]
    transition = csr_matrix((data, (parent, targets)), shape=(size, size))

    successor_table = np.full((size, k), -1, dtype=np.int64)
    successor_table[parent, symbol] = targets

    for array in (words, log_mu, successor_table):
        array.setflags(write=False)
    pi_n = np.exp(log_mu)
    pi_n.setflags(write=False)

    logger.info(f"Built {n}-block chain with {size} words ({transition.nnz} transitions)")
    return NBlockChain(
        base=chain, n=n, words=words, transition=transition, pi_n=pi_n, log_mu=log_mu,
        successor_table=successor_table, codes=codes, lookup=lookup
    )


def log_delta_exact(chain: MarkovChain, n: int) -> float:
    """
    log Δ_n from Δ_n = (π∘π)ᵀ Q^{n-1} 1 with Q = P∘P.

    The propagated vector is renormalized after every product and the log of the
    scale is accumulated, so the value stays finite long after Δ_n underflows.
    """
    if n < 1:
        raise ValueError(f"Block length must be at least 1, got {n}")
    Q_transposed = csr_matrix(np.where(chain.support, chain.transition ** 2, 0.0).T)
    vector = chain.stationary ** 2
    log_scale = 0.0
    for _ in range(n - 1):
        vector = Q_transposed @ vector
        total = float(vector.sum())
        log_scale += math.log(total)
        vector = vector / total
    return log_scale + math.log(float(vector.sum()))


def delta_exact(chain: MarkovChain, n: int) -> float:
    return math.exp(log_delta_exact(chain, n))


def delta_enumerate(chain: MarkovChain, n: int, cap: int = DEFAULT_NBLOCK_CAP) -> float:
    """Δ_n = Σ_{u in V_n} μ(u)², by brute-force enumeration"""
    _, log_mu = enumerate_words(chain, n, cap)
    return math.fsum(np.exp(2.0 * log_mu).tolist())
