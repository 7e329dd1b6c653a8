"""Chain corpus shared by the test modules"""

import math
from functools import lru_cache
from typing import Dict, List

import numpy as np

from src.chain_core import MarkovChain, parry_chain, validate_chain

PHI = (1.0 + math.sqrt(5.0)) / 2.0

LN2 = 0.6931471805599453
BIASED_L = 0.47000362924573563
BIASED_H = 0.5623351446188083
GOLDEN_L = 0.4812118250596035

ADJACENCIES = {
    'golden': [[1, 1], [1, 0]],
    'cycle3': [[1, 1, 0], [0, 1, 1], [1, 0, 1]],
    'graph4': [[0, 1, 1, 0], [0, 0, 1, 1], [1, 0, 0, 1], [1, 1, 0, 0]],
    'complete5': [[0 if i == j else 1 for j in range(5)] for i in range(5)],
    'ring6': [[1 if j in (i, (i + 1) % 6, (i + 3) % 6) else 0 for j in range(6)] for i in range(6)],
}


def labels(size: int) -> List[str]:
    return [chr(ord('a') + i) for i in range(size)]


def uniform_chain(size: int = 2) -> MarkovChain:
    return validate_chain(np.full((size, size), 1.0 / size), labels(size))


def biased_chain(p: float = 0.75) -> MarkovChain:
    return validate_chain([[p, 1.0 - p], [p, 1.0 - p]], ['a', 'b'])


def golden_mean_chain() -> MarkovChain:
    return parry_chain(ADJACENCIES['golden'], ['1', '2'])


def single_state_chain() -> MarkovChain:
    return validate_chain([[1.0]], ['a'])


def two_state_chain() -> MarkovChain:
    return validate_chain([[0.7, 0.3], [0.4, 0.6]], ['a', 'b'])


def random_chain(size: int, seed: int) -> MarkovChain:
    rng = np.random.default_rng(seed)
    rows = rng.dirichlet(np.ones(size), size=size)
    rows[:, -1] = 1.0 - rows[:, :-1].sum(axis=1)
    return validate_chain(rows, labels(size))


def perturbed(chain: MarkovChain) -> MarkovChain:
    """Move 0.05-0.15 of mass from each row's largest entry to another supported entry"""
    transition = np.array(chain.transition)
    size = chain.size
    for row in range(size):
        support = np.flatnonzero(chain.support[row])
        if support.size < 2:
            continue
        top = int(np.argmax(transition[row]))
        other = int(support[support != top][0])
        delta = 0.05 + 0.1 * row / max(1, size - 1)
        transition[row, top] -= delta
        transition[row, other] += delta
    return validate_chain(transition, chain.states)


@lru_cache(maxsize=None)
def corpus() -> Dict[str, MarkovChain]:
    chains = {
        'single': single_state_chain(),
        'uniform2': uniform_chain(2),
        'uniform3': uniform_chain(3),
        'biased': biased_chain(),
        'two_state': two_state_chain(),
    }
    for name, adjacency in ADJACENCIES.items():
        size = len(adjacency)
        parry = parry_chain(adjacency, labels(size) if name != 'golden' else ['1', '2'])
        chains[f'parry_{name}'] = parry
        chains[f'perturbed_{name}'] = perturbed(parry)
    for size, seed in [(2, 11), (3, 12), (4, 13), (5, 14), (6, 15), (3, 16), (4, 17)]:
        chains[f'random{size}_{seed}'] = random_chain(size, seed)
    return chains


CORPUS_NAMES = [
    'single', 'uniform2', 'uniform3', 'biased', 'two_state',
    *[f'{kind}_{name}' for name in ADJACENCIES for kind in ('parry', 'perturbed')],
    *[f'random{size}_{seed}' for size, seed in [(2, 11), (3, 12), (4, 13), (5, 14), (6, 15), (3, 16), (4, 17)]],
]

MME_NAMES = {'single', 'uniform2', 'uniform3', *[f'parry_{name}' for name in ADJACENCIES]}


def randomly_perturbed(chain: MarkovChain, rng: np.random.Generator) -> MarkovChain:
    """Move 0.05-0.15 of mass from each row's largest entry to a random other supported entry"""
    transition = np.array(chain.transition)
    for row in range(chain.size):
        support = np.flatnonzero(chain.support[row])
        if support.size < 2:
            continue
        top = int(np.argmax(transition[row]))
        other = int(rng.choice(support[support != top]))
        delta = rng.uniform(0.05, 0.15)
        transition[row, top] -= delta
        transition[row, other] += delta
    return validate_chain(transition, chain.states)
