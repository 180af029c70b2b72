"""Built-in test problems with known factors and fixed starting points.

* ``example_one``: rank-two 3x3x3 tensor; the starting point is either the
  true factors with the columns of B swapped or uniform random factors.
* ``example_two``: rank-three 2x2x2 tensor approximated at rank 2 or 3
  from a fixed, printed starting point.
* ``example_three``: order-5 rank-3 tensor whose second and third factors
  each carry a nearly collinear column pair, so the Khatri-Rao products the
  solver sees are close to rank deficient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cpswamp.cp_model import FactorSet
from cpswamp.solvers import random_init
from cpswamp.tensor_core import DenseTensor, from_rank_one_sum

EX1_A = np.array([[1.0, 2.0], [2.0, 1.0], [3.0, 2.0]])
EX1_B = np.array([[2.0, 1.0], [-1.0, 3.0], [1.0, -1.0]])
EX1_C = np.array([[3.0, 1.0], [1.0, 2.0], [2.0, 2.0]])
SWAP2 = np.array([[0.0, 1.0], [1.0, 0.0]])

EX2_A = np.array([[1.0, 2.0, 3.0], [2.0, 1.0, 2.0]])
EX2_B = np.array([[2.0, 1.0, 1.0], [-1.0, 3.0, 1.0]])
EX2_C = np.array([[3.0, 1.0, 2.0], [1.0, 2.0, -1.0]])
EX2_A0 = np.array([[0.1679, 0.7127], [0.9787, 0.5005]])
EX2_B0 = np.array([[0.4711, 0.6820], [0.0596, 0.0424]])
EX2_C0 = np.array([[0.0714, 0.0967], [0.5216, 0.8181]])
# third columns for the rank-3 run; the printed start only covers rank 2
EX2_EXTRA_SEED = 3

EX3_DIMS = (2, 3, 3, 3, 3)
EX3_RANK = 3
EX3_SEED = 20
EX3_INIT_SEED = 1020
EX3_COSINE = 1.0 - 1e-6


@dataclass(frozen=True)
class Problem:
    name: str
    tensor: DenseTensor
    true_factors: FactorSet
    init: FactorSet
    rank: int


def example_one(init: str = "permuted", seed: int = 0) -> Problem:
    """Rank-two 3x3x3 tensor; `init` is ``"permuted"`` or ``"random"``."""
    truth = FactorSet([EX1_A, EX1_B, EX1_C])
    t = from_rank_one_sum(truth)
    if init == "permuted":
        start = FactorSet([EX1_A, EX1_B @ SWAP2, EX1_C])
    elif init == "random":
        start = random_init(t.dims, 2, seed)
    else:
        raise ValueError(f"init must be 'permuted' or 'random', got {init!r}")
    return Problem("example1", t, truth, start, 2)


def example_two(rank: int = 2) -> Problem:
    truth = FactorSet([EX2_A, EX2_B, EX2_C])
    t = from_rank_one_sum(truth)
    if rank == 2:
        start = FactorSet([EX2_A0, EX2_B0, EX2_C0])
    elif rank == 3:
        extra = random_init(t.dims, 1, EX2_EXTRA_SEED)
        start = FactorSet(
            [np.hstack([m, e]) for m, e in zip([EX2_A0, EX2_B0, EX2_C0], extra)]
        )
    else:
        raise ValueError(f"example two is defined for rank 2 or 3, got {rank}")
    return Problem(f"example2-rank{rank}", t, truth, start, rank)


def nearly_collinear_factors(
    dims, rank: int, seed: int, modes=(1, 2), cosine: float = EX3_COSINE
) -> FactorSet:
    """Uniform random factors where, in each of `modes` (0-based), column 2
    is rotated to make angle ``arccos(cosine)`` with column 1.

    Column norms are preserved.
    """
    if rank < 2:
        raise ValueError("need rank >= 2 for a collinear column pair")
    rng = np.random.default_rng(seed)
    mats = [rng.random((d, rank)) for d in dims]
    angle = np.arccos(cosine)
    for m in modes:
        if dims[m] < 2:
            raise ValueError(f"mode {m} needs at least 2 rows")
        first = mats[m][:, 0] / np.linalg.norm(mats[m][:, 0])
        ortho = rng.standard_normal(dims[m])
        ortho -= first * (first @ ortho)
        ortho /= np.linalg.norm(ortho)
        scale = np.linalg.norm(mats[m][:, 1])
        mats[m][:, 1] = scale * (np.cos(angle) * first + np.sin(angle) * ortho)
    return FactorSet(mats)


def example_three() -> Problem:
    truth = nearly_collinear_factors(EX3_DIMS, EX3_RANK, EX3_SEED)
    t = from_rank_one_sum(truth)
    start = random_init(EX3_DIMS, EX3_RANK, EX3_INIT_SEED)
    return Problem("example3", t, truth, start, EX3_RANK)


def get_example(which: int, **kwargs) -> Problem:
    builders = {1: example_one, 2: example_two, 3: example_three}
    if which not in builders:
        raise ValueError(f"unknown example {which}; choose 1, 2 or 3")
    return builders[which](**kwargs)


def synthetic_low_rank(dims=(64, 64, 32), rank: int = 7, seed: int = 12345) -> DenseTensor:
    """Exact rank-`rank` tensor from uniform random factors."""
    return from_rank_one_sum(random_init(dims, rank, seed))
