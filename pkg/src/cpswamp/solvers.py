"""ALS, regularized (proximal) ALS and Tikhonov ALS sweeps plus the driver loop.

One iteration is one full sweep over the modes in order 1, 2, ..., N.
Each mode update is a linear least-squares solve with the Khatri-Rao
product of the other, most recent, factors:

* ALS:   min ||T_(n) - X K_n^T||^2
* RALS:  min ||T_(n) - X K_n^T||^2 + lam_k ||X - F_n^k||^2
* TALS:  min ||T_(n) - X K_n^T||^2 + lam ||X||^2

The penalised problems are solved as one stacked system with
``sqrt(lam) * I`` appended, which reproduces the ``lam * ||.||^2`` penalty
exactly.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from cpswamp.cp_model import (
    FactorSet,
    critical_point_residual,
    fit_error,
    khatri_rao_except,
)
from cpswamp.linalg_kernels import smallest_singular_value, solve_least_squares
from cpswamp.tensor_core import DenseTensor, from_rank_one_sum, matricize

logger = logging.getLogger(__name__)


class Method(str, enum.Enum):
    ALS = "als"
    RALS = "rals"
    TIKHONOV_ALS = "tals"


class Init(str, enum.Enum):
    RANDOM_UNIFORM = "random"
    PROVIDED = "provided"


class Status(str, enum.Enum):
    CONVERGED_FIT = "CONVERGED_FIT"
    CONVERGED_REL_CHANGE = "CONVERGED_REL_CHANGE"
    MAX_ITERS = "MAX_ITERS"

    @property
    def converged(self) -> bool:
        return self is not Status.MAX_ITERS


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`run`.

    ``lambda0``, ``decay`` and ``lambda_min`` drive the RALS schedule
    ``lam_{k+1} = max(decay * lam_k, lambda_min)``; TALS uses ``lambda0`` as
    its fixed ridge weight and ALS ignores all three. ``rel_change_tol <= 0``
    disables the relative-change stop. ``rank_tol=None`` picks the default
    relative cutoff of :func:`~cpswamp.linalg_kernels.solve_least_squares`.
    """

    method: Method = Method.ALS
    rank: int = 1
    max_iters: int = 10000
    fit_tol: float = 1e-5
    rel_change_tol: float = 0.0
    lambda0: float = 1.0
    decay: float = 0.75
    lambda_min: float = 1e-12
    rank_tol: float | None = None
    seed: int = 0
    init: Init = Init.RANDOM_UNIFORM

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "init", Init(self.init))
        if self.rank < 1:
            raise ValueError(f"rank must be at least 1, got {self.rank}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters}")
        if not self.fit_tol >= 0:
            raise ValueError(f"fit_tol must be nonnegative, got {self.fit_tol}")
        if not 0 < self.decay <= 1:
            raise ValueError(f"decay must lie in (0, 1], got {self.decay}")
        if not self.lambda0 >= self.lambda_min >= 0:
            raise ValueError(
                f"need lambda0 >= lambda_min >= 0, got {self.lambda0}, {self.lambda_min}"
            )
        if self.rank_tol is not None and self.rank_tol < 0:
            raise ValueError(f"rank_tol must be nonnegative, got {self.rank_tol}")


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    fit_error: float
    lam: float
    sigma_min: tuple[float, ...]  # smallest singular value of each mode's K_n
    delta: tuple[float, ...]  # ||F_n^{k+1} - F_n^k||_F per mode


@dataclass
class IterationTrace:
    order: int
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def iters(self) -> np.ndarray:
        return np.array([r.iter for r in self.records], dtype=int)

    @property
    def fit_errors(self) -> np.ndarray:
        return np.array([r.fit_error for r in self.records])

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([r.lam for r in self.records])

    @property
    def sigma_min(self) -> np.ndarray:
        """Array of shape (iterations, order)."""
        return np.array([r.sigma_min for r in self.records]).reshape(-1, self.order)

    @property
    def deltas(self) -> np.ndarray:
        return np.array([r.delta for r in self.records]).reshape(-1, self.order)


@dataclass
class SolveReport:
    factors: FactorSet
    status: Status
    iterations: int
    fit_error: float
    critical_point_residual: float
    trace: IterationTrace
    # ||X^k - X^{k-1}||_F^2 between the last two reconstructed tensors
    final_change: float
    config: SolverConfig


def random_init(dims: Sequence[int], rank: int, seed: int) -> FactorSet:
    """Factors with i.i.d. uniform [0, 1) entries from ``default_rng(seed)``."""
    rng = np.random.default_rng(seed)
    return FactorSet([rng.random((d, rank)) for d in dims])


class _Problem:
    """Unfoldings of the target, transposed once for the per-mode solves."""

    def __init__(self, t: DenseTensor):
        self.tensor = t
        self.rhs = [np.ascontiguousarray(matricize(t, n + 1).T) for n in range(t.order)]


def _sweep(prob, factors, mode_kind, lam, rank_tol, with_sigma=False):
    mats = list(factors)
    rank = mats[0].shape[1]
    sigmas = []
    deltas = []
    for n in range(len(mats)):
        krp = khatri_rao_except(mats, n)
        if with_sigma:
            sigmas.append(smallest_singular_value(krp))
        rhs = prob.rhs[n]
        if lam > 0 and mode_kind != "als":
            root = math.sqrt(lam)
            coeff = np.vstack([krp, root * np.eye(rank)])
            if mode_kind == "rals":
                extra = root * mats[n].T
            else:
                extra = np.zeros((rank, rhs.shape[1]))
            rhs = np.vstack([rhs, extra])
        else:
            coeff = krp
        new = solve_least_squares(coeff, rhs, rank_tol).T
        if with_sigma:
            deltas.append(float(np.linalg.norm(new - mats[n])))
        mats[n] = new
    return mats, sigmas, deltas


def _check_inputs(t: DenseTensor, f: FactorSet):
    if not isinstance(f, FactorSet):
        f = FactorSet(f)
    if f.dims != t.dims:
        raise ValueError(f"factor extents {f.dims} do not match tensor dims {t.dims}")
    return f


def als_step(t: DenseTensor, f: FactorSet, rank_tol: float | None = None) -> FactorSet:
    """One ALS sweep (block Gauss-Seidel), modes updated in order."""
    f = _check_inputs(t, f)
    mats, _, _ = _sweep(_Problem(t), f, "als", 0.0, rank_tol)
    return FactorSet(mats)


def rals_step(
    t: DenseTensor, f: FactorSet, lambda_k: float, rank_tol: float | None = None
) -> FactorSet:
    """One proximal sweep; each mode is pulled towards its current value.

    With ``lambda_k == 0`` this takes the exact code path of :func:`als_step`.
    """
    if lambda_k < 0:
        raise ValueError(f"lambda_k must be nonnegative, got {lambda_k}")
    f = _check_inputs(t, f)
    mats, _, _ = _sweep(_Problem(t), f, "rals", lambda_k, rank_tol)
    return FactorSet(mats)


def tikhonov_als_step(
    t: DenseTensor, f: FactorSet, lam: float, rank_tol: float | None = None
) -> FactorSet:
    """One ALS sweep on the ridge-penalised cost ``f + lam * sum ||F_n||^2``."""
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    f = _check_inputs(t, f)
    mats, _, _ = _sweep(_Problem(t), f, "tals", lam, rank_tol)
    return FactorSet(mats)


def run(
    t: DenseTensor, config: SolverConfig, init: FactorSet | None = None
) -> SolveReport:
    """Iterate the configured method until a stopping rule fires.

    A trace row is recorded after every sweep. The run stops when the fit
    error drops to ``config.fit_tol``, when the relative change
    ``|f_k - f_{k-1}| / (1 + f_{k-1})`` drops to ``config.rel_change_tol``
    (if positive), or after ``config.max_iters`` sweeps.
    """
    if init is None:
        if config.init is Init.PROVIDED:
            raise ValueError("config.init is PROVIDED but no initial factors were given")
        init = random_init(t.dims, config.rank, config.seed)
    else:
        init = _check_inputs(t, init)
        if init.rank != config.rank:
            raise ValueError(
                f"initial factors have rank {init.rank}, config asks for {config.rank}"
            )

    prob = _Problem(t)
    kind = config.method.value
    if config.method is Method.ALS:
        lam = 0.0
    else:
        lam = config.lambda0

    trace = IterationTrace(order=t.order)
    mats = list(init)
    prev_mats = mats
    f_prev = fit_error(t, init)
    status = Status.MAX_ITERS
    f_k = f_prev
    for k in range(1, config.max_iters + 1):
        prev_mats = mats
        mats, sigmas, deltas = _sweep(prob, mats, kind, lam, config.rank_tol, True)
        f_k = fit_error(t, FactorSet(mats))
        trace.records.append(
            IterationRecord(k, f_k, lam, tuple(sigmas), tuple(deltas))
        )
        if f_k <= config.fit_tol:
            status = Status.CONVERGED_FIT
            break
        if (
            config.rel_change_tol > 0
            and abs(f_k - f_prev) / (1.0 + f_prev) <= config.rel_change_tol
        ):
            status = Status.CONVERGED_REL_CHANGE
            break
        f_prev = f_k
        if config.method is Method.RALS:
            lam = max(config.decay * lam, config.lambda_min)

    factors = FactorSet(mats)
    change = from_rank_one_sum(factors).values - from_rank_one_sum(prev_mats).values
    logger.debug(
        "%s finished: %s after %d sweeps, fit %.3e", kind, status.value, len(trace), f_k
    )
    return SolveReport(
        factors=factors,
        status=status,
        iterations=len(trace),
        fit_error=f_k,
        critical_point_residual=critical_point_residual(t, factors),
        trace=trace,
        final_change=float(np.dot(change, change)),
        config=config,
    )
