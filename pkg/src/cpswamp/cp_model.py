"""CP model state, least-squares cost, gradients and stationarity checks.

The cost is ``f(F_1, ..., F_N) = ||T - sum_r f1_r o ... o fN_r||_F^2``. The
factor 2 from the square is kept in :func:`gradient`, so
``gradient(...)[n] == -2 * (T_(n) - F_n K_n^T) K_n`` where ``K_n`` is the
Khatri-Rao product of every other factor, highest mode first.
"""

from __future__ import annotations

from dataclasses import dataclass
from os import PathLike
from typing import Iterable, Sequence

import numpy as np

from cpswamp.linalg_kernels import k_rank
from cpswamp.tensor_core import DenseTensor, TensorFormatError, matricize


class FactorSet(Sequence):
    """Ordered factor matrices ``F_1, ..., F_N`` with a shared column count.

    Behaves as a read-only sequence of float64 arrays. Factors are copied
    on construction and marked read-only, so a FactorSet never changes
    after it is built.
    """

    def __init__(self, factors: Iterable):
        mats = []
        for f in factors:
            f = np.array(f, dtype=np.float64)
            if f.ndim == 1:
                f = f[:, None]
            if f.ndim != 2:
                raise ValueError("factor matrices must be two-dimensional")
            f.setflags(write=False)
            mats.append(f)
        if not mats:
            raise ValueError("a FactorSet needs at least one factor")
        ranks = {f.shape[1] for f in mats}
        if len(ranks) != 1:
            raise ValueError(
                f"factors must share a column count, got {[f.shape[1] for f in mats]}"
            )
        if mats[0].shape[1] < 1:
            raise ValueError("rank must be at least 1")
        self._factors = tuple(mats)

    def __getitem__(self, i):
        return self._factors[i]

    def __len__(self):
        return len(self._factors)

    @property
    def rank(self) -> int:
        return self._factors[0].shape[1]

    @property
    def order(self) -> int:
        return len(self._factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self._factors)

    def replace(self, index: int, factor) -> FactorSet:
        """Copy with factor `index` (0-based) swapped for `factor`."""
        mats = list(self._factors)
        mats[index] = factor
        return FactorSet(mats)

    def __eq__(self, other):
        if not isinstance(other, FactorSet):
            return NotImplemented
        return len(self) == len(other) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self, other)
        )

    def __repr__(self):
        return f"FactorSet(dims={self.dims}, rank={self.rank})"


def _check_shapes(t: DenseTensor, f: FactorSet):
    if f.dims != t.dims:
        raise ValueError(f"factor extents {f.dims} do not match tensor dims {t.dims}")


def khatri_rao_except(factors: Sequence[np.ndarray], skip: int) -> np.ndarray:
    """Khatri-Rao product of all factors but `skip` (0-based), highest mode first.

    Matches the column order of :func:`~cpswamp.tensor_core.matricize`, so
    ``T_(n) ~ F_n @ khatri_rao_except(F, n - 1).T``. With a single factor
    the product is a ``1 x R`` row of ones.
    """
    rank = factors[0].shape[1]
    krp = np.ones((1, rank))
    for m, f in enumerate(factors):
        if m == skip:
            continue
        krp = (f[:, None, :] * krp[None, :, :]).reshape(-1, rank)
    return krp


def fit_error(t: DenseTensor, f: FactorSet) -> float:
    """``||T - [[F_1, ..., F_N]]||_F^2`` via the mode-1 residual."""
    _check_shapes(t, f)
    residual = matricize(t, 1) - f[0] @ khatri_rao_except(f, 0).T
    return float(np.sum(residual * residual))


def gradient(t: DenseTensor, f: FactorSet) -> list[np.ndarray]:
    """Partial gradients of :func:`fit_error`, one matrix per factor."""
    _check_shapes(t, f)
    grads = []
    for n in range(f.order):
        krp = khatri_rao_except(f, n)
        residual = matricize(t, n + 1) - f[n] @ krp.T
        grads.append(-2.0 * residual @ krp)
    return grads


def critical_point_residual(t: DenseTensor, f: FactorSet) -> float:
    """Scaled violation of the per-mode normal equations.

    Returns ``max_n ||T_(n) K_n - F_n K_n^T K_n||_F / (1 + ||T_(n) K_n||_F)``,
    which is zero exactly at a critical point of :func:`fit_error`.
    """
    _check_shapes(t, f)
    worst = 0.0
    for n in range(f.order):
        krp = khatri_rao_except(f, n)
        mttkrp = matricize(t, n + 1) @ krp
        gap = mttkrp - f[n] @ (krp.T @ krp)
        worst = max(worst, np.linalg.norm(gap) / (1.0 + np.linalg.norm(mttkrp)))
    return float(worst)


def vectorize_factors(f: FactorSet) -> np.ndarray:
    """Concatenate the column-stacked factors: ``[vec(F_1); ...; vec(F_N)]``."""
    return np.concatenate([m.ravel(order="F") for m in f])


def devectorize_factors(x, dims: Sequence[int], rank: int) -> FactorSet:
    """Inverse of :func:`vectorize_factors`."""
    x = np.asarray(x, dtype=np.float64)
    expected = sum(dims) * rank
    if x.shape != (expected,):
        raise ValueError(f"expected a vector of length {expected}, got shape {x.shape}")
    mats, start = [], 0
    for d in dims:
        mats.append(x[start:start + d * rank].reshape(d, rank, order="F"))
        start += d * rank
    return FactorSet(mats)


def normalize_columns(f: FactorSet) -> FactorSet:
    """Unit-norm columns in every factor but the last, which absorbs the scales.

    For reporting only; the solvers never rebalance factors. Zero columns
    are left as they are.
    """
    mats = [np.array(m) for m in f]
    for n in range(len(mats) - 1):
        norms = np.linalg.norm(mats[n], axis=0)
        nz = norms > 0
        mats[n][:, nz] /= norms[nz]
        mats[-1][:, nz] *= norms[nz]
    return FactorSet(mats)


@dataclass(frozen=True)
class UniquenessReport:
    k_ranks: tuple[int, int, int]
    rank: int
    kruskal_holds: bool
    # sufficient condition assuming one full-rank factor, uses extents I, J
    lathauwer_holds: bool

    def describe(self) -> str:
        ka, kb, kc = self.k_ranks
        return (
            f"k-ranks ({ka}, {kb}, {kc}); Kruskal {ka}+{kb}+{kc} >= {2 * self.rank + 2}: "
            f"{'yes' if self.kruskal_holds else 'no'}; "
            f"R(R-1)/2 <= I(I-1)J(J-1)/4: {'yes' if self.lathauwer_holds else 'no'}"
        )


def uniqueness_report(f: FactorSet) -> UniquenessReport:
    """Kruskal and De Lathauwer / Jiang-Sidiropoulos checks for order 3."""
    if f.order != 3:
        raise NotImplementedError(
            f"uniqueness checks are only defined for order-3 factor sets, got {f.order}"
        )
    ks = tuple(k_rank(m) for m in f)
    r = f.rank
    i, j = f.dims[0], f.dims[1]
    return UniquenessReport(
        k_ranks=ks,
        rank=r,
        kruskal_holds=sum(ks) >= 2 * r + 2,
        lathauwer_holds=2 * r * (r - 1) <= i * (i - 1) * j * (j - 1),
    )


def write_factors(f: FactorSet, path: str | PathLike) -> None:
    """Write `f` as ``factors N R`` then, per factor, ``I_n`` and its entries.

    Entries are column-major, one per line, 17 significant digits.
    """
    lines = [f"factors {f.order} {f.rank}"]
    for m in f:
        lines.append(str(m.shape[0]))
        lines.extend(f"{v:.17g}" for v in m.ravel(order="F"))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_factors(path: str | PathLike) -> FactorSet:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh.read().splitlines()]
    while lines and not lines[-1]:
        lines.pop()

    def fail(lineno, msg):
        raise TensorFormatError(f"{path}:{lineno}: {msg}")

    head = lines[0].split() if lines else []
    if len(head) != 3 or head[0] != "factors":
        fail(1, "expected 'factors N R'")
    try:
        order, rank = int(head[1]), int(head[2])
    except ValueError:
        fail(1, f"bad header {lines[0]!r}")
    if order < 1 or rank < 1:
        fail(1, "order and rank must be positive")

    pos, mats = 1, []
    for _ in range(order):
        if pos >= len(lines):
            fail(pos + 1, "unexpected end of file")
        try:
            rows = int(lines[pos])
        except ValueError:
            fail(pos + 1, f"bad extent {lines[pos]!r}")
        if rows < 1:
            fail(pos + 1, "extent must be positive")
        pos += 1
        count = rows * rank
        chunk = lines[pos:pos + count]
        if len(chunk) != count:
            fail(pos + len(chunk) + 1, f"expected {count} entries")
        try:
            vals = np.array([float(v) for v in chunk])
        except ValueError:
            bad = next(k for k, v in enumerate(chunk) if not _is_float(v))
            fail(pos + bad + 1, f"bad value {chunk[bad]!r}")
        mats.append(vals.reshape(rows, rank, order="F"))
        pos += count
    if pos != len(lines):
        fail(pos + 1, "trailing content")
    return FactorSet(mats)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True
