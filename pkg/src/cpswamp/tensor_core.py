"""Dense tensor storage, mode-n matricization and rank-one construction.

Values are stored flat in generalized column-major order: the first index
varies fastest, then the second, and so on. Mode-1 matricization is then a
zero-copy reshape of the stored buffer.

Modes are numbered from 1, so ``matricize(t, 1)`` is the mode-1 unfolding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from os import PathLike
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from cpswamp.cp_model import FactorSet


class TensorFormatError(ValueError):
    """Raised when a tensor text file cannot be parsed."""


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """Order-N real tensor with explicit extents.

    Parameters
    ----------
    dims : tuple of int
        Extents ``(I_1, ..., I_N)``, each at least 1.
    values : ndarray
        Flat float64 array of length ``prod(dims)`` in storage order
        (first index fastest).
    """

    dims: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 1:
            raise ValueError("a tensor needs at least one mode")
        if any(d < 1 for d in dims):
            raise ValueError(f"tensor extents must be positive, got {dims}")
        values = np.array(self.values, dtype=np.float64).ravel(order="F")
        if values.size != math.prod(dims):
            raise ValueError(
                f"expected {math.prod(dims)} values for dims {dims}, got {values.size}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, array) -> DenseTensor:
        """Wrap an N-dimensional array, indexed as ``array[i_1, ..., i_N]``."""
        array = np.asarray(array, dtype=np.float64)
        if array.ndim == 0:
            array = array.reshape(1)
        return cls(array.shape, array.ravel(order="F"))

    @classmethod
    def zeros(cls, dims) -> DenseTensor:
        return cls(tuple(dims), np.zeros(math.prod(dims)))

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return self.values.size

    def to_array(self) -> np.ndarray:
        """Read-only N-dimensional view of the stored values."""
        return self.values.reshape(self.dims, order="F")

    def __eq__(self, other):
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"DenseTensor(dims={self.dims})"


def _check_mode(mode: int, order: int) -> int:
    if isinstance(mode, bool) or not isinstance(mode, (int, np.integer)):
        raise TypeError(f"mode must be an integer, got {mode!r}")
    if not 1 <= mode <= order:
        raise ValueError(f"mode must be in 1..{order}, got {mode}")
    return int(mode) - 1


def matricize(t: DenseTensor, mode: int) -> np.ndarray:
    """Mode-`mode` unfolding of `t`.

    Entry ``(i_n, j)`` of the result holds ``t[i_1, ..., i_N]`` where the
    column index runs over the remaining indices with the lowest-numbered
    mode varying fastest.

    Returns
    -------
    ndarray, shape (I_mode, prod of the other extents)
        For ``mode == 1`` this is a read-only view of ``t.values``.
    """
    n = _check_mode(mode, t.order)
    rows = t.dims[n]
    if n == 0:
        return t.values.reshape(rows, -1, order="F")
    moved = np.moveaxis(t.to_array(), n, 0)
    return np.reshape(moved, (rows, -1), order="F")


def dematricize(m, dims, mode: int) -> DenseTensor:
    """Inverse of :func:`matricize` for a tensor of extents `dims`."""
    dims = tuple(int(d) for d in dims)
    n = _check_mode(mode, len(dims))
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got an array with {m.ndim} dims")
    other = dims[:n] + dims[n + 1:]
    if m.shape != (dims[n], math.prod(other)):
        raise ValueError(
            f"matrix shape {m.shape} does not match mode-{mode} unfolding of {dims}"
        )
    moved = np.reshape(m, (dims[n],) + other, order="F")
    return DenseTensor.from_array(np.moveaxis(moved, 0, n))


def from_rank_one_sum(factors: FactorSet | list) -> DenseTensor:
    """Sum of the R outer products ``a_r o b_r o c_r o ...``.

    Accepts a :class:`~cpswamp.cp_model.FactorSet` or a plain list of
    factor matrices sharing a column count.
    """
    mats = [np.asarray(f, dtype=np.float64) for f in factors]
    if not mats:
        raise ValueError("need at least one factor matrix")
    if any(f.ndim != 2 for f in mats):
        raise ValueError("factor matrices must be two-dimensional")
    rank = mats[0].shape[1]
    if any(f.shape[1] != rank for f in mats):
        raise ValueError(
            f"inconsistent column counts {[f.shape[1] for f in mats]}"
        )
    dims = tuple(f.shape[0] for f in mats)
    # T_(1) = F_1 (F_N kr ... kr F_2)^T; mode-1 unfolding is the storage layout
    krp = np.ones((1, rank))
    for f in mats[1:]:
        krp = (f[:, None, :] * krp[None, :, :]).reshape(-1, rank)
    unfolded = mats[0] @ krp.T
    return DenseTensor(dims, unfolded.ravel(order="F"))


def frobenius_norm_sq(t: DenseTensor) -> float:
    """Sum of squared entries."""
    return float(np.dot(t.values, t.values))


def write_tensor(t: DenseTensor, path: str | PathLike) -> None:
    """Write `t` in the plain-text tensor format.

    Line 1 is ``tensor N``, line 2 the extents, then one value per line in
    storage order with 17 significant digits.
    """
    lines = [f"tensor {t.order}", " ".join(str(d) for d in t.dims)]
    lines.extend(f"{v:.17g}" for v in t.values)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_tensor(path: str | PathLike) -> DenseTensor:
    """Parse a file written by :func:`write_tensor`.

    Raises
    ------
    TensorFormatError
        With the offending line number when the content is malformed.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()

    def fail(lineno, msg):
        raise TensorFormatError(f"{path}:{lineno}: {msg}")

    if not lines:
        fail(1, "empty file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "tensor":
        fail(1, f"expected 'tensor N', got {lines[0]!r}")
    try:
        order = int(head[1])
    except ValueError:
        fail(1, f"bad order {head[1]!r}")
    if order < 1:
        fail(1, f"order must be positive, got {order}")
    if len(lines) < 2:
        fail(2, "missing extents line")
    try:
        dims = tuple(int(x) for x in lines[1].split())
    except ValueError:
        fail(2, f"bad extents {lines[1]!r}")
    if len(dims) != order or any(d < 1 for d in dims):
        fail(2, f"expected {order} positive extents, got {lines[1]!r}")

    body = lines[2:]
    while body and not body[-1].strip():
        body.pop()
    values = np.empty(len(body))
    for k, line in enumerate(body):
        try:
            values[k] = float(line)
        except ValueError:
            fail(k + 3, f"bad value {line!r}")
    count = math.prod(dims)
    if len(body) != count:
        fail(len(body) + 3, f"expected {count} values, found {len(body)}")
    return DenseTensor(dims, values)
