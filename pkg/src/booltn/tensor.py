"""Dense bit-packed Boolean tensors and the classical operations on them.

Elements are linearized in row-major order (last index fastest) and stored
64 to a machine word. All values are immutable; operations return new
objects.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "BooleanTensor",
    "BooleanMatrix",
    "ShapeError",
    "BtnFormatError",
    "bool_matmul",
    "hamming",
    "unfold",
    "reshape",
    "read_btn",
    "write_btn",
    "dumps_btn",
    "loads_btn",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class BtnFormatError(ValueError):
    """Raised when a ``.btn`` stream is malformed."""


def _pack(bits: np.ndarray) -> np.ndarray:
    packed = np.packbits(bits.reshape(-1).astype(np.uint8, copy=False))
    pad = (-packed.size) % 8
    if pad:
        packed = np.concatenate([packed, np.zeros(pad, dtype=np.uint8)])
    words = packed.view(np.uint64)
    words.flags.writeable = False
    return words


class BooleanTensor:
    """An order-d array of {0,1} values with an explicit dimension list.

    Construct from any array-like of zeros and ones with :meth:`from_array`,
    or from a flat bit sequence plus dims with the constructor.
    """

    __slots__ = ("_dims", "_size", "_words", "_cache")

    def __init__(self, dims: Sequence[int], data: Iterable[int] | np.ndarray):
        dims = tuple(int(d) for d in dims)
        if not dims:
            raise ShapeError("a Boolean tensor needs at least one dimension")
        if any(d < 1 for d in dims):
            raise ShapeError(f"dimensions must be positive, got {dims}")
        arr = np.asarray(data)
        size = math.prod(dims)
        if arr.size != size:
            raise ShapeError(f"data has {arr.size} elements, dims {dims} need {size}")
        if arr.dtype != np.bool_:
            if arr.size and not np.isin(arr, (0, 1)).all():
                raise ValueError("Boolean tensor entries must be 0 or 1")
        self._dims = dims
        self._size = size
        self._words = _pack(arr.astype(bool, copy=False))
        self._cache = None

    @classmethod
    def from_array(cls, array) -> "BooleanTensor":
        arr = np.asarray(array)
        if arr.ndim == 2:
            return BooleanMatrix(arr.shape, arr)
        return cls(arr.shape, arr)

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "BooleanTensor":
        return _wrap(np.zeros(tuple(dims), dtype=np.uint8))

    @classmethod
    def ones(cls, dims: Sequence[int]) -> "BooleanTensor":
        return _wrap(np.ones(tuple(dims), dtype=np.uint8))

    @property
    def dims(self) -> tuple[int, ...]:
        return self._dims

    @property
    def shape(self) -> tuple[int, ...]:
        return self._dims

    @property
    def size(self) -> int:
        return self._size

    @property
    def words(self) -> np.ndarray:
        """The packed storage, 64 elements per ``uint64`` word."""
        return self._words

    def order(self) -> int:
        return len(self._dims)

    @property
    def array(self) -> np.ndarray:
        """Read-only ``uint8`` view with shape ``dims``."""
        if self._cache is None:
            bits = np.unpackbits(self._words.view(np.uint8), count=self._size)
            bits = bits.reshape(self._dims)
            bits.flags.writeable = False
            self._cache = bits
        return self._cache

    def to_numpy(self) -> np.ndarray:
        """Writable ``uint8`` copy of the data."""
        return self.array.copy()

    def count(self) -> int:
        """Number of ones."""
        return int(np.bitwise_count(self._words).sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, BooleanTensor):
            return NotImplemented
        return self._dims == other._dims and np.array_equal(self._words, other._words)

    def __hash__(self) -> int:
        return hash((self._dims, self._words.tobytes()))

    def __getitem__(self, index):
        return self.array[index]

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dims={self._dims}, ones={self.count()})"


class BooleanMatrix(BooleanTensor):
    """A :class:`BooleanTensor` of order 2."""

    __slots__ = ()

    def __init__(self, dims: Sequence[int], data):
        if len(tuple(dims)) != 2:
            raise ShapeError(f"a Boolean matrix has two dimensions, got {tuple(dims)}")
        super().__init__(dims, data)

    @property
    def nrow(self) -> int:
        return self._dims[0]

    @property
    def ncol(self) -> int:
        return self._dims[1]

    @property
    def T(self) -> "BooleanMatrix":
        return BooleanMatrix((self.ncol, self.nrow), self.array.T)

    def transpose(self) -> "BooleanMatrix":
        return self.T


def _wrap(arr: np.ndarray) -> BooleanTensor:
    if arr.ndim == 2:
        return BooleanMatrix(arr.shape, arr)
    return BooleanTensor(arr.shape, arr)


def _as_array(x) -> np.ndarray:
    return x.array if isinstance(x, BooleanTensor) else np.asarray(x, dtype=np.uint8)


def matmul_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Boolean product of two 0/1 arrays, returned as ``uint8``."""
    # integer counts of AND matches; float64 keeps BLAS speed and is exact here
    prod = a.astype(np.float64) @ b.astype(np.float64)
    return (prod > 0.5).astype(np.uint8)


def bool_matmul(A: BooleanMatrix, B: BooleanMatrix) -> BooleanMatrix:
    """Matrix product over the (OR, AND) semiring."""
    a, b = _as_array(A), _as_array(B)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = matmul_array(a, b)
    return BooleanMatrix(out.shape, out)


def hamming(X: BooleanTensor, Y: BooleanTensor) -> int:
    """Number of positions where ``X`` and ``Y`` differ."""
    if isinstance(X, BooleanTensor) and isinstance(Y, BooleanTensor):
        if X.dims != Y.dims:
            raise ShapeError(f"Hamming distance needs equal shapes, got {X.dims} and {Y.dims}")
        return int(np.bitwise_count(X.words ^ Y.words).sum())
    x, y = _as_array(X), _as_array(Y)
    if x.shape != y.shape:
        raise ShapeError(f"Hamming distance needs equal shapes, got {x.shape} and {y.shape}")
    return int(np.count_nonzero(x != y))


def _split_index(order: int, row_dims) -> int:
    if isinstance(row_dims, (int, np.integer)):
        split = int(row_dims)
    else:
        axes = list(row_dims)
        if axes != list(range(len(axes))):
            raise ShapeError(
                f"row axes must be a leading contiguous run 0..s-1, got {axes}"
            )
        split = len(axes)
    if not 0 < split < order:
        raise ShapeError(
            f"split point {split} leaves an empty row or column group for order {order}"
        )
    return split


def unfold(T: BooleanTensor, row_dims) -> BooleanMatrix:
    """Matricize ``T`` with the leading axes as rows.

    Args:
        T: tensor of order >= 2.
        row_dims: either the split point ``s`` or the axis list ``[0, ..., s-1]``.
            Rows are indexed by ``dims[:s]``, columns by ``dims[s:]``.
    """
    split = _split_index(T.order(), row_dims)
    nrow = math.prod(T.dims[:split])
    return BooleanMatrix((nrow, T.size // nrow), T.array.reshape(nrow, -1))


def reshape(X: BooleanTensor, new_dims: Sequence[int]) -> BooleanTensor:
    """Relabel the row-major bit sequence of ``X`` under ``new_dims``."""
    new_dims = tuple(int(d) for d in new_dims)
    if math.prod(new_dims) != X.size:
        raise ShapeError(f"cannot reshape {X.dims} ({X.size} elements) to {new_dims}")
    return _wrap(X.array.reshape(new_dims))


# ---------------------------------------------------------------- .btn files

_MAGIC = "BTN1"


def dumps_btn(T: BooleanTensor) -> bytes:
    header = " ".join([_MAGIC, str(T.order()), *map(str, T.dims)])
    body = (T.array.reshape(-1) + ord("0")).astype(np.uint8).tobytes()
    return header.encode("utf-8") + b"\n" + body + b"\n"


def loads_btn(raw: bytes) -> BooleanTensor:
    head, sep, rest = raw.partition(b"\n")
    if not sep:
        raise BtnFormatError("missing header line")
    fields = head.decode("utf-8", errors="strict").split(" ")
    if len(fields) < 3 or fields[0] != _MAGIC:
        raise BtnFormatError(f"bad header {head[:40]!r}")
    try:
        order = int(fields[1])
        dims = [int(f) for f in fields[2:]]
    except ValueError as exc:
        raise BtnFormatError(f"bad header {head[:40]!r}") from exc
    if order != len(dims) or order < 1 or any(d < 1 for d in dims):
        raise BtnFormatError(f"header declares order {order} but lists dims {dims}")
    size = math.prod(dims)
    if len(rest) != size + 1 or rest[-1:] != b"\n":
        raise BtnFormatError(f"expected {size} bits followed by a newline")
    body = np.frombuffer(rest[:-1], dtype=np.uint8)
    bad = (body != ord("0")) & (body != ord("1"))
    if bad.any():
        pos = int(np.argmax(bad))
        raise BtnFormatError(f"invalid byte {bytes(body[pos:pos + 1])!r} at bit {pos}")
    return _wrap((body - ord("0")).reshape(dims))


def write_btn(path, T: BooleanTensor) -> None:
    Path(path).write_bytes(dumps_btn(T))


def read_btn(path) -> BooleanTensor:
    return loads_btn(Path(path).read_bytes())
