"""4-D tensors, trainable parameters, and the recorded-operation graph.

Values are immutable once built: every operation returns a fresh tensor and
the wrapped array is marked read-only, so tensors can be shared freely across
threads. A forward pass records onto an :class:`OpGraph` activated with
:func:`record`; :func:`backward` replays the records once, in reverse,
accumulating adjoints into the :class:`Parameter` objects seen during the
pass. Each graph belongs to a single pass and is consumed by its replay.
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

from ..errors import GraphError, NonFiniteError, ShapeError

__all__ = ["Tensor", "Parameter", "OpGraph", "record", "backward", "active_graph"]

_DTYPE_NAMES = {"f32": np.dtype(np.float32), "f64": np.dtype(np.float64)}
_DTYPE_TAGS = {v: k for k, v in _DTYPE_NAMES.items()}
_uids = itertools.count(1)
_tls = threading.local()


def resolve_dtype(dtype) -> np.dtype:
    """Map 'f32'/'f64' (or a numpy float dtype) to the numpy dtype, rejecting others."""
    if isinstance(dtype, str) and dtype in _DTYPE_NAMES:
        return _DTYPE_NAMES[dtype]
    dt = np.dtype(dtype)
    if dt not in _DTYPE_TAGS:
        raise ShapeError(f"unsupported dtype {dtype!r}; expected f32 or f64")
    return dt


class Tensor:
    """Immutable dense array with shape (batch, channels, height, width)."""

    __slots__ = ("_data", "_uid")

    def __init__(self, data, dtype=None):
        if isinstance(data, Tensor):
            data = data._data
        arr = np.array(data, order="C", copy=True)
        if dtype is not None:
            arr = arr.astype(resolve_dtype(dtype), copy=False)
        elif arr.dtype not in _DTYPE_TAGS:
            arr = arr.astype(np.float32)
        if arr.ndim != 4:
            raise ShapeError(f"tensor must be 4-D (N, C, H, W); got {arr.ndim}-D shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise NonFiniteError("tensor contains NaN or Inf")
        arr.flags.writeable = False
        self._data = arr
        self._uid = next(_uids)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # Adopt a freshly computed array without the defensive copy of __init__.
        out = np.ascontiguousarray(arr)
        if out.ndim != 4:
            raise ShapeError(f"internal result must be 4-D; got shape {out.shape}")
        if not np.isfinite(out).all():
            raise NonFiniteError("operation produced NaN or Inf")
        out.flags.writeable = False
        t = cls.__new__(cls)
        t._data = out
        t._uid = next(_uids)
        return t

    @classmethod
    def zeros(cls, shape: Sequence[int], dtype="f32") -> "Tensor":
        return cls._wrap(np.zeros(tuple(shape), dtype=resolve_dtype(dtype)))

    @classmethod
    def full(cls, shape: Sequence[int], value: float, dtype="f32") -> "Tensor":
        return cls._wrap(np.full(tuple(shape), value, dtype=resolve_dtype(dtype)))

    @classmethod
    def scalar(cls, value: float, dtype="f32") -> "Tensor":
        return cls.full((1, 1, 1, 1), value, dtype)

    @property
    def data(self) -> np.ndarray:
        """The wrapped (read-only) numpy array."""
        return self._data

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self._data.shape  # type: ignore[return-value]

    @property
    def dtype(self) -> str:
        return _DTYPE_TAGS[self._data.dtype]

    @property
    def np_dtype(self) -> np.dtype:
        return self._data.dtype

    @property
    def uid(self) -> int:
        return self._uid

    @property
    def size(self) -> int:
        return self._data.size

    def item(self) -> float:
        if self.shape != (1, 1, 1, 1):
            raise ShapeError(f"item() requires a scalar (1,1,1,1) tensor; got {self.shape}")
        return float(self._data.reshape(()))

    def astype(self, dtype) -> "Tensor":
        """Cast to another dtype (creates a fresh leaf; not recorded on any graph)."""
        return Tensor._wrap(self._data.astype(resolve_dtype(dtype)))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


class Parameter:
    """Trainable value plus its accumulated gradient (same shape, zero-initialized)."""

    __slots__ = ("_value", "grad", "name")

    def __init__(self, value, name: str = ""):
        v = value if isinstance(value, Tensor) else Tensor(value)
        self._value = v
        self.grad = np.zeros(v.shape, dtype=v.np_dtype)
        self.name = name

    @property
    def value(self) -> Tensor:
        return self._value

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self._value.shape

    def assign(self, new) -> None:
        """Replace the value; shape and dtype must match the existing ones."""
        t = new if isinstance(new, Tensor) else Tensor(new, dtype=self._value.dtype)
        if t.shape != self._value.shape:
            raise ShapeError(f"parameter {self.name!r}: cannot assign shape {t.shape} over {self._value.shape}")
        if t.np_dtype != self._value.np_dtype:
            raise ShapeError(f"parameter {self.name!r}: dtype {t.dtype} does not match {self._value.dtype}")
        self._value = t

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self._value.dtype})"


class _Record:
    __slots__ = ("name", "in_uids", "out", "out_data", "fn")

    def __init__(self, name, in_uids, out, fn):
        self.name = name
        self.in_uids = in_uids
        self.out = out
        self.out_data = out._data  # identity snapshot for the mutation check
        self.fn = fn


class OpGraph:
    """Ordered tape of executed operations, replayed once (in reverse) by backward()."""

    def __init__(self):
        self._records: list[_Record] = []
        self._params: dict[int, Parameter] = {}
        self._out_uids: set[int] = set()
        self._consumed = False

    def __len__(self) -> int:
        return len(self._records)

    @property
    def consumed(self) -> bool:
        return self._consumed

    def op_names(self) -> list[str]:
        return [r.name for r in self._records]

    def watch(self, param: Parameter) -> None:
        """Register a parameter so backward() routes its adjoint into param.grad."""
        self._params[param.value.uid] = param

    def _append(self, name: str, inputs: tuple[Tensor, ...], out: Tensor,
                fn: Callable[[np.ndarray], tuple]) -> None:
        if self._consumed:
            raise GraphError("cannot record onto a graph that was already replayed")
        self._records.append(_Record(name, tuple(t.uid for t in inputs), out, fn))
        self._out_uids.add(out.uid)


def active_graph() -> OpGraph | None:
    """The graph currently recording in this thread, if any."""
    return getattr(_tls, "graph", None)


@contextmanager
def record(graph: OpGraph) -> Iterator[OpGraph]:
    """Activate ``graph`` so operations in this thread record onto it."""
    prev = active_graph()
    _tls.graph = graph
    try:
        yield graph
    finally:
        _tls.graph = prev


def backward(graph: OpGraph, loss: Tensor) -> None:
    """Replay ``graph`` in reverse from ``loss``, accumulating Parameter gradients.

    Every parameter reachable from the loss receives its exact reverse-mode
    adjoint added into ``param.grad``; unreachable parameters are untouched.
    The graph is consumed: a second replay raises, as does replay after the
    recorded tensors were tampered with.
    """
    if graph._consumed:
        raise GraphError("operation graph was already replayed; record a fresh pass")
    if loss.shape != (1, 1, 1, 1):
        raise GraphError(f"loss must be a scalar (1,1,1,1) tensor; got shape {loss.shape}")
    if loss.uid not in graph._out_uids:
        raise GraphError("loss was not produced while recording on this graph")
    for rec in graph._records:
        if rec.out._data is not rec.out_data:
            raise GraphError(f"graph mutated since recording (op {rec.name!r})")

    adjoints: dict[int, np.ndarray] = {loss.uid: np.ones((1, 1, 1, 1), dtype=loss.np_dtype)}
    for rec in reversed(graph._records):
        g = adjoints.pop(rec.out.uid, None)
        if g is None:
            continue
        grads = rec.fn(g)
        if len(grads) != len(rec.in_uids):
            raise GraphError(f"op {rec.name!r} returned {len(grads)} adjoints for {len(rec.in_uids)} inputs")
        for uid, gi in zip(rec.in_uids, grads):
            if gi is None:
                continue
            acc = adjoints.get(uid)
            adjoints[uid] = gi if acc is None else acc + gi
    graph._consumed = True

    for uid, param in graph._params.items():
        g = adjoints.get(uid)
        if g is not None:
            param.grad += g.reshape(param.grad.shape)
