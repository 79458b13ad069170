"""Observations, the unit-ball convention on features, and source embeddings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import A2ViolationError, DomainError

A2_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Example:
    """A single observation. ``source`` is 1-based when present."""

    x: np.ndarray
    y: float
    source: Optional[int] = None


def enforce_unit_ball(X, normalize=False):
    """Check ``||x_t|| <= 1`` row-wise, or rescale offending rows when ``normalize``.

    With ``normalize=True`` every row is rescaled to unit norm (zero rows are
    left alone), which is the ``--normalize`` ingestion mode.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    norms = np.linalg.norm(X, axis=1)
    if normalize:
        scale = np.where(norms > 0, norms, 1.0)
        return X / scale[:, None]
    bad = np.flatnonzero(norms > 1.0 + A2_TOLERANCE)
    if bad.size:
        raise A2ViolationError(
            f"{bad.size} feature vector(s) have norm > 1 (first at index {bad[0]}, "
            f"norm {norms[bad[0]]:.6g}); rescale the data or ingest with normalize=True"
        )
    return X


class Dataset:
    """An ordered sequence of observations stored as arrays.

    Parameters
    ----------
    X : array (T, n)
    y : array (T,)
        Real responses, binary labels in {-1, +1}, or 1-based class labels.
    source : array (T,), optional
        1-based source ids for the multi-source setting.
    normalize : bool
        Rescale every row of ``X`` to unit norm instead of rejecting rows with
        norm above one.
    """

    def __init__(self, X, y, source=None, normalize=False):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :] if X.size else X.reshape(0, 0)
        y = np.asarray(y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise DomainError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.shape[0]:
            X = enforce_unit_ball(X, normalize=normalize)
        self.X = X
        self.y = y
        if source is not None:
            source = np.asarray(source, dtype=int).reshape(-1)
            if source.shape[0] != y.shape[0]:
                raise DomainError("source ids must have one entry per observation")
            if source.size and source.min() < 1:
                raise DomainError("source ids are 1-based")
        self.source = source

    @classmethod
    def from_examples(cls, examples: Iterable[Example], normalize=False):
        examples = list(examples)
        if not examples:
            return cls(np.zeros((0, 0)), np.zeros(0))
        X = np.stack([np.asarray(e.x, dtype=float) for e in examples])
        y = np.array([e.y for e in examples], dtype=float)
        srcs = [e.source for e in examples]
        source = None if all(s is None for s in srcs) else np.array(srcs, dtype=int)
        return cls(X, y, source, normalize=normalize)

    def __len__(self):
        return self.y.shape[0]

    @property
    def dim(self):
        return self.X.shape[1] if self.X.ndim == 2 else 0

    def __getitem__(self, idx):
        src = None if self.source is None else self.source[idx]
        return Dataset(self.X[idx], self.y[idx], src)

    def examples(self) -> list[Example]:
        out = []
        for t in range(len(self)):
            s = None if self.source is None else int(self.source[t])
            out.append(Example(self.X[t], float(self.y[t]), s))
        return out

    def counts_per_source(self, num_sources):
        if self.source is None:
            raise DomainError("dataset has no source ids")
        return np.bincount(self.source - 1, minlength=num_sources)[:num_sources]

    def design(self, num_sources=None):
        """Feature matrix, embedded block-wise by source when ``num_sources`` is given.

        Source ``k`` occupies coordinates ``(k-1)*n .. k*n-1`` so an observation
        from source k is ``(0, ..., x, ..., 0)``.
        """
        if num_sources is None:
            return self.X
        if self.source is None:
            raise DomainError("a multi-source design needs source ids on every observation")
        return embed_sources(self.X, self.source, num_sources)

    def permuted(self, perm: Sequence[int]):
        perm = np.asarray(perm)
        src = None if self.source is None else self.source[perm]
        return Dataset(self.X[perm], self.y[perm], src)


def embed_sources(X, source, num_sources):
    X = np.asarray(X, dtype=float)
    source = np.asarray(source, dtype=int)
    if source.size and source.max() > num_sources:
        raise DomainError(f"source id {source.max()} exceeds the number of sources {num_sources}")
    T, n = X.shape
    out = np.zeros((T, n * num_sources))
    cols = (source[:, None] - 1) * n + np.arange(n)
    out[np.arange(T)[:, None], cols] = X
    return out
