"""Compact bilinear pooling via TensorSketch.

Count sketch hashes each of the f input coordinates to one of d output
bins with a random sign; TensorSketch of x with itself is the circular
convolution of two independent count sketches and is an unbiased
estimator of the outer-product feature in the sense that
E[<TS(x), TS(y)>] = <x, y>^2.  Summing TS over spatial locations gives
the full-rank comparison point for attentional pooling without ever
materializing the f x f statistic.

The circular convolution is computed directly in O(d^2); at desk-scale
d (<= 512) this is trivial and avoids an FFT dependency (an FFT-based
version would be O(d log d)).

Hash and sign tables are pure functions of (seed, f, d) via SplitMix64,
so sketches reproduce bit-exactly across implementations; serializing a
SketchParams means storing only (seed, f, d).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import SplitMix64
from .tensors import ShapeError


@dataclass(frozen=True)
class SketchParams:
    d: int
    h1: np.ndarray  # (f,) ints in [0, d)
    h2: np.ndarray
    s1: np.ndarray  # (f,) signs in {-1, +1}
    s2: np.ndarray
    seed: int

    def __post_init__(self):
        f = len(self.h1)
        for t in (self.h1, self.h2, self.s1, self.s2):
            if len(t) != f:
                raise ShapeError("sketch tables must all have length f")
        if np.any(self.h1 >= self.d) or np.any(self.h2 >= self.d):
            raise ShapeError(f"hash table entry out of range for d={self.d}")
        if not (set(np.unique(self.s1)) <= {-1, 1} and set(np.unique(self.s2)) <= {-1, 1}):
            raise ValueError("sign tables must contain only -1/+1")

    @property
    def num_features(self) -> int:
        return len(self.h1)

    @classmethod
    def from_seed(cls, f: int, d: int, seed: int) -> "SketchParams":
        """Derive tables from SplitMix64(seed); draw order h1, s1, h2, s2."""
        rng = SplitMix64(seed)
        h1 = np.array([rng.next_below(d) for _ in range(f)], dtype=np.int64)
        s1 = np.array([1 - 2 * (rng.next_u64() & 1) for _ in range(f)], dtype=np.int64)
        h2 = np.array([rng.next_below(d) for _ in range(f)], dtype=np.int64)
        s2 = np.array([1 - 2 * (rng.next_u64() & 1) for _ in range(f)], dtype=np.int64)
        return cls(d=d, h1=h1, h2=h2, s1=s1, s2=s2, seed=seed)


def count_sketch(x, h, s, d: int) -> np.ndarray:
    """out[h[i]] += s[i] * x[i]; all other entries zero."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.int64)
    s = np.asarray(s, dtype=np.float64)
    if x.ndim != 1 or h.shape != x.shape or s.shape != x.shape:
        raise ShapeError(f"count_sketch table/input mismatch: {x.shape}, {h.shape}, {s.shape}")
    if np.any(h < 0) or np.any(h >= d):
        raise ShapeError(f"hash index out of range for d={d}")
    out = np.zeros(d)
    np.add.at(out, h, s * x)
    return out


def circular_convolve(u, v) -> np.ndarray:
    """Direct O(d^2) circular convolution of equal-length vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ShapeError(f"circular_convolve needs equal 1-D vectors: {u.shape} vs {v.shape}")
    d = u.shape[0]
    idx = (np.arange(d)[:, None] - np.arange(d)[None, :]) % d
    return (u[None, :] * v[idx]).sum(axis=1)


def tensor_sketch(x, params: SketchParams) -> np.ndarray:
    """TensorSketch of x with itself: conv of its two count sketches."""
    c1 = count_sketch(x, params.h1, params.s1, params.d)
    c2 = count_sketch(x, params.h2, params.s2, params.d)
    return circular_convolve(c1, c2)


def cbp_pool(X, params: SketchParams, normalize: bool = False) -> np.ndarray:
    """Sum of per-location TensorSketches of the rows of X.

    `normalize` applies the signed-square-root + L2 steps some CBP
    pipelines use; off by default.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.num_features:
        raise ShapeError(f"X shape {X.shape} vs sketch f={params.num_features}")
    out = np.zeros(params.d)
    for row in X:
        out += tensor_sketch(row, params)
    if normalize:
        out = np.sign(out) * np.sqrt(np.abs(out))
        norm = np.linalg.norm(out)
        if norm > 0:
            out = out / norm
    return out
