"""Small linear-algebra layer and deterministic random streams.

All heavy numerics are delegated to numpy; this module pins down the exact
conventions the rest of the package relies on (row-major matrices, row-wise
normalization, the counter-based random scheme) and wraps them with the
package's error types.

Random streams
--------------
Reproducibility across toggled-off loss terms and across checkpoint resume
requires that skipping one consumer of randomness must not shift the draws
seen by any other consumer.  A single sequential stream cannot provide that,
so every consumer gets its own counter-based stream addressed by
``(seed, purpose, step)``:

* ``seed``   -- the run seed,
* ``purpose``-- a small integer naming the consumer (model init, shuffling,
                one dropout site, the confounder sampler, ...),
* ``step``   -- the training step / epoch / network index, as appropriate.

The triple is folded into a Philox key, so streams are independent by
construction and can be reopened at any time from just the triple.
"""

import numpy as np

from .errors import DegenerateVectorError, ShapeError

# A matrix is a 2-d float ndarray; vectors are 1-d.  The alias documents intent.
Matrix = np.ndarray

_MASK64 = (1 << 64) - 1


class RngState:
    """A deterministic random stream addressed by (seed, context) counters.

    Wraps ``np.random.Generator`` over the Philox counter-based bit generator.
    Two RngState objects built from the same ``(seed, ctx)`` produce identical
    sequences; different contexts give statistically independent streams.
    """

    def __init__(self, seed, ctx=0):
        self.seed = int(seed)
        self.ctx = int(ctx)
        key = np.array([self.seed & _MASK64, self.ctx & _MASK64], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    @classmethod
    def for_purpose(cls, seed, purpose, step=0):
        """Open the stream for one named consumer at one step.

        ``purpose`` occupies the high bits and ``step`` the low 40 bits of the
        context word, so (purpose, step) pairs never collide for any realistic
        step count.
        """
        return cls(seed, (int(purpose) << 40) | (int(step) & ((1 << 40) - 1)))

    def normal(self, rows, cols=None, mean=0.0, stddev=1.0):
        if cols is None:
            return self._gen.normal(mean, stddev, size=rows)
        return self._gen.normal(mean, stddev, size=(rows, cols))

    def uniform(self, low, high, size=None):
        return self._gen.uniform(low, high, size=size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, n, size, replace=True):
        return self._gen.choice(n, size=size, replace=replace)


def identity(n):
    """n-by-n identity matrix (float64)."""
    return np.eye(n, dtype=np.float64)


def matmul(a, b):
    """Matrix product with an explicit inner-dimension check."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.ndim}-d and {b.ndim}-d")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


def row_l2_normalize(m, eps=1e-12, words=None):
    """Scale every row of ``m`` to unit Euclidean length.

    Raises DegenerateVectorError naming the first offending row (and its word,
    when a parallel word list is supplied) if any row norm falls below ``eps``.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        return row_l2_normalize(m[None, :], eps=eps)[0]
    norms = np.sqrt((m * m).sum(axis=1))
    bad = np.nonzero(norms < eps)[0]
    if bad.size:
        row = int(bad[0])
        word = words[row] if words is not None else None
        label = f" ({word!r})" if word is not None else ""
        raise DegenerateVectorError(
            f"row {row}{label} has near-zero norm {norms[row]:.3e}", row=row, word=word
        )
    return m / norms[:, None]


def cosine_similarity(u, v):
    """Cosine of the angle between two vectors, clipped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"vectors differ in length: {u.shape} vs {v.shape}")
    nu = np.sqrt(u @ u)
    nv = np.sqrt(v @ v)
    if nu < 1e-12 or nv < 1e-12:
        raise DegenerateVectorError("cosine undefined for a zero vector")
    return float(np.clip((u @ v) / (nu * nv), -1.0, 1.0))


def pairwise_cosine(a, b):
    """Row-wise cosine similarities between two equally shaped matrices."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"matrices differ in shape: {a.shape} vs {b.shape}")
    na = np.sqrt((a * a).sum(axis=1))
    nb = np.sqrt((b * b).sum(axis=1))
    if (na < 1e-12).any() or (nb < 1e-12).any():
        raise DegenerateVectorError("cosine undefined for a zero row")
    return np.clip((a * b).sum(axis=1) / (na * nb), -1.0, 1.0)


def draw_gaussian(rng, rows, cols, mean=0.0, stddev=1.0):
    """Matrix of i.i.d. normal draws from the given stream."""
    return rng.normal(rows, cols, mean=mean, stddev=stddev)
