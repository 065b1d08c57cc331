"""Dense numeric primitives used throughout the package.

Matrices are plain 2-D float64 numpy arrays (row-major). Every public
operation validates its input and returns finite values; vectors are 1-D
arrays. Randomness goes through :func:`rng_stream` so that every module
draws from its own deterministic stream derived from a single 64-bit seed.
"""

import hashlib

import numpy as np

from .errors import DegenerateInputError, InvalidInputError, ShapeError


def as_matrix(m, name="matrix"):
    """Coerce to a 2-D float64 array, rejecting empty or malformed input."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ShapeError("%s must be a non-empty 2-D array, got shape %s" % (name, a.shape))
    return a


def softmax_rows(m):
    """Row-wise softmax with max-subtraction for numerical stability.

    Each output row sums to 1 (within 1e-12) and every entry lies in (0, 1].
    Raises InvalidInputError if any entry is not finite.
    """
    a = as_matrix(m)
    if not np.isfinite(a).all():
        raise InvalidInputError("softmax_rows requires finite entries")
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def l2_normalize_rows(m):
    """Scale each row to unit Euclidean norm.

    Raises DegenerateInputError when a row has zero norm.
    """
    a = as_matrix(m)
    norms = np.sqrt((a * a).sum(axis=1, keepdims=True))
    if (norms == 0.0).any():
        raise DegenerateInputError("cannot normalize a zero-norm row")
    return a / norms


def cosine_similarity(a, b):
    """Cosine of the angle between two equal-length non-zero vectors."""
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError("length mismatch: %d vs %d" % (x.size, y.size))
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise DegenerateInputError("cosine similarity of a zero vector is undefined")
    # Clip: rounding can push |cos| a few ulp past 1.
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


def rng_stream(seed, name):
    """Deterministic per-module random generator.

    The stream seed is derived by hashing (seed, name) with SHA-256, so
    distinct module names give independent streams and the same (seed, name)
    pair reproduces the exact sequence on every run. The generator is
    numpy's PCG64.
    """
    digest = hashlib.sha256(("%d:%s" % (int(seed), name)).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))
