"""Complex linear-algebra and random-sampling primitives.

All random draws go through numpy Generators created by :func:`make_rng` /
:func:`substream` so that every experiment is reproducible from a single
64-bit seed and independent substreams can be carved out by label
(e.g. per realization, per generation).
"""

import hashlib

import numpy as np

from .errors import NumericalError

__all__ = [
    "make_rng",
    "substream",
    "sample_circular_gaussian",
    "gram",
    "cholesky_hpd",
    "solve_hpd",
]

_SEED_MASK = (1 << 64) - 1


def _label_word(label):
    """Map a substream label to a stable 64-bit word (no salted hash())."""
    if isinstance(label, (int, np.integer)):
        return int(label) & _SEED_MASK
    digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed):
    """Root generator for a given 64-bit seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed) & _SEED_MASK))


def substream(seed, *labels):
    """Independent generator keyed by (seed, labels).

    The same (seed, labels) always yields the same stream; different labels
    give statistically independent streams.
    """
    entropy = [int(seed) & _SEED_MASK] + [_label_word(lab) for lab in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def sample_circular_gaussian(rng, n, variance):
    """Draw n i.i.d. CN(0, variance) entries (real/imag each variance/2)."""
    if variance < 0:
        raise ValueError(f"variance must be >= 0, got {variance}")
    if variance == 0:
        return np.zeros(n, dtype=complex)
    x = rng.standard_normal(2 * n)
    return np.sqrt(variance / 2) * (x[:n] + 1j * x[n:])


def circular_gaussian(rng, shape, variance=1.0):
    """Array version of :func:`sample_circular_gaussian` for batched draws."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    out = (re + 1j * im) * np.sqrt(variance / 2)
    return out


def gram(a):
    """Return A^H A (Hermitian positive semidefinite)."""
    a = np.asarray(a)
    return a.conj().T @ a


def cholesky_hpd(a, tol=1e-12):
    """Lower Cholesky factor of a Hermitian positive definite matrix.

    Pivots are checked against ``tol * trace(a)/n``; a failing pivot raises
    :class:`NumericalError` carrying its index.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"expected square matrix, got {a.shape}")
    floor = tol * max(np.real(np.trace(a)) / n, 0.0)
    low = np.zeros_like(a)
    for j in range(n):
        d = a[j, j].real - np.real(np.vdot(low[j, :j], low[j, :j]))
        if not np.isfinite(d) or d <= floor:
            raise NumericalError("matrix not positive definite within tolerance", pivot=j)
        low[j, j] = np.sqrt(d)
        if j + 1 < n:
            low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j].conj()) / low[j, j]
    return low


def solve_hpd(a, b):
    """Solve a @ X = b for Hermitian positive definite ``a``.

    Relative residual is <= 1e-10 for well-conditioned inputs. Raises
    :class:`NumericalError` with the failing pivot index when ``a`` is not
    HPD within tolerance.
    """
    b = np.asarray(b, dtype=complex)
    low = cholesky_hpd(a)
    y = _forward_sub(low, b)
    return _backward_sub(low.conj().T, y)


def _forward_sub(low, b):
    n = low.shape[0]
    y = np.array(b, dtype=complex)
    if y.ndim == 1:
        y = y[:, None]
        squeeze = True
    else:
        squeeze = False
    for i in range(n):
        y[i] -= low[i, :i] @ y[:i]
        y[i] /= low[i, i]
    return y[:, 0] if squeeze else y


def _backward_sub(up, b):
    n = up.shape[0]
    x = np.array(b, dtype=complex)
    if x.ndim == 1:
        x = x[:, None]
        squeeze = True
    else:
        squeeze = False
    for i in range(n - 1, -1, -1):
        x[i] -= up[i, i + 1:] @ x[i + 1:]
        x[i] /= up[i, i]
    return x[:, 0] if squeeze else x
