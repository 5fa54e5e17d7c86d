"""Dense matrix semantics of the FFT operator algebra.

Every tensor is a rank-2 ``complex128`` numpy array.  These functions are the
compile-time constant folder used by lowering and the reference semantics the
tests check the loop-level pipeline against.

The Cooley-Tukey split of an ``N = K * M`` point transform reads::

    DFT(N) = (DFT(K) ⊗ I(M)) · twiddle(N, M) · (I(K) ⊗ DFT(M)) · Permute(N, K)
"""

from __future__ import annotations

import numpy as np

from .errors import DivisibilityError, ShapeMismatch

ComplexTensor = np.ndarray


def as_tensor(values) -> ComplexTensor:
    """Coerce nested numbers or an array into a rank-2 complex128 tensor."""
    arr = np.asarray(values, dtype=np.complex128)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"expected a rank-2 tensor, got rank {arr.ndim}")
    return arr


def _check_size(n: int) -> None:
    if int(n) != n or n < 1:
        raise ValueError(f"transform size must be a positive integer, got {n!r}")


def unit_roots(exponents: np.ndarray, n: int) -> np.ndarray:
    """``exp(-2j*pi*e/n)`` for integer exponents ``e``.

    Exponents are reduced modulo ``n`` in integer arithmetic before the angle
    is formed, so the phase error does not grow with ``e``.  Quarter turns are
    returned exactly.
    """
    e = np.mod(np.asarray(exponents, dtype=np.int64), n)
    angle = -2.0 * np.pi * e / n
    out = np.cos(angle) + 1j * np.sin(angle)
    quarter = (4 * e) % n == 0
    if quarter.any():
        exact = np.array([1.0, -1j, -1.0, 1j])
        out = np.where(quarter, exact[(4 * e // n) % 4], out)
    return out.astype(np.complex128)


def dft_matrix(n: int) -> ComplexTensor:
    _check_size(n)
    r = np.arange(n, dtype=np.int64)
    return unit_roots(np.outer(r, r) % n, n)


def identity_matrix(n: int) -> ComplexTensor:
    _check_size(n)
    return np.eye(n, dtype=np.complex128)


def twiddle_matrix(n: int, m: int) -> ComplexTensor:
    """Diagonal twiddle matrix; position ``b*m + j`` holds ``w_n**(b*j)``."""
    _check_size(n)
    _check_size(m)
    if n % m:
        raise DivisibilityError(n, m)
    idx = np.arange(n, dtype=np.int64)
    out = np.zeros((n, n), dtype=np.complex128)
    out[idx, idx] = unit_roots((idx // m) * (idx % m), n)
    return out


def stride_permutation_matrix(n: int, k: int) -> ComplexTensor:
    """Permutation gathering at stride ``k``: ``(P x)[r*m + q] = x[q*k + r]``."""
    _check_size(n)
    _check_size(k)
    if n % k:
        raise DivisibilityError(n, k)
    m = n // k
    dst = np.arange(n, dtype=np.int64)
    r, q = dst // m, dst % m
    out = np.zeros((n, n), dtype=np.complex128)
    out[dst, q * k + r] = 1.0
    return out


def kronecker(a: ComplexTensor, b: ComplexTensor) -> ComplexTensor:
    a, b = as_tensor(a), as_tensor(b)
    (p, q), (r, s) = a.shape, b.shape
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(p * r, q * s)


def matmul(a: ComplexTensor, b: ComplexTensor) -> ComplexTensor:
    """Complex matrix product with a fixed, sequential inner accumulation order."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(None, f"{a.shape[1]} rows on the right", f"{b.shape[0]}",
                            "matmul inner dimensions")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.complex128)
    for k in range(a.shape[1]):
        out += a[:, k:k + 1] * b[k:k + 1, :]
    return out


def create_complex(re: ComplexTensor, im: ComplexTensor) -> ComplexTensor:
    re, im = as_tensor(re), as_tensor(im)
    if re.shape != im.shape:
        raise ShapeMismatch(None, re.shape, im.shape, "createComplex operands")
    if np.any(re.imag) or np.any(im.imag):
        raise ValueError("createComplex operands must be real")
    return re.real + 1j * im.real


def reference_dft(x: ComplexTensor) -> ComplexTensor:
    """Direct O(n^2) DFT of a column vector; the verification oracle.

    Deliberately shares no code with :func:`dft_matrix` or :func:`matmul`.
    """
    x = as_tensor(x)
    if x.shape[1] != 1:
        raise ShapeMismatch(None, "n x 1 column vector", x.shape)
    n = x.shape[0]
    m = np.arange(n)
    y = np.zeros(n, dtype=np.complex128)
    for c in range(n):
        y += x[c, 0] * np.exp(-2j * np.pi * ((m * c) % n) / n)
    return y.reshape(n, 1)
