"""Dense-array helpers and the small linear-algebra kernels everything else uses.

Arrays are plain numpy ndarrays: matrices are 2-D, videos are (T, C, H, W),
hidden states are (frames, tokens, channels). Measurement operators here are
tiny (a few dozen rows at most), so the pseudo-inverse goes through an
explicit Gram-matrix solve with partial-pivot elimination rather than any
iterative machinery.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, RangeError, RankError


def checked(a, name: str = "array") -> np.ndarray:
    """Validate an array for checked-mode construction: finite entries only."""
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def gaussian_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b by Gaussian elimination with partial pivoting.

    Sized for the small Gram systems this package produces; raises RankError
    when a pivot collapses.
    """
    a = np.array(a, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square system, got {a.shape}")
    n = a.shape[0]
    rhs = b.reshape(n, -1).astype(np.float64)
    tol = n * np.finfo(np.float64).eps * max(np.abs(a).max(), 1.0)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[piv, col]) <= tol:
            raise RankError(f"singular system: pivot {col} below tolerance {tol:g}")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            rhs[[col, piv]] = rhs[[piv, col]]
        factors = a[col + 1 :, col] / a[col, col]
        a[col + 1 :, col:] -= factors[:, None] * a[col, col:]
        rhs[col + 1 :] -= factors[:, None] * rhs[col]
    x = np.empty_like(rhs)
    for row in range(n - 1, -1, -1):
        x[row] = (rhs[row] - a[row, row + 1 :] @ x[row + 1 :]) / a[row, row]
    return x.reshape(b.shape)


def pseudo_inverse(a: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse of a full-row-rank matrix via Aᵀ(AAᵀ)⁻¹.

    The Gram matrix AAᵀ is solved directly; a rank-deficient operand raises
    RankError.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"pseudo_inverse expects a matrix, got {a.ndim}-D")
    gram = a @ a.T
    # solve (AAᵀ) X = A, then A† = Xᵀ
    return gaussian_solve(gram, a).T


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted by the row max so large scores cannot overflow."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"softmax_rows expects a matrix, got {m.ndim}-D")
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def channel_stats(video: np.ndarray, frame: int):
    """Per-channel mean and population std over one frame's H x W plane."""
    video = np.asarray(video)
    if video.ndim != 4:
        raise DimensionError(f"expected a (T, C, H, W) video, got shape {video.shape}")
    t = video.shape[0]
    if not -t <= frame < t:
        raise RangeError(f"frame {frame} out of range for {t}-frame video")
    plane = video[frame].reshape(video.shape[1], -1)
    mean = plane.mean(axis=1)
    # population normalization (1/(H*W)), matching the instance-norm usage
    std = np.sqrt(((plane - mean[:, None]) ** 2).mean(axis=1))
    return mean, std
