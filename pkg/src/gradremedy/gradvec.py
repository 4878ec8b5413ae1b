"""Flat gradient vectors and the angle geometry everything else builds on.

A layer's gradient tensor is flattened row-major into a 1-D float64 vector
carrying its original shape, so the surgery strategies can treat every layer
as a plain vector and the trainer can reshape the result back bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import acos

import numpy as np

from . import _kernels

# 2-norms below this are treated as zero: the direction of such a gradient is
# numerically meaningless, so angle-based operations skip it.
DEFAULT_TOL_NORM = 1e-12


@dataclass(frozen=True)
class GradientVector:
    """One layer's gradient, flattened row-major, plus the shape to restore.

    values is always a C-contiguous float64 1-D array and is treated as
    immutable by every operation in this package.
    """

    values: np.ndarray
    shape: tuple[int, ...]

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError(f"values must be 1-D, got ndim={values.ndim}")
        shape = tuple(int(d) for d in self.shape)
        if len(shape) == 0 or any(d < 1 for d in shape):
            raise ValueError(f"shape must be positive dimensions, got {shape}")
        expected = int(np.prod(shape))
        if values.size != expected:
            raise ValueError(
                f"length {values.size} does not match shape {shape} "
                f"(product {expected})"
            )
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ValueError(f"non-finite gradient entry at flat index {bad}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "shape", shape)

    def __len__(self) -> int:
        return self.values.size

    def norm(self) -> float:
        return _kernels.norm(self.values)

    def with_values(self, values: np.ndarray) -> "GradientVector":
        """Same shape metadata, new flat values."""
        return GradientVector(values, self.shape)


@dataclass(frozen=True)
class AngleReport:
    """Angle between two gradients; degenerate when either norm is ~zero.

    phi and cos_phi are None exactly when degenerate is True.
    """

    phi: float | None
    cos_phi: float | None
    degenerate: bool


def flatten(tensor_values, label: str = "") -> GradientVector:
    """Row-major flatten of a gradient tensor into a GradientVector.

    label, when given, is prepended to the error message for non-finite
    entries so callers can name the offending layer.
    """
    arr = np.asarray(tensor_values, dtype=np.float64)
    if arr.ndim == 0:
        raise ValueError("scalar input: pass at least a 1-D array")
    if not np.all(np.isfinite(arr)):
        flat = arr.reshape(-1)
        bad = int(np.flatnonzero(~np.isfinite(flat))[0])
        where = f"{label}: " if label else ""
        raise ValueError(
            f"{where}non-finite gradient entry at flat index {bad} "
            f"(shape {arr.shape})"
        )
    return GradientVector(arr.reshape(-1, order="C").copy(), arr.shape)


def reshape(g: GradientVector) -> np.ndarray:
    """Inverse of flatten; round-trips bit-exactly."""
    return g.values.reshape(g.shape, order="C").copy()


def angle_between(
    a: GradientVector,
    b: GradientVector,
    tol_norm: float = DEFAULT_TOL_NORM,
) -> AngleReport:
    """Angle between two equal-length gradients.

    cos is clamped to [-1, 1] before acos so near-parallel rounding can
    never produce NaN. Either norm below tol_norm makes the report
    degenerate.
    """
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    dot, norm_a, norm_b = _kernels.dot_and_norms(a.values, b.values)
    if norm_a < tol_norm or norm_b < tol_norm:
        return AngleReport(phi=None, cos_phi=None, degenerate=True)
    cos_phi = min(1.0, max(-1.0, dot / (norm_a * norm_b)))
    return AngleReport(phi=acos(cos_phi), cos_phi=cos_phi, degenerate=False)
