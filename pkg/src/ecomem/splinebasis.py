"""Clamped B-spline bases over lags and second-order difference penalties."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline


class InvalidDimension(ValueError):
    pass


@dataclass(frozen=True)
class SplineDesign:
    """Basis evaluations ``H`` at lags ``0..L`` and penalty ``S = D2' D2``."""

    H: np.ndarray
    S: np.ndarray
    knots: np.ndarray
    order: int

    @property
    def L(self) -> int:
        return self.H.shape[0] - 1

    @property
    def k(self) -> int:
        return self.H.shape[1]

    def to_dict(self) -> dict:
        return {"L": self.L, "k": self.k, "order": self.order, "knots": self.knots.tolist()}


def difference_matrix(k: int, d: int = 2) -> np.ndarray:
    return np.diff(np.eye(k), n=d, axis=0)


def knot_vector(L: int, k: int, order: int = 4) -> np.ndarray:
    interior = np.linspace(0.0, float(L), k - order + 2)[1:-1]
    return np.concatenate([np.zeros(order), interior, np.full(order, float(L))])


def build_design(L: int, k: int, order: int = 4) -> SplineDesign:
    """Cubic (by default) B-spline basis on ``[0, L]`` evaluated at integer lags.

    ``k - order`` interior knots are spaced evenly in ``(0, L)`` and the
    boundary knots are repeated ``order`` times.
    """
    if order < 2:
        raise InvalidDimension(f"spline order must be >= 2, got {order}")
    if k < order:
        raise InvalidDimension(f"basis dimension k={k} below spline order {order}")
    if k > L + 1:
        raise InvalidDimension(f"basis dimension k={k} exceeds L+1={L + 1}")
    knots = knot_vector(L, k, order)
    H = BSpline.design_matrix(np.arange(L + 1, dtype=float), knots, order - 1).toarray()
    D = difference_matrix(k, 2)
    S = D.T @ D
    H.setflags(write=False)
    S.setflags(write=False)
    return SplineDesign(H=H, S=S, knots=knots, order=order)


def generalized_inverse_logdet(S: np.ndarray, rtol: float = 1e-10) -> tuple[float, int]:
    """Log pseudo-determinant and numerical rank of a symmetric PSD matrix.

    Eigenvalues at or below ``rtol * max eigenvalue`` count as zero.
    """
    S = np.asarray(S, dtype=float)
    if S.size == 0:
        return 0.0, 0
    ev = np.linalg.eigvalsh(S)
    top = ev.max()
    if top <= 0:
        return 0.0, 0
    pos = ev[ev > rtol * top]
    return float(np.sum(np.log(pos))), int(pos.size)
