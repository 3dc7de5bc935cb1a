"""
DC power flow with coefficient and bias parameters on a reduced network.

Flows follow ``p = diag(b) A theta + rho`` with ``A^T diag(b) A theta = P - gamma``.
The matrix ``B' = A^T diag(b) A`` is LU-factorized once per coefficient
vector and reused for every injection vector.
"""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from gridreduce.errors import DimensionMismatch, SingularSystem

PIVOT_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class DcFlowResult:
    flows: np.ndarray
    angles: np.ndarray = None


def build_bprime(A, b) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"incidence has {A.shape[0]} rows but b has {b.shape[0]} entries")
    return A.T @ (b[:, None] * A)


class BPrimeFactor:
    """LU factorization of ``B'`` with a relative pivot check."""

    def __init__(self, Bp):
        Bp = np.asarray(Bp, dtype=float)
        if Bp.ndim != 2 or Bp.shape[0] != Bp.shape[1]:
            raise DimensionMismatch(f"B' must be square, got {Bp.shape}")
        self.matrix = Bp
        if Bp.size == 0:
            self._lu = None
            return
        if not np.all(np.isfinite(Bp)):
            raise SingularSystem("B' has non-finite entries")
        scale = np.abs(Bp).max()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(Bp, check_finite=False)
        pivots = np.abs(np.diag(lu))
        if scale == 0 or pivots.min() < PIVOT_RTOL * scale:
            raise SingularSystem(
                f"B' is singular (smallest pivot {pivots.min():.3e}, scale {scale:.3e})")
        self._lu = (lu, piv)

    def solve(self, rhs, trans=0) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.matrix.shape[0]:
            raise DimensionMismatch(f"rhs has {rhs.shape[0]} rows, expected {self.matrix.shape[0]}")
        if self._lu is None:
            return np.zeros_like(rhs)
        return scipy.linalg.lu_solve(self._lu, rhs, trans=trans, check_finite=False)


def solve_angles(Bp, rhs) -> np.ndarray:
    """Solve ``B' theta = rhs``. ``rhs`` may hold one column per scenario."""
    return BPrimeFactor(Bp).solve(rhs)


class DCModel:
    """DC flow evaluator for one reduced network and one parameter set."""

    def __init__(self, A, params):
        self.A = np.asarray(A, dtype=float)
        self.params = params
        self.factor = BPrimeFactor(build_bprime(self.A, params.b))

    def angles(self, P_R) -> np.ndarray:
        P_R = np.asarray(P_R, dtype=float)
        n = self.A.shape[1]
        if P_R.shape[-1] != n:
            raise DimensionMismatch(f"P_R has {P_R.shape[-1]} entries, expected {n}")
        return self.factor.solve((P_R - self.params.gamma).T).T

    def flows(self, P_R, return_angles=False):
        theta = self.angles(P_R)
        p = (theta @ self.A.T) * self.params.b + self.params.rho
        return (p, theta) if return_angles else p


_cache = threading.local()


def _model_for(rn, params) -> DCModel:
    # one-entry cache; rebuilt whenever the network or any parameter changes
    key = (id(rn), params.b.tobytes(), params.gamma.tobytes(), params.rho.tobytes())
    hit = getattr(_cache, "entry", None)
    if hit is not None and hit[0] == key and hit[1] is rn:
        return hit[2]
    model = DCModel(rn.incidence, params)
    _cache.entry = (key, rn, model)
    return model


def dc_flows(rn, params, P_R) -> DcFlowResult:
    """Inter-zonal DC flows (pu) for one or many zone injection vectors."""
    if params.b.shape != (rn.n_ties,) or params.rho.shape != (rn.n_ties,):
        raise DimensionMismatch("b and rho must have one entry per tie-line")
    if params.gamma.shape != (rn.zone_count - 1,):
        raise DimensionMismatch("gamma must have one entry per non-reference zone")
    flows, theta = _model_for(rn, params).flows(P_R, return_angles=True)
    return DcFlowResult(flows, theta)


def ptdf_matrix(rn, b) -> np.ndarray:
    """``diag(b) A_R B'_R^{-1}``, ties by non-reference zones."""
    b = np.asarray(b, dtype=float)
    factor = BPrimeFactor(build_bprime(rn.incidence, b))
    return (b[:, None] * rn.incidence) @ factor.solve(np.eye(rn.incidence.shape[1]))
