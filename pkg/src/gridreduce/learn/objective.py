"""
Squared-error loss between reduced DC flows and AC inter-zonal targets,
with analytic gradients for the coefficient and both bias vectors.

With residual ``r_m = p_dc(P_m) - t_m``, ``u_m = A theta_m`` and
``z_m = B'^{-1} A^T diag(b) r_m`` the gradients are::

    g_b     = (2/|E_R|) sum_m u_m * (r_m - A z_m)
    g_gamma = -(2/|E_R|) sum_m z_m
    g_rho   = (2/|E_R|) sum_m r_m
"""

from __future__ import annotations

import numpy as np

from gridreduce.dcpf import BPrimeFactor, build_bprime
from gridreduce.reduce import EquivalentParams


class Objective:
    """Loss and gradient over a fixed set of scenarios.

    Parameters
    ----------
    A : ndarray, shape (n_ties, n_zones - 1)
        Reduced incidence matrix.
    P_R : ndarray, shape (n_scenarios, n_zones - 1)
        Zone injections, reference zone excluded.
    targets : ndarray, shape (n_scenarios, n_ties)
        AC inter-zonal flows.
    """

    def __init__(self, A, P_R, targets):
        self.A = np.asarray(A, dtype=float)
        self.P_R = np.atleast_2d(np.asarray(P_R, dtype=float))
        self.targets = np.atleast_2d(np.asarray(targets, dtype=float))
        self.n_ties, self.n_free = self.A.shape
        if self.P_R.shape[1] != self.n_free or self.targets.shape[1] != self.n_ties:
            raise ValueError("P_R / targets do not match the incidence matrix")
        if self.P_R.shape[0] != self.targets.shape[0]:
            raise ValueError("P_R and targets have different scenario counts")

    @property
    def n_params(self) -> int:
        return 2 * self.n_ties + self.n_free

    def subset(self, idx) -> "Objective":
        return Objective(self.A, self.P_R[idx], self.targets[idx])

    def unpack(self, x) -> EquivalentParams:
        return EquivalentParams.unpack(x, self.n_ties, self.n_free + 1)

    def residuals(self, params: EquivalentParams) -> np.ndarray:
        """``p_dc - target``, one row per scenario."""
        factor = BPrimeFactor(build_bprime(self.A, params.b))
        theta = factor.solve((self.P_R - params.gamma).T)
        return ((self.A @ theta) * params.b[:, None] + params.rho[:, None]).T - self.targets

    def loss(self, params: EquivalentParams) -> float:
        r = self.residuals(params)
        return float(np.sum(r * r) / self.n_ties)

    def loss_and_grad(self, params: EquivalentParams):
        """Return ``(loss, g_b, g_gamma, g_rho)``."""
        A, b = self.A, params.b
        factor = BPrimeFactor(build_bprime(A, b))
        theta = factor.solve((self.P_R - params.gamma).T)
        u = A @ theta
        r = u * b[:, None] + params.rho[:, None] - self.targets.T
        loss = float(np.sum(r * r) / self.n_ties)
        c = 2.0 / self.n_ties
        z = factor.solve(A.T @ (b[:, None] * r), trans=1)
        g_b = c * np.sum(u * (r - A @ z), axis=1)
        g_gamma = -c * np.sum(z, axis=1)
        g_rho = c * np.sum(r, axis=1)
        return loss, g_b, g_gamma, g_rho

    # flat-vector interface for the optimizers, order [b; gamma; rho]
    def f(self, x) -> float:
        return self.loss(self.unpack(x))

    def fg(self, x):
        loss, gb, gg, gr = self.loss_and_grad(self.unpack(x))
        return loss, np.concatenate([gb, gg, gr])


def _objective(params, data):
    return Objective(data.incidence, data.P_R, data.targets)


def loss(params: EquivalentParams, data) -> float:
    """Summed squared two-norm discrepancy over ``data``, divided by the tie count."""
    if len(data) == 0:
        raise ValueError("dataset is empty")
    return _objective(params, data).loss(params)


def grad(params: EquivalentParams, data):
    """Return ``(g_b, g_gamma, g_rho)`` of :func:`loss`."""
    if len(data) == 0:
        raise ValueError("dataset is empty")
    _, gb, gg, gr = _objective(params, data).loss_and_grad(params)
    return gb, gg, gr
