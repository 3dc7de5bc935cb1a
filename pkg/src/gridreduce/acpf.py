"""
Newton-Raphson AC power flow in polar coordinates.

Unknowns are the voltage angles of every non-slack bus followed by the
voltage magnitudes of every PQ bus, both in bus order. Branches use the
standard two-port model with off-nominal tap and phase shift.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from gridreduce.errors import DimensionMismatch, NonConvergence, SingularJacobian
from gridreduce.netmodel import ACSolution, BusKind, Network

DENSE_LIMIT = 500


class _ACModel:
    """Admittance matrices and index sets derived once per network."""

    def __init__(self, net: Network):
        n, m = net.n_bus, net.n_branch
        idx = net.bus_index
        f = np.array([idx[br.from_bus] for br in net.branches], dtype=int)
        t = np.array([idx[br.to_bus] for br in net.branches], dtype=int)
        ys = np.array([complex(br.series_g, br.series_b) for br in net.branches])
        ysh = np.array([complex(br.shunt_g, br.shunt_b) for br in net.branches])
        tap = np.array([br.tap_ratio * np.exp(1j * br.phase_shift) for br in net.branches])

        ytt = ys + ysh / 2
        yff = ytt / (tap * np.conj(tap))
        yft = -ys / np.conj(tap)
        ytf = -ys / tap
        ybus_sh = np.array([complex(b.shunt_g, b.shunt_b) for b in net.buses])

        rows = np.arange(m)
        Cf = sp.csr_matrix((np.ones(m), (rows, f)), shape=(m, n))
        Ct = sp.csr_matrix((np.ones(m), (rows, t)), shape=(m, n))
        self.Yf = (sp.diags(yff) @ Cf + sp.diags(yft) @ Ct).tocsr()
        self.Yt = (sp.diags(ytf) @ Cf + sp.diags(ytt) @ Ct).tocsr()
        self.Ybus = (Cf.T @ self.Yf + Ct.T @ self.Yt + sp.diags(ybus_sh)).tocsr()
        self.dense = n < DENSE_LIMIT
        if self.dense:
            self.Ybus_d = self.Ybus.toarray()

        kinds = net.kinds
        self.ref = idx[net.ref_bus]
        self.pvpq = np.array([k for k in range(n) if k != self.ref], dtype=int)
        self.pq = np.nonzero(kinds == int(BusKind.PQ))[0]
        self.n = n
        self.f, self.t = f, t

    def power(self, V):
        Y = self.Ybus_d if self.dense else self.Ybus
        I = Y @ V
        return V * np.conj(I), I

    def jacobian_calc(self, V, I):
        """Jacobian of the computed injections (P of pvpq, Q of pq)."""
        Y = self.Ybus_d if self.dense else self.Ybus
        Vnorm = V / np.abs(V)
        if self.dense:
            dV = np.diag(V)
            dS_dVm = dV @ np.conj(Y * Vnorm[None, :]) + np.diag(np.conj(I) * Vnorm)
            dS_dVa = 1j * dV @ np.conj(np.diag(I) - Y * V[None, :])
            J11 = dS_dVa[np.ix_(self.pvpq, self.pvpq)].real
            J12 = dS_dVm[np.ix_(self.pvpq, self.pq)].real
            J21 = dS_dVa[np.ix_(self.pq, self.pvpq)].imag
            J22 = dS_dVm[np.ix_(self.pq, self.pq)].imag
            return np.block([[J11, J12], [J21, J22]])
        dV = sp.diags(V)
        dS_dVm = dV @ np.conj(Y @ sp.diags(Vnorm)) + sp.diags(np.conj(I) * Vnorm)
        dS_dVa = 1j * dV @ np.conj(sp.diags(I) - Y @ dV)
        dS_dVm, dS_dVa = dS_dVm.tocsr(), dS_dVa.tocsr()
        J11 = dS_dVa[self.pvpq][:, self.pvpq].real
        J12 = dS_dVm[self.pvpq][:, self.pq].real
        J21 = dS_dVa[self.pq][:, self.pvpq].imag
        J22 = dS_dVm[self.pq][:, self.pq].imag
        return sp.bmat([[J11, J12], [J21, J22]], format="csc")


def _model(net: Network) -> _ACModel:
    # Network is frozen, so the derived model is cached on the instance
    m = net.__dict__.get("_acpf_model")
    if m is None:
        m = _ACModel(net)
        net.__dict__["_acpf_model"] = m
    return m


def _check_len(name, v, n):
    if np.shape(v) != (n,):
        raise DimensionMismatch(f"{name} has shape {np.shape(v)}, expected ({n},)")


def _specified(net, injections, q_injections):
    P = net.p_inj.copy() if injections is None else np.array(injections, dtype=float)
    Q = net.q_inj.copy() if q_injections is None else np.array(q_injections, dtype=float)
    _check_len("injections", P, net.n_bus)
    _check_len("q_injections", Q, net.n_bus)
    return P, Q


def ac_mismatch(net: Network, v_mag, v_ang, injections=None, q_injections=None) -> np.ndarray:
    """Specified minus computed power: dP for non-slack buses, then dQ for PQ buses."""
    v_mag = np.asarray(v_mag, dtype=float)
    v_ang = np.asarray(v_ang, dtype=float)
    _check_len("v_mag", v_mag, net.n_bus)
    _check_len("v_ang", v_ang, net.n_bus)
    P, Q = _specified(net, injections, q_injections)
    m = _model(net)
    S, _ = m.power(v_mag * np.exp(1j * v_ang))
    return np.r_[P[m.pvpq] - S.real[m.pvpq], Q[m.pq] - S.imag[m.pq]]


def mismatch_jacobian(net: Network, v_mag, v_ang) -> np.ndarray:
    """Jacobian of :func:`ac_mismatch` w.r.t. ``[v_ang[pvpq], v_mag[pq]]`` (dense)."""
    m = _model(net)
    V = np.asarray(v_mag, float) * np.exp(1j * np.asarray(v_ang, float))
    _, I = m.power(V)
    J = m.jacobian_calc(V, I)
    return -(J.toarray() if sp.issparse(J) else J)


def flat_start(net: Network):
    v = np.array([b.v_mag_setpoint if b.kind != BusKind.PQ else 1.0 for b in net.buses])
    return v, np.zeros(net.n_bus)


def solve_ac(net: Network, injections=None, q_injections=None, tol=1e-8, max_iter=20) -> ACSolution:
    """Solve the AC power flow from a flat start.

    Parameters
    ----------
    injections : array_like, optional
        Per-bus real power injections (pu) overriding ``Bus.p_inj``. The
        slack entry is ignored.
    q_injections : array_like, optional
        Per-bus reactive injections (pu); only PQ entries are used.
    tol : float
        Convergence threshold on the largest absolute mismatch (pu).
    max_iter : int
        Maximum number of Newton steps.

    Returns
    -------
    ACSolution
        ``iterations`` counts mismatch evaluations, so a network that is
        already balanced at the flat start reports 1.

    Raises
    ------
    NonConvergence
        ``max_iter`` steps taken without meeting ``tol``.
    SingularJacobian
        The Newton system could not be factorized.
    """
    P, Q = _specified(net, injections, q_injections)
    m = _model(net)
    vm, va = flat_start(net)
    V = vm * np.exp(1j * va)
    npv = len(m.pvpq)

    it = 0
    while True:
        S, I = m.power(V)
        F = np.r_[P[m.pvpq] - S.real[m.pvpq], Q[m.pq] - S.imag[m.pq]]
        it += 1
        norm = np.max(np.abs(F)) if F.size else 0.0
        if not np.isfinite(norm):
            raise NonConvergence("mismatch diverged", it, norm)
        if norm <= tol:
            break
        if it > max_iter:
            raise NonConvergence(
                f"no convergence after {max_iter} Newton steps (max mismatch {norm:.3e} pu)",
                it, norm)
        J = m.jacobian_calc(V, I)
        dx = _newton_step(J, F)
        va[m.pvpq] += dx[:npv]
        vm[m.pq] += dx[npv:]
        V = vm * np.exp(1j * va)

    va = va - va[m.ref]
    V = vm * np.exp(1j * va)
    sf, st = _branch_power(m, V)
    return ACSolution(vm.copy(), va.copy(), sf.real, sf.imag, True, it, float(norm),
                      st.real, st.imag)


def _newton_step(J, F):
    if sp.issparse(J):
        try:
            lu = spla.splu(J)
        except RuntimeError as e:
            raise SingularJacobian(str(e)) from None
        dx = lu.solve(F)
    else:
        lu, piv = scipy.linalg.lu_factor(J, check_finite=False)
        d = np.abs(np.diag(lu))
        if d.size and d.min() <= 1e-14 * max(d.max(), 1.0):
            raise SingularJacobian("Newton Jacobian is singular")
        dx = scipy.linalg.lu_solve((lu, piv), F, check_finite=False)
    if not np.all(np.isfinite(dx)):
        raise SingularJacobian("Newton step is not finite")
    return dx


def _branch_power(m, V):
    return V[m.f] * np.conj(m.Yf @ V), V[m.t] * np.conj(m.Yt @ V)


def branch_flows(net: Network, sol, ends="from"):
    """Per-branch real and reactive flow in pu, positive from -> to.

    ``sol`` is an :class:`ACSolution` or a ``(v_mag, v_ang)`` pair. With
    ``ends="both"`` returns ``(p_from, q_from, p_to, q_to)``, the to-end
    values measured into the branch at the to bus.
    """
    if isinstance(sol, ACSolution):
        vm, va = sol.v_mag, sol.v_ang
    else:
        vm, va = sol
    m = _model(net)
    V = np.asarray(vm, float) * np.exp(1j * np.asarray(va, float))
    sf, st = _branch_power(m, V)
    if ends == "both":
        return sf.real, sf.imag, st.real, st.imag
    return sf.real, sf.imag
