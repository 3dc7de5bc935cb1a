"""Training data: zone injections paired with AC inter-zonal flows."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from gridreduce.acpf import solve_ac
from gridreduce.errors import NonConvergence, SingularJacobian, TooManyFailures
from gridreduce.reduce import EquivalentParams, Reduction, aggregate_flows, aggregate_injections

logger = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.01


@dataclass(frozen=True, eq=False)
class Dataset:
    P_R: np.ndarray  # S x (n_zones - 1), pu
    targets: np.ndarray  # S x n_ties, pu
    scenario_ids: np.ndarray
    is_train: np.ndarray
    tie_order: tuple
    zone_count: int
    ref_zone: int
    base_mva: float = 100.0
    zone_hash: str = ""
    n_discarded: int = 0
    baseline: EquivalentParams = None  # init_params of the reduction
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.P_R.shape[0]

    @property
    def incidence(self) -> np.ndarray:
        A = np.zeros((len(self.tie_order), self.zone_count))
        for k, (a, b) in enumerate(self.tie_order):
            A[k, a] = 1.0
            A[k, b] = -1.0
        return np.delete(A, self.ref_zone, axis=1)

    def subset(self, idx) -> "Dataset":
        return replace(self, P_R=self.P_R[idx], targets=self.targets[idx],
                       scenario_ids=self.scenario_ids[idx], is_train=self.is_train[idx])

    def train(self) -> "Dataset":
        return self.subset(np.nonzero(self.is_train)[0])

    def test(self) -> "Dataset":
        return self.subset(np.nonzero(~self.is_train)[0])


def _solve_chunk(args):
    net, flow_agg, P, Q, tol, max_iter = args
    out = []
    for p, q in zip(P, Q):
        try:
            sol = solve_ac(net, p, q, tol=tol, max_iter=max_iter)
        except (NonConvergence, SingularJacobian):
            out.append(None)
            continue
        out.append(aggregate_flows(sol.p_flow_from, flow_agg))
    return out


def build_dataset(net, zp, scen, tol=1e-8, max_iter=20, workers=1,
                  max_failure_fraction=MAX_FAILURE_FRACTION) -> Dataset:
    """Solve AC power flow per scenario and aggregate to the reduced network.

    Scenarios whose AC solve fails are dropped and counted in
    ``n_discarded``. Results do not depend on ``workers``.

    Raises
    ------
    TooManyFailures
        More than ``max_failure_fraction`` of the scenarios failed.
    """
    red = Reduction.build(net, zp)
    S = len(scen)
    P, Q = scen.injections, scen.q_injections
    if workers > 1 and S > 1:
        chunks = np.array_split(np.arange(S), workers * 4)
        jobs = [(net, red.flow_agg, P[c], Q[c], tol, max_iter) for c in chunks if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flows = [f for part in pool.map(_solve_chunk, jobs) for f in part]
    else:
        flows = _solve_chunk((net, red.flow_agg, P, Q, tol, max_iter))

    ok = np.array([f is not None for f in flows], dtype=bool)
    n_bad = int(S - ok.sum())
    if n_bad > max_failure_fraction * S:
        raise TooManyFailures(
            f"{n_bad} of {S} scenarios failed to converge (limit {max_failure_fraction:.0%}); "
            "sigma may be too large for this case")
    if n_bad:
        logger.warning("dropped %d non-converged scenarios", n_bad)

    targets = np.array([f for f in flows if f is not None]).reshape(-1, red.reduced.n_ties)
    rn = red.reduced
    return Dataset(
        P_R=aggregate_injections(P[ok], red.inj_agg, red.partition),
        targets=targets,
        scenario_ids=np.arange(S)[ok],
        is_train=scen.is_train[ok],
        tie_order=tuple(tuple(t) for t in rn.tie_order),
        zone_count=rn.zone_count,
        ref_zone=rn.ref_zone,
        base_mva=net.base_mva,
        zone_hash=red.zone_hash,
        n_discarded=n_bad,
        baseline=red.baseline(),
        meta={"seed": scen.seed, "sigma": scen.sigma},
    )


def dataset_from_arrays(red: Reduction, P_R, targets, is_train=None) -> Dataset:
    """Wrap precomputed arrays (one row per scenario) as a :class:`Dataset`."""
    P_R = np.atleast_2d(np.asarray(P_R, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    S = P_R.shape[0]
    rn = red.reduced
    return Dataset(P_R, targets, np.arange(S),
                   np.ones(S, dtype=bool) if is_train is None else np.asarray(is_train, bool),
                   tuple(tuple(t) for t in rn.tie_order), rn.zone_count, rn.ref_zone,
                   red.net.base_mva, red.zone_hash, baseline=red.baseline())
