"""
Gradient-based training of reduced-network parameters.

All methods share one Armijo backtracking line search. A trial point whose
``B'`` is singular is treated like a failed Armijo test (the step is
halved), and training aborts after ``max_singular_halvings`` consecutive
singular trials.

Search runs in scaled variables ``x / s``. With ``scale="auto"`` the
``b`` entries are scaled by their starting magnitude and the biases by 1,
which evens out curvature between the two parameter groups.

Training stops when the scaled gradient infinity-norm reaches ``tol``, when
one iteration (one epoch in mini-batch mode) lowers the loss by a relative
amount below ``ftol``, or at ``max_iter``.

Mini-batch mode (``batch_size`` set) runs epochs over shuffled batches,
taking one line-searched step per batch. Curvature pairs are measured on
the batch that produced the step, and all curvature memory is discarded at
every epoch boundary.
"""

from __future__ import annotations

import enum
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from gridreduce.errors import SingularSystem, TrainingAborted
from gridreduce.learn.objective import Objective
from gridreduce.reduce import EquivalentParams

ARMIJO_C1 = 1e-4
MAX_BACKTRACKS = 60


class Method(str, enum.Enum):
    GD = "gd"
    BFGS = "bfgs"
    LBFGS = "lbfgs"
    TNC = "tnc"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, Method):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown method {value!r}; choose from gd, bfgs, lbfgs, tnc")


@dataclass
class HyperParams:
    max_iter: int = None  # default: 500 full-batch iterations / 50 epochs
    tol: float = 1e-6  # on the infinity-norm of the scaled gradient
    ftol: float = 2.2e-9  # relative loss decrease per iteration (or epoch); 0 disables
    batch_size: int = None  # None -> full batch
    seed: int = 0
    memory: int = 10  # L-BFGS pairs
    lower_b: float = None  # TNC only: project b onto [lower_b, inf)
    freeze: tuple = ()  # subset of {"b", "gamma", "rho"} held fixed
    max_singular_halvings: int = 20
    max_cg_iter: int = 50
    scale: str = "auto"  # "auto" or "none"

    def resolved_max_iter(self) -> int:
        if self.max_iter is not None:
            return int(self.max_iter)
        return 50 if self.batch_size else 500


@dataclass
class TrainReport:
    params: EquivalentParams
    loss_history: list
    grad_norm_history: list
    method: Method
    iterations: int
    converged: bool
    message: str
    n_evals: int = 0
    wall_time: float = field(default=0.0, compare=False)


class _Counter:
    """Objective in scaled variables, with frozen entries masked out."""

    def __init__(self, obj: Objective, mask, scale):
        self.obj = obj
        self.mask = mask
        self.scale = scale
        self.n = 0

    def fg(self, y):
        self.n += 1
        f, g = self.obj.fg(y * self.scale)
        return f, g * self.scale * self.mask


# ---------------------------------------------------------------------------
# search directions


class _Direction:
    def reset(self):
        pass

    def update(self, s, y):
        pass

    def __call__(self, x, g, prob):
        return -g

    def first_step(self, g):
        return 1.0


class _GD(_Direction):
    def __init__(self):
        self.alpha = None

    def reset(self):
        self.alpha = None

    def first_step(self, g):
        if self.alpha is None:
            return 1.0 / max(np.linalg.norm(g), 1.0)
        return min(2.0 * self.alpha, 1e6)

    def accepted(self, alpha):
        self.alpha = alpha


def _curvature_ok(s, y):
    sy = s @ y
    return sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y) and sy > 0


class _BFGS(_Direction):
    def __init__(self, n):
        self.n = n
        self.reset()

    def reset(self):
        self.H = None

    def first_step(self, g):
        return 1.0 if self.H is not None else 1.0 / max(np.linalg.norm(g), 1.0)

    def __call__(self, x, g, prob):
        return -g if self.H is None else -(self.H @ g)

    def update(self, s, y):
        if not _curvature_ok(s, y):
            return
        if self.H is None:
            self.H = (s @ y) / (y @ y) * np.eye(self.n)
        rho = 1.0 / (s @ y)
        Hy = self.H @ y
        self.H = (self.H - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                  + (rho * rho * (y @ Hy) + rho) * np.outer(s, s))


class _LBFGS(_Direction):
    def __init__(self, memory):
        self.pairs = deque(maxlen=memory)

    def reset(self):
        self.pairs.clear()

    def first_step(self, g):
        return 1.0 if self.pairs else 1.0 / max(np.linalg.norm(g), 1.0)

    def __call__(self, x, g, prob):
        if not self.pairs:
            return -g
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(self.pairs):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        s, y, _ = self.pairs[-1]
        r = (s @ y) / (y @ y) * q
        for (s, y, rho), a in zip(self.pairs, reversed(alphas)):
            b = rho * (y @ r)
            r += (a - b) * s
        return -r

    def update(self, s, y):
        if _curvature_ok(s, y):
            self.pairs.append((s, y, 1.0 / (s @ y)))


class _TNC(_Direction):
    """Truncated Newton: CG on finite-difference Hessian-vector products."""

    def __init__(self, max_cg):
        self.max_cg = max_cg

    def __call__(self, x, g, prob):
        gnorm = np.linalg.norm(g)
        if gnorm == 0:
            return -g
        forcing = min(0.5, np.sqrt(gnorm))
        z = np.zeros_like(g)
        r = -g
        p = r.copy()
        rr = r @ r
        xscale = 1.0 + np.linalg.norm(x)
        for j in range(self.max_cg):
            pn = np.linalg.norm(p)
            eps = np.sqrt(np.finfo(float).eps) * xscale / pn
            try:
                _, g2 = prob.fg(x + eps * p)
            except SingularSystem:
                break
            Hp = (g2 - g) / eps
            curv = p @ Hp
            if curv <= 1e-12 * pn * pn:
                break
            a = rr / curv
            z += a * p
            r -= a * Hp
            rr_new = r @ r
            if np.sqrt(rr_new) <= forcing * gnorm:
                break
            p = r + (rr_new / rr) * p
            rr = rr_new
        if not z.any() or z @ g >= 0:
            return -g
        return z


# ---------------------------------------------------------------------------
# line search


def _project(x, lower, n_ties):
    if lower is None:
        return x
    x = x.copy()
    np.maximum(x[:n_ties], lower, out=x[:n_ties])
    return x


def _armijo(prob, x, f, g, d, alpha, lower, n_ties, max_singular, where):
    """Backtracking search. Returns (x, f, g, alpha) or None if no decrease found."""
    singular = 0
    for _ in range(MAX_BACKTRACKS):
        x_new = _project(x + alpha * d, lower, n_ties)
        try:
            f_new, g_new = prob.fg(x_new)
        except SingularSystem as e:
            singular += 1
            if singular >= max_singular:
                raise TrainingAborted(
                    f"B' singular on {singular} consecutive trial steps ({where})",
                    {"where": where, "alpha": alpha, "last_error": str(e),
                     "x_norm": float(np.linalg.norm(x)), "loss": f,
                     "grad_inf_norm": float(np.max(np.abs(g)))},
                ) from e
            alpha *= 0.5
            continue
        if np.isfinite(f_new) and f_new <= f + ARMIJO_C1 * (g @ (x_new - x)):
            return x_new, f_new, g_new, alpha
        alpha *= 0.5
    return None


# ---------------------------------------------------------------------------
# drivers


def _stalled(f_old, f_new, ftol):
    # a mini-batch epoch can raise the full loss; that is not a stall
    return ftol > 0 and 0.0 <= f_old - f_new <= ftol * max(abs(f_old), abs(f_new), 1.0)


def _make_direction(method, n, hp):
    if method is Method.GD:
        return _GD()
    if method is Method.BFGS:
        return _BFGS(n)
    if method is Method.LBFGS:
        return _LBFGS(hp.memory)
    return _TNC(hp.max_cg_iter)


def _step(prob, direction, x, f, g, lower, n_ties, hp, where):
    """One line-searched step; falls back to steepest descent once."""
    d = direction(x, g, prob)
    if g @ d >= 0:
        direction.reset()
        d = -g
    res = _armijo(prob, x, f, g, d, direction.first_step(g), lower, n_ties,
                  hp.max_singular_halvings, where)
    if res is None and not np.array_equal(d, -g):
        direction.reset()
        res = _armijo(prob, x, f, g, -g, direction.first_step(g), lower, n_ties,
                      hp.max_singular_halvings, where)
    if res is None:
        return None
    x_new, f_new, g_new, alpha = res
    if isinstance(direction, _GD):
        direction.accepted(alpha)
    direction.update(x_new - x, g_new - g)
    return x_new, f_new, g_new


def _mask(obj, freeze):
    nt, nz = obj.n_ties, obj.n_free
    m = np.ones(obj.n_params)
    blocks = {"b": slice(0, nt), "gamma": slice(nt, nt + nz), "rho": slice(nt + nz, None)}
    for name in freeze:
        m[blocks[name]] = 0.0
    return m


def _scale(x0, n_ties, how):
    s = np.ones_like(x0)
    if how == "auto":
        b = np.abs(x0[:n_ties])
        s[:n_ties] = np.where(b > 0, b, 1.0)
    elif how != "none":
        raise ValueError(f"unknown scale {how!r}; use 'auto' or 'none'")
    return s


def optimize(data, method="lbfgs", hp: HyperParams = None,
             init: EquivalentParams = None) -> TrainReport:
    """Fit ``b``, ``gamma`` and ``rho`` to the scenarios in ``data``.

    Parameters
    ----------
    data : Dataset
        Training scenarios (every row is used).
    method : {"gd", "bfgs", "lbfgs", "tnc"}
    hp : HyperParams, optional
    init : EquivalentParams, optional
        Starting point. Defaults to ``data.baseline``, the parameters from
        :func:`gridreduce.reduce.init_params`.

    Raises
    ------
    TrainingAborted
        Repeated singular ``B'`` at trial points.
    """
    method = Method.parse(method)
    hp = hp or HyperParams()
    start = init if init is not None else data.baseline
    if start is None:
        raise ValueError("dataset carries no baseline parameters; pass init")
    if len(data) == 0:
        raise ValueError("dataset is empty")

    t0 = time.perf_counter()
    full = Objective(data.incidence, data.P_R, data.targets)
    mask = _mask(full, hp.freeze)
    n_ties = full.n_ties
    x0 = start.pack()
    scale = _scale(x0, n_ties, hp.scale)
    prob = _Counter(full, mask, scale)
    lower = None
    if method is Method.TNC and hp.lower_b is not None:
        lower = hp.lower_b / scale[:n_ties]
    x = _project(x0 / scale, lower, n_ties)
    direction = _make_direction(method, full.n_params, hp)
    max_iter = hp.resolved_max_iter()

    try:
        f, g = prob.fg(x)
    except SingularSystem as e:
        raise TrainingAborted(f"starting point has singular B': {e}") from e
    losses, gnorms = [f], [float(np.max(np.abs(g)))]
    converged, message, it = False, "iteration limit reached", 0

    if not hp.batch_size:
        for it in range(1, max_iter + 1):
            if gnorms[-1] <= hp.tol:
                converged, message, it = True, "gradient tolerance met", it - 1
                break
            res = _step(prob, direction, x, f, g, lower, n_ties, hp, f"iteration {it}")
            if res is None:
                message, it = "line search found no decrease", it - 1
                converged = gnorms[-1] <= hp.tol
                break
            x, f, g = res
            losses.append(f)
            gnorms.append(float(np.max(np.abs(g))))
            if _stalled(losses[-2], f, hp.ftol) and gnorms[-1] > hp.tol:
                converged, message = True, "relative loss decrease below ftol"
                break
        else:
            converged = gnorms[-1] <= hp.tol
            if converged:
                message = "gradient tolerance met"
    else:
        rng = np.random.default_rng(hp.seed)
        S = len(data)
        bs = int(hp.batch_size)
        for it in range(1, max_iter + 1):
            if gnorms[-1] <= hp.tol:
                converged, message, it = True, "gradient tolerance met", it - 1
                break
            direction.reset()
            order = rng.permutation(S)
            for k, start_i in enumerate(range(0, S, bs)):
                batch = _Counter(full.subset(np.sort(order[start_i:start_i + bs])), mask, scale)
                try:
                    fb, gb = batch.fg(x)
                except SingularSystem as e:
                    raise TrainingAborted(f"singular B' at epoch {it} start: {e}") from e
                res = _step(batch, direction, x, fb, gb, lower, n_ties, hp,
                            f"epoch {it} batch {k}")
                prob.n += batch.n
                if res is not None:
                    x = res[0]
            f, g = prob.fg(x)
            losses.append(f)
            gnorms.append(float(np.max(np.abs(g))))
            if _stalled(losses[-2], f, hp.ftol) and gnorms[-1] > hp.tol:
                converged, message = True, "relative loss decrease below ftol"
                break
        else:
            converged = gnorms[-1] <= hp.tol
            if converged:
                message = "gradient tolerance met"

    params = EquivalentParams.unpack(x * scale, n_ties, full.n_free + 1)
    return TrainReport(params, losses, gnorms, method, it, converged, message, prob.n,
                       time.perf_counter() - t0)
