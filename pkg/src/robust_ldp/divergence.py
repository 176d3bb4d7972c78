"""Relative entropy and its robust variants over Wasserstein-1 balls.

The robust divergence of a target law ``nu`` against a reference ``mu``
is the minimal relative entropy of ``nu`` against any distribution within
W1-radius ``r`` of ``mu``; the absolutely-continuous (AC) variant restricts
the minimization to distributions supported inside ``mu``'s support.
Indicator variants score 0/infinity on ball membership and drive the
law-of-large-numbers machinery instead of rate computations.

Besides the solvers, this module ships brute-force grid oracles for
two-state spaces, used to cross-check the convex programs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _entropic
from ._entropic import Affine, Term
from .chain_core import MASS_ZERO, Dist, Kernel, MetricSpace
from .transport import BALL_ATOL, TransportPlan, w1


class Variant(Enum):
    ENTROPY = "Entropy"
    ROBUST_ENTROPY = "RobustEntropy"
    ROBUST_ENTROPY_AC = "RobustEntropyAC"
    BALL_INDICATOR = "BallIndicator"
    BALL_INDICATOR_AC = "BallIndicatorAC"


MODEL_NAMES = {v.value: v for v in Variant}


@dataclass(frozen=True)
class DivergenceModel:
    """A divergence variant together with the robustness radius.

    ``ENTROPY`` ignores the radius and behaves like ``ROBUST_ENTROPY``
    at radius zero.
    """

    variant: Variant
    radius: float = 0.0

    def __post_init__(self):
        if self.radius < 0.0:
            raise ValueError("radius must be nonnegative")

    @property
    def effective_radius(self) -> float:
        return 0.0 if self.variant is Variant.ENTROPY else self.radius

    @property
    def restrict_support(self) -> bool:
        """True when reference support must not grow (AC variants, or a
        degenerate ball)."""
        return (
            self.variant in (Variant.ROBUST_ENTROPY_AC, Variant.BALL_INDICATOR_AC)
            or self.effective_radius == 0.0
        )

    @property
    def is_indicator(self) -> bool:
        return self.variant in (Variant.BALL_INDICATOR, Variant.BALL_INDICATOR_AC)


def entropy_model(radius: float, ac: bool = False) -> DivergenceModel:
    return DivergenceModel(
        Variant.ROBUST_ENTROPY_AC if ac else Variant.ROBUST_ENTROPY, radius
    )


def resolve_model(model: "DivergenceModel | Variant", default_radius: float) -> DivergenceModel:
    """Chain-level operations accept a bare variant, in which case the
    chain's own robustness radius applies."""
    if isinstance(model, Variant):
        return DivergenceModel(model, default_radius)
    return model


@dataclass(frozen=True)
class DivergenceResult:
    value: float
    witness_mu_hat: Dist | None
    witness_plan: TransportPlan | None
    kkt_residual: float
    converged: bool = True


_INFEASIBLE = DivergenceResult(math.inf, None, None, 0.0)


def rel_entropy(nu: Dist, mu: Dist) -> float:
    """Kullback-Leibler divergence ``sum nu ln(nu/mu)`` with ``0 ln 0 = 0``;
    +infinity unless nu is absolutely continuous w.r.t. mu."""
    if nu.n != mu.n:
        raise ValueError("dimension mismatch")
    total = 0.0
    for a, b in zip(nu.p, mu.p):
        if a <= MASS_ZERO:
            continue
        if b <= MASS_ZERO:
            return math.inf
        total += a * math.log(a / b)
    return total


def _diag_plan(space: MetricSpace, mu: Dist) -> TransportPlan:
    return TransportPlan(np.diag(mu.p), 0.0)


def beta(space: MetricSpace, nu: Dist, mu: Dist, model: DivergenceModel) -> DivergenceResult:
    """The robust divergence of ``nu`` against the ball around ``mu``.

    For the entropic variants this solves the convex program over coupling
    variables with row sums ``mu`` and free column sums, minimizing the
    relative entropy of ``nu`` against the column marginal subject to the
    transport-cost budget.  Infeasibility yields value +infinity as a
    result, not an error.
    """
    n = space.n
    if nu.n != n or mu.n != n:
        raise ValueError("dimension mismatch")
    r = model.effective_radius

    if model.is_indicator:
        dist_nm, plan, _ = w1(space, mu, nu)
        inside = dist_nm <= r + BALL_ATOL
        if inside and model.restrict_support:
            inside = bool(np.all(nu.support() <= mu.support()))
        if inside:
            return DivergenceResult(0.0, nu, plan, 0.0)
        return _INFEASIBLE

    if model.restrict_support and not np.all(nu.support() <= mu.support()):
        return _INFEASIBLE
    if r == 0.0:
        return DivergenceResult(rel_entropy(nu, mu), mu, _diag_plan(space, mu), 0.0)
    dist_mn, plan_mn, _ = w1(space, mu, nu)
    if dist_mn <= r:
        return DivergenceResult(0.0, nu, plan_mn, 0.0)

    rows = np.where(mu.support())[0]
    cols = rows if model.restrict_support else np.arange(n)
    ni, nj = rows.size, cols.size
    nv = ni * nj + 1  # couplings plus cost slack
    gid = np.arange(ni * nj).reshape(ni, nj)
    slack = ni * nj

    a = np.zeros((ni + 1, nv))
    b = np.zeros(ni + 1)
    for ii, i in enumerate(rows):
        a[ii, gid[ii]] = 1.0
        b[ii] = mu.p[i]
    dsub = space.dist[np.ix_(rows, cols)]
    a[ni, : ni * nj] = dsub.ravel()
    a[ni, slack] = 1.0
    b[ni] = r

    terms = []
    const = 0.0
    for jj, j in enumerate(cols):
        if nu.p[j] > MASS_ZERO:
            terms.append(Term(Affine(gid[:, jj], np.ones(ni)), numer_const=float(nu.p[j])))
            const += float(nu.p[j] * math.log(nu.p[j]))

    # Strictly feasible start: near-diagonal couplings with a small uniform
    # blend, scaled so the cost stays below half the budget.
    unif_cost = float(mu.p[rows] @ dsub.mean(axis=1))
    eps = min(0.5, 0.5 * r / max(unif_cost, 1e-300))
    z0 = np.zeros(nv)
    diag_col = {j: jj for jj, j in enumerate(cols)}
    g0 = np.zeros((ni, nj))
    for ii, i in enumerate(rows):
        g0[ii] = mu.p[i] * eps / nj
        g0[ii, diag_col[i]] += mu.p[i] * (1.0 - eps)
    z0[: ni * nj] = g0.ravel()
    z0[slack] = r - float(np.sum(dsub * g0))

    prog = _entropic.EntropicProgram(nv, a, b, terms, constant=const)
    sol = _entropic.solve(prog, z0=z0)
    if not sol.feasible:  # pragma: no cover - feasible by construction here
        return _INFEASIBLE
    gamma = np.zeros((n, n))
    gamma[np.ix_(rows, cols)] = sol.z[: ni * nj].reshape(ni, nj)
    mu_hat = Dist(gamma.sum(axis=0))
    value = rel_entropy(nu, mu_hat)
    plan = TransportPlan(gamma, float(np.sum(space.dist * gamma)))
    return DivergenceResult(value, mu_hat, plan, sol.kkt_residual, sol.converged)


def chain_joint(theta: Dist, kernel: Kernel, m: int) -> list[np.ndarray]:
    """The decomposed joint law of ``m`` chain steps started from ``theta``:
    the initial law followed by history-indexed next-step kernels."""
    if m < 1:
        raise ValueError("m must be >= 1")
    n = theta.n
    levels: list[np.ndarray] = [theta.p.copy()]
    for i in range(1, m):
        shape = (n,) * (i - 1) + (n, n)
        levels.append(np.broadcast_to(kernel.rows, shape).copy())
    return levels


def beta_chain(
    space: MetricSpace,
    levels: list[np.ndarray],
    theta: Dist,
    kernel: Kernel,
    model: DivergenceModel,
) -> float:
    """Accumulated robust divergence of a decomposed joint law against the
    chain started from ``theta``.

    ``levels[0]`` is the law of the first step; ``levels[i]`` has shape
    ``(n,)*i + (n,)`` and maps each i-step history to the conditional law
    of step i+1.  The result equals the minimal relative entropy of the
    joint law against the ambiguity set of the robust chain.
    """
    n = space.n
    m = len(levels)
    if m < 1:
        raise ValueError("need at least the first-step law")
    first = np.asarray(levels[0], dtype=float)
    if first.shape != (n,):
        raise ValueError("levels[0] must be a length-n law")
    total = beta(space, Dist(first), theta, model).value
    if math.isinf(total):
        return math.inf
    weights = first
    for i in range(1, m):
        lv = np.asarray(levels[i], dtype=float)
        if lv.shape != (n,) * (i + 1):
            raise ValueError(f"levels[{i}] must have shape {(n,) * (i + 1)}")
        for hist in np.ndindex(*(n,) * i):
            w = weights[hist]
            if w <= MASS_ZERO:
                continue
            b = beta(space, Dist(lv[hist]), Dist(kernel.rows[hist[-1]]), model).value
            if math.isinf(b):
                return math.inf
            total += w * b
        weights = weights[..., None] * lv
    return total


def beta_grid_two_state(
    space: MetricSpace, nu: Dist, mu: Dist, model: DivergenceModel, step: float = 1e-5
) -> float:
    """Brute-force oracle for ``beta`` on two-state spaces.

    Grids the one-parameter family of candidate references inside the W1
    ball, which on two points is an interval of first-coordinate masses.
    """
    if space.n != 2:
        raise ValueError("grid oracle is for two-state spaces")
    d = space.dist[0, 1]
    r = model.effective_radius
    if model.is_indicator:
        inside = abs(nu.p[0] - mu.p[0]) * d <= r + BALL_ATOL
        if inside and model.restrict_support:
            inside = bool(np.all(nu.support() <= mu.support()))
        return 0.0 if inside else math.inf
    lo = max(0.0, mu.p[0] - r / d)
    hi = min(1.0, mu.p[0] + r / d)
    if model.restrict_support:
        if mu.p[0] <= MASS_ZERO:
            lo, hi = 0.0, 0.0
        if mu.p[1] <= MASS_ZERO:
            lo, hi = 1.0, 1.0
    ts = np.append(np.arange(lo, hi, step), hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        v0 = np.where(nu.p[0] > MASS_ZERO, nu.p[0] * (np.log(nu.p[0]) - np.log(ts)), 0.0)
        v1 = np.where(
            nu.p[1] > MASS_ZERO, nu.p[1] * (np.log(nu.p[1]) - np.log(1.0 - ts)), 0.0
        )
    vals = np.where(np.isnan(v0 + v1), np.inf, v0 + v1)
    return float(np.min(vals))


def beta_chain_grid_two_state(
    space: MetricSpace,
    levels: list[np.ndarray],
    theta: Dist,
    kernel: Kernel,
    model: DivergenceModel,
    step: float = 1e-3,
) -> float:
    """Brute-force oracle for two-step ``beta_chain`` on two-state spaces:
    directly minimizes the joint relative entropy over gridded ambiguity-set
    elements (initial law and both kernel rows)."""
    if space.n != 2 or len(levels) != 2:
        raise ValueError("oracle covers two states and two steps")
    if model.is_indicator:
        raise ValueError("oracle covers the entropic variants")
    d = space.dist[0, 1]
    r = model.effective_radius
    joint = levels[0][:, None] * np.asarray(levels[1])

    def interval(center_first: float):
        return max(0.0, center_first - r / d), min(1.0, center_first + r / d)

    def min_neg_log(w0: float, w1: float, lo: float, hi: float) -> float:
        # minimize -w0 ln t - w1 ln(1-t) over the gridded interval
        ts = np.append(np.arange(lo, hi, step), hi)
        with np.errstate(divide="ignore"):
            vals = np.zeros_like(ts)
            if w0 > MASS_ZERO:
                vals = vals - w0 * np.log(ts)
            if w1 > MASS_ZERO:
                vals = vals - w1 * np.log(1.0 - ts)
        return float(np.min(vals))

    const = 0.0
    for w in joint.ravel():
        if w > MASS_ZERO:
            const += w * math.log(w)
    total = const
    total += min_neg_log(joint[0].sum(), joint[1].sum(), *interval(theta.p[0]))
    for x in range(2):
        total += min_neg_log(joint[x, 0], joint[x, 1], *interval(kernel.rows[x, 0]))
    return total
