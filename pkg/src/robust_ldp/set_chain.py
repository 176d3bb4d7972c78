"""Robust law-of-large-numbers machinery: stationary distributions,
ergodicity-condition checks, Cesaro averages, and envelopes of all
distributions that admit an invariant kernel inside the robustness ball.

The envelope computations are pure linear programs: for each coordinate,
the extreme occupation mass over the set

    { nu : exists kernel q with nu q = nu and every row q(x) within
      Wasserstein-1 radius r of the nominal row pi(x), nu-a.s. }

is maximized/minimized, with the absolutely-continuous variant adding the
support pattern of the nominal kernel as hard zeros.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .chain_core import MASS_ZERO, BallSet, ChainSpec, Dist, Kernel
from .divergence import DivergenceModel, Variant, resolve_model


@dataclass(frozen=True, eq=False)
class Envelope:
    """Coordinate-wise interval of invariant-admitting distributions."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        for name in ("lo", "hi"):
            a = np.array(getattr(self, name), dtype=np.float64, copy=True)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __eq__(self, other):
        if not isinstance(other, Envelope):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def contains(self, nu: Dist, atol: float = 1e-9) -> bool:
        return bool(np.all(nu.p >= self.lo - atol) and np.all(nu.p <= self.hi + atol))


@dataclass(frozen=True, eq=False)
class ConditionReport:
    """Outcome of the ergodicity-style condition checks on a chain."""

    m1_holds: bool
    l0: int | None
    n0: int | None
    m2_holds: bool
    invariant: Dist | None
    unique_invariant: bool
    note: str | None = None

    def __eq__(self, other):
        if not isinstance(other, ConditionReport):
            return NotImplemented
        return (
            self.m1_holds == other.m1_holds
            and self.l0 == other.l0
            and self.n0 == other.n0
            and self.m2_holds == other.m2_holds
            and self.unique_invariant == other.unique_invariant
            and self.note == other.note
            and (self.invariant is None) == (other.invariant is None)
            and (self.invariant is None or np.array_equal(self.invariant.p, other.invariant.p))
        )


def stationary(kernel: Kernel) -> tuple[Dist, bool]:
    """An invariant distribution of the kernel, plus a uniqueness flag.

    Uniqueness is decided by the nullity of ``P^T - I`` with singular
    values thresholded at 1e-10.  When the invariant set is not a single
    point, a deterministic LP vertex is returned.
    """
    p = kernel.rows
    n = kernel.n
    a = np.vstack([p.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    sv = np.linalg.svd(p.T - np.eye(n), compute_uv=False)
    unique = int(np.sum(sv < 1e-10)) == 1
    sol = np.linalg.lstsq(a, b, rcond=None)[0]
    if not unique or sol.min() < -1e-10 or np.max(np.abs(a @ sol - b)) > 1e-9:
        res = linprog(np.zeros(n), A_eq=a, b_eq=b, bounds=(0, None), method="highs")
        if res.status != 0:  # pragma: no cover - finite chains always have one
            raise RuntimeError(f"stationary LP failed: {res.message}")
        # Polish the vertex on its support for a crisp invariance residual.
        supp = res.x > 1e-12
        sol = np.zeros(n)
        sol[supp] = np.linalg.lstsq(a[:, supp], b, rcond=None)[0]
    sol = np.clip(sol, 0.0, None)
    return Dist(sol / sol.sum()), unique


def check_conditions(spec: ChainSpec, max_exponent: int | None = None) -> ConditionReport:
    """Support-dominance check of the tail mixtures of k-step kernels.

    On a finite space the absolute-continuity condition reduces to
    inclusions between tail unions of k-step supports.  The boolean power
    sequence is iterated until it cycles; the stabilized tail unions are
    then compared, and the cycle entry point is reported as the witness
    exponent pair.  ``max_exponent`` defaults to ``n^2 + n``.
    """
    n = spec.space.n
    if max_exponent is None:
        max_exponent = n * n + n
    if max_exponent < 1:
        raise ValueError("max_exponent must be >= 1")
    base = spec.kernel.rows > MASS_ZERO
    powers: list[np.ndarray] = []
    seen: dict[bytes, int] = {}
    cur = base
    start = None
    for k in range(1, max_exponent + 2):
        key = cur.tobytes()
        if key in seen:
            start = seen[key]
            break
        if k > max_exponent:
            break
        seen[key] = k
        powers.append(cur)
        cur = (cur.astype(np.int8) @ base.astype(np.int8)) > 0

    invariant, unique = stationary(spec.kernel)
    if start is None:
        return ConditionReport(
            False,
            None,
            None,
            True,
            invariant,
            unique,
            note=f"no support cycle within exponent bound {max_exponent}; "
            "the condition may still hold beyond it",
        )
    tail = np.zeros((n, n), dtype=bool)
    for mat in powers[start - 1 :]:
        tail |= mat
    m1 = bool(np.all(tail == tail[0]))
    if m1:
        return ConditionReport(True, start, start, True, invariant, unique)
    return ConditionReport(False, None, None, True, invariant, unique)


@dataclass
class InvariantBallLP:
    """LP data for the polytope of pairs (nu, q) with nu q = nu and every
    row of q inside the W1 ball around the matching nominal row.

    Variables are nu, the scaled kernel tau = diag(nu) q, per-row transport
    couplings, and optionally a coupling tying nu into a target ball.
    """

    n_vars: int
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    nu_ids: np.ndarray
    tau_ids: np.ndarray  # (n, n), -1 where excluded by the support pattern
    spec: ChainSpec

    def solve(self, c: np.ndarray):
        return linprog(
            c,
            A_ub=self.a_ub if self.a_ub.size else None,
            b_ub=self.b_ub if self.b_ub.size else None,
            A_eq=self.a_eq,
            b_eq=self.b_eq,
            bounds=(0, None),
            method="highs",
        )

    def extract(self, x: np.ndarray) -> tuple[Dist, Kernel]:
        n = self.spec.space.n
        nu = np.clip(x[self.nu_ids], 0.0, None)
        nu = nu / nu.sum()
        q = self.spec.kernel.rows.copy()
        for i in range(n):
            if nu[i] <= 1e-10:
                continue
            row = np.zeros(n)
            mask = self.tau_ids[i] >= 0
            row[mask] = np.clip(x[self.tau_ids[i][mask]], 0.0, None)
            q[i] = row / row.sum()
        return Dist(nu), Kernel(q)


def invariant_ball_lp(
    spec: ChainSpec,
    restrict: bool,
    radius: float,
    ball: BallSet | None = None,
    fixed_nu: Dist | None = None,
) -> InvariantBallLP:
    n = spec.space.n
    d = spec.space.dist
    pk = spec.kernel.rows

    count = 0

    def block(k: int) -> np.ndarray:
        nonlocal count
        ids = np.arange(count, count + k)
        count += k
        return ids

    nu_ids = block(n)
    tau_ids = -np.ones((n, n), dtype=np.int64)
    for x in range(n):
        for y in range(n):
            if restrict and pk[x, y] <= MASS_ZERO:
                continue
            tau_ids[x, y] = block(1)[0]
    rows_x = [np.where(pk[x] > MASS_ZERO)[0] for x in range(n)]
    cols_x = [np.where(tau_ids[x] >= 0)[0] for x in range(n)]
    gam_ids = [block(rows_x[x].size * cols_x[x].size).reshape(rows_x[x].size, -1) for x in range(n)]
    if ball is not None:
        cols0 = np.where(ball.center.support())[0]
        g0_ids = block(n * cols0.size).reshape(n, cols0.size)

    eq_rows: list[np.ndarray] = []
    eq_rhs: list[float] = []
    ub_rows: list[np.ndarray] = []
    ub_rhs: list[float] = []

    def eq(idx_coef: list[tuple[np.ndarray, float | np.ndarray]], rhs: float):
        row = np.zeros(count)
        for ids, coef in idx_coef:
            row[ids] += coef
        eq_rows.append(row)
        eq_rhs.append(rhs)

    eq([(nu_ids, 1.0)], 1.0)
    for x in range(n):
        eq([(tau_ids[x][cols_x[x]], 1.0), (nu_ids[x : x + 1], -1.0)], 0.0)
    for y in range(n):
        ids = tau_ids[:, y][tau_ids[:, y] >= 0]
        eq([(ids, 1.0), (nu_ids[y : y + 1], -1.0)], 0.0)
    for x in range(n):
        for a, i in enumerate(rows_x[x]):
            eq([(gam_ids[x][a], 1.0), (nu_ids[x : x + 1], -float(pk[x, i]))], 0.0)
        for bcol, j in enumerate(cols_x[x]):
            eq([(gam_ids[x][:, bcol], 1.0), (tau_ids[x, j : j + 1], -1.0)], 0.0)
        row = np.zeros(count)
        row[gam_ids[x].ravel()] = d[np.ix_(rows_x[x], cols_x[x])].ravel()
        row[nu_ids[x]] -= radius
        ub_rows.append(row)
        ub_rhs.append(0.0)
    if ball is not None:
        for i in range(n):
            eq([(g0_ids[i], 1.0), (nu_ids[i : i + 1], -1.0)], 0.0)
        for bcol, j in enumerate(cols0):
            eq([(g0_ids[:, bcol], 1.0)], float(ball.center.p[j]))
        row = np.zeros(count)
        row[g0_ids.ravel()] = d[:, cols0].ravel()
        ub_rows.append(row)
        ub_rhs.append(float(ball.kappa))
    if fixed_nu is not None:
        for x in range(n):
            eq([(nu_ids[x : x + 1], 1.0)], float(fixed_nu.p[x]))

    return InvariantBallLP(
        count,
        np.array(eq_rows),
        np.array(eq_rhs),
        np.array(ub_rows) if ub_rows else np.zeros((0, count)),
        np.array(ub_rhs),
        nu_ids,
        tau_ids,
        spec,
    )


def _check_indicator(model: DivergenceModel):
    if model.variant not in (Variant.BALL_INDICATOR, Variant.BALL_INDICATOR_AC):
        raise ValueError("envelope computations use the ball-indicator divergences")


def envelope(
    spec: ChainSpec,
    model: DivergenceModel | Variant = Variant.BALL_INDICATOR,
    threads: int | None = None,
) -> Envelope:
    """Per-state extreme occupation masses over the invariant-ball polytope:
    2n linear programs, independently dispatchable."""
    model = resolve_model(model, spec.radius)
    _check_indicator(model)
    lp = invariant_ball_lp(spec, model.restrict_support, model.effective_radius)
    n = spec.space.n

    def solve_one(job):
        x, sign = job
        c = np.zeros(lp.n_vars)
        c[lp.nu_ids[x]] = sign
        res = lp.solve(c)
        if res.status != 0:  # pragma: no cover - polytope is never empty
            raise RuntimeError(f"envelope LP failed for state {x}: {res.message}")
        return sign * res.fun

    jobs = [(x, 1.0) for x in range(n)] + [(x, -1.0) for x in range(n)]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(solve_one, jobs))
    else:
        vals = [solve_one(j) for j in jobs]
    lo = np.array(vals[:n])
    hi = np.array(vals[n:])
    return Envelope(np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0))


def robust_functional_bound(
    spec: ChainSpec,
    model: DivergenceModel | Variant,
    weights,
) -> tuple[float, Dist]:
    """Upper law-of-large-numbers bound for the linear functional
    ``nu -> weights @ nu``; negate the weights for the lower bound."""
    model = resolve_model(model, spec.radius)
    _check_indicator(model)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (spec.space.n,):
        raise ValueError("weights length does not match the state count")
    lp = invariant_ball_lp(spec, model.restrict_support, model.effective_radius)
    c = np.zeros(lp.n_vars)
    c[lp.nu_ids] = -w
    res = lp.solve(c)
    if res.status != 0:  # pragma: no cover
        raise RuntimeError(f"functional-bound LP failed: {res.message}")
    nu, _ = lp.extract(res.x)
    return -float(res.fun), nu


def cesaro(spec: ChainSpec, n: int) -> Dist:
    """Average of the first n step distributions, ``(1/n) sum pi0 P^(i-1)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    v = spec.pi0.p.copy()
    acc = v.copy()
    for _ in range(n - 1):
        v = v @ spec.kernel.rows
        acc += v
    return Dist(acc / n)
