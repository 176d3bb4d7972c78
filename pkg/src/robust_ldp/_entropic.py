"""Damped-Newton barrier solver for small dense entropic programs.

Solves

    minimize    sum_k  u_k ln(u_k / v_k(z))  + constant
    subject to  A z = b,  z >= 0

where every numerator u_k is a single coordinate of z or a positive
constant, and every denominator v_k is an affine expression with
nonnegative coefficients.  This captures relative-entropy objectives
whose reference measures are themselves decision variables (marginals of
transport couplings), which is the shape of all robust-divergence and
rate programs in this package.

The solve proceeds in three stages:

1. coordinates that vanish on the whole feasible set are eliminated
   (detected by LP probes) and a strictly feasible start is found;
2. the central path is followed cautiously until the duality gap reaches
   the level where boundary-bound coordinates separate cleanly;
3. those coordinates are frozen at zero and the path continues on the
   interior face, where the barrier Hessian stays bounded and the target
   gap is reachable at full accuracy.  A pre-freeze snapshot guards
   against misidentified faces.

Infeasibility and forced +infinity values are returned as exact results,
never as large floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, qr
from scipy.optimize import linprog

GAP_TOL = 1e-9
CONVERGED_KKT = 1e-8
FORCED_ZERO_TOL = 1e-10
SAFE_GAP = 3e-7  # gap at which boundary coordinates separate cleanly
FACE_TOL = 1e-6  # coordinates below this after the cautious stage are frozen
MAX_NEWTON = 80


@dataclass(frozen=True)
class Affine:
    """Affine expression ``coef @ z[idx] + const`` with coef > 0, const >= 0."""

    idx: np.ndarray
    coef: np.ndarray
    const: float = 0.0

    def value(self, z: np.ndarray) -> float:
        return float(self.coef @ z[self.idx] + self.const)


@dataclass(frozen=True)
class Term:
    """One objective term ``numer ln(numer / denom)``.

    ``numer`` is a variable index when ``numer_var`` is set, otherwise the
    positive constant ``numer_const``.
    """

    denom: Affine
    numer_var: int | None = None
    numer_const: float | None = None


@dataclass
class EntropicProgram:
    n_vars: int
    a_eq: np.ndarray
    b_eq: np.ndarray
    terms: list[Term]
    constant: float = 0.0


@dataclass
class EntropicSolution:
    z: np.ndarray | None
    value: float
    kkt_residual: float
    converged: bool
    status: str
    newton_iters: int = 0
    primal_residual: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status != "infeasible"


def _objective(terms: list[Term], z: np.ndarray) -> float:
    total = 0.0
    for t in terms:
        v = t.denom.value(z)
        u = z[t.numer_var] if t.numer_var is not None else t.numer_const
        if u <= 0.0:
            continue
        if v <= 0.0:
            return math.inf
        total += u * math.log(u / v)
    return total


def _grad_hess(terms: list[Term], z: np.ndarray, n: int):
    g = np.zeros(n)
    h = np.zeros((n, n))
    for t in terms:
        idx = t.denom.idx
        c = t.denom.coef
        v = t.denom.value(z)
        if t.numer_var is not None:
            i = t.numer_var
            u = z[i]
            g[i] += math.log(u / v) + 1.0
            g[idx] -= (u / v) * c
            h[i, i] += 1.0 / u
            h[i, idx] -= c / v
            h[idx, i] -= c / v
            h[np.ix_(idx, idx)] += (u / v**2) * np.outer(c, c)
        else:
            p = t.numer_const
            g[idx] -= (p / v) * c
            h[np.ix_(idx, idx)] += (p / v**2) * np.outer(c, c)
    return g, h


def _phase_one(a: np.ndarray, b: np.ndarray):
    """Maximize the minimum coordinate over {A z = b, z >= 0}.

    Returns (z, delta) or None when the polytope is empty.
    """
    m, n = a.shape
    c = np.zeros(n + 1)
    c[-1] = -1.0
    a_eq = np.hstack([a, np.zeros((m, 1))])
    a_ub = np.hstack([-np.eye(n), np.ones((n, 1))])
    res = linprog(
        c,
        A_ub=a_ub,
        b_ub=np.zeros(n),
        A_eq=a_eq,
        b_eq=b,
        bounds=[(0, None)] * n + [(None, 1.0)],
        method="highs",
    )
    if res.status == 2:
        return None
    if res.status != 0:  # pragma: no cover - bounded feasible LPs
        raise RuntimeError(f"phase-1 LP failed: {res.message}")
    return res.x[:n], float(res.x[-1])


def _max_coordinate(a: np.ndarray, b: np.ndarray, i: int) -> float:
    n = a.shape[1]
    c = np.zeros(n)
    c[i] = -1.0
    res = linprog(c, A_eq=a, b_eq=b, bounds=(0, None), method="highs")
    if res.status == 3:  # pragma: no cover - our polytopes are bounded
        return math.inf
    if res.status != 0:  # pragma: no cover
        raise RuntimeError(f"coordinate probe LP failed: {res.message}")
    return float(-res.fun)


def _independent_rows(a: np.ndarray) -> np.ndarray:
    if a.shape[0] == 0 or a.shape[1] == 0:
        return np.zeros(0, dtype=np.int64)
    _, r, piv = qr(a.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] <= 0.0:
        return np.zeros(0, dtype=np.int64)
    rank = int(np.sum(diag > diag[0] * 1e-12))
    return np.sort(piv[:rank])


def _kkt_step(h: np.ndarray, a: np.ndarray, g: np.ndarray, rp: np.ndarray):
    """Newton step for min phi s.t. A dz = rp (the current equality residual,
    so that steps actively repair numerical drift); h must be positive
    definite.

    The Schur-complement path with two rounds of iterative refinement is
    fastest; near the boundary the barrier curvature can defeat Cholesky,
    in which case the full KKT system is solved by least squares instead.
    """
    n = h.shape[0]
    m = a.shape[0]
    try:
        cf = cho_factor(h, lower=True)
        if m == 0:
            return -cho_solve(cf, g)
        w = cho_solve(cf, a.T)
        sf = cho_factor(a @ w, lower=True)

        def solve_once(r1, r2):
            hr = cho_solve(cf, r1)
            lam = cho_solve(sf, a @ hr - r2)
            return hr - w @ lam, lam

        dz, lam = solve_once(-g, rp)
        for _ in range(2):
            r1 = -g - (h @ dz + a.T @ lam)
            r2 = rp - a @ dz
            ddz, dlam = solve_once(r1, r2)
            if not (np.all(np.isfinite(ddz)) and np.all(np.isfinite(dlam))):
                break
            dz = dz + ddz
            lam = lam + dlam
        return dz
    except LinAlgError:
        pass
    k = np.zeros((n + m, n + m))
    k[:n, :n] = h
    k[:n, n:] = a.T
    k[n:, :n] = a
    rhs = np.concatenate([-g, rp])
    sol = np.linalg.lstsq(k, rhs, rcond=None)[0]
    return sol[:n]


def _center(a, b, terms, z, t, inner_tol=1e-10):
    """Damped Newton iteration toward the analytic center at parameter t."""
    n = z.size
    iters = 0
    for _ in range(MAX_NEWTON):
        g_f, h_f = _grad_hess(terms, z, n)
        g = t * g_f - 1.0 / z
        h = t * h_f
        h[np.diag_indices(n)] += 1.0 / z**2
        rp = b - a @ z if a.shape[0] else np.zeros(0)
        dz = _kkt_step(h, a, g, rp)
        lam2 = float(-g @ dz)
        iters += 1
        prim = float(np.max(np.abs(rp))) if rp.size else 0.0
        if not math.isfinite(lam2) or (lam2 / 2.0 <= inner_tol and prim <= 1e-12):
            return z, iters
        neg = dz < 0.0
        alpha = 1.0
        if np.any(neg):
            alpha = min(1.0, 0.995 * np.min(-z[neg] / dz[neg]))
        phi0 = t * _objective(terms, z) - np.log(z).sum()
        # Tiny uphill slack keeps pure feasibility-restoration steps viable.
        accepted = False
        while alpha > 1e-14:
            z_new = z + alpha * dz
            phi = t * _objective(terms, z_new) - np.log(z_new).sum()
            if phi <= phi0 - 0.25 * alpha * max(lam2, 0.0) + 1e-12 * max(1.0, abs(phi0)):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            return z, iters  # no further progress representable
        z = z + alpha * dz
    return z, iters


def _freeze_mask(terms: list[Term], keep: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Make a tentative freeze set consistent with the objective: whenever a
    term's denominator support would vanish while its numerator survives,
    revive the largest denominator coordinate instead."""
    keep = keep.copy()
    changed = True
    while changed:
        changed = False
        for t in terms:
            didx = t.denom.idx
            alive = (didx.size and bool(keep[didx].any())) or t.denom.const > 0.0
            if alive:
                continue
            survives = t.numer_const is not None or keep[t.numer_var]
            if survives and didx.size:
                keep[didx[np.argmax(z[didx])]] = True
                changed = True
    return keep


def _compact_terms(terms: list[Term], keep: np.ndarray) -> list[Term]:
    """Restrict terms to the kept coordinates, renumbering indices."""
    new_of = -np.ones(keep.size, dtype=np.int64)
    new_of[keep] = np.arange(int(keep.sum()))
    out: list[Term] = []
    for t in terms:
        if t.numer_var is not None and not keep[t.numer_var]:
            continue
        sel = keep[t.denom.idx]
        denom = Affine(new_of[t.denom.idx[sel]], t.denom.coef[sel], t.denom.const)
        if t.numer_var is not None:
            out.append(Term(denom, numer_var=int(new_of[t.numer_var])))
        else:
            out.append(Term(denom, numer_const=t.numer_const))
    return out


def solve(
    prog: EntropicProgram, z0: np.ndarray | None = None, gap_tol: float = GAP_TOL
) -> EntropicSolution:
    n = prog.n_vars
    active = np.ones(n, dtype=bool)
    terms = list(prog.terms)
    a_full = np.asarray(prog.a_eq, dtype=np.float64)
    b = np.asarray(prog.b_eq, dtype=np.float64)

    z_start = None
    if z0 is not None:
        z_start = np.asarray(z0, dtype=np.float64).copy()
        if np.any(z_start <= 0.0) or (
            a_full.size and np.max(np.abs(a_full @ z_start - b)) > 1e-8
        ):
            z_start = None

    if z_start is None:
        # Eliminate coordinates that vanish on the whole feasible set, then
        # find a strictly feasible start on the remaining face.
        while True:
            forced_now: list[int] = []
            cleaned: list[Term] = []
            for t in terms:
                if t.numer_var is not None and not active[t.numer_var]:
                    continue  # numerator pinned at zero, term contributes 0
                didx = t.denom.idx[active[t.denom.idx]]
                if didx.size == 0 and t.denom.const <= 0.0:
                    if t.numer_var is None:
                        return EntropicSolution(None, math.inf, 0.0, True, "infeasible")
                    forced_now.append(t.numer_var)
                    continue
                cleaned.append(t)
            terms = cleaned
            if forced_now:
                active[forced_now] = False
                continue
            na = int(active.sum())
            if na == 0:
                if b.size and np.max(np.abs(b)) > 1e-9:
                    return EntropicSolution(None, math.inf, 0.0, True, "infeasible")
                z_start = np.zeros(0)
                break
            probe = _phase_one(a_full[:, active], b)
            if probe is None:
                return EntropicSolution(None, math.inf, 0.0, True, "infeasible")
            z_act, delta = probe
            if delta > 1e-9:
                z_start = z_act
                break
            local = np.where(active)[0]
            forced = [
                local[i]
                for i in np.where(z_act < 1e-9)[0]
                if _max_coordinate(a_full[:, active], b, int(i)) <= FORCED_ZERO_TOL
            ]
            if not forced:
                if delta <= 0.0 or np.any(z_act <= 0.0):
                    return EntropicSolution(None, math.inf, 0.0, False, "degenerate")
                z_start = z_act
                break
            active[forced] = False
    else:
        z_start = z_start[active]

    # Working problem over the surviving coordinates.
    terms_w = _compact_terms(terms, active)
    a_act = a_full[:, active]
    nb0 = int(active.sum())
    live = np.ones(nb0, dtype=bool)  # coordinates still on the central path
    kept = _independent_rows(a_act)
    a_w = a_act[kept]
    b_w = b[kept]
    z = np.asarray(z_start, dtype=np.float64)

    t_bar = 1.0
    total_iters = 0
    snapshot = None  # pre-freeze fallback: (z in live0 space, terms, t, value)

    def embed(zv: np.ndarray) -> np.ndarray:
        out = np.zeros(nb0)
        out[live] = zv
        return out

    while z.size:
        z, it = _center(a_w, b_w, terms_w, z, t_bar)
        total_iters += it
        gap = z.size / t_bar
        if gap <= gap_tol or t_bar >= 1e16:
            break
        if snapshot is None and gap <= SAFE_GAP:
            snapshot = (embed(z), list(terms_w), t_bar, _objective(terms_w, z))
        if snapshot is not None:
            tentative = z >= FACE_TOL
            if not tentative.all() and tentative.any():
                keep = _freeze_mask(terms_w, tentative, z)
                if not keep.all():
                    terms_w = _compact_terms(terms_w, keep)
                    live[np.where(live)[0][~keep]] = False
                    z = z[keep]
                    kept = _independent_rows(a_act[:, live])
                    a_w = a_act[:, live][kept]
                    b_w = b[kept]
        t_bar *= 10.0

    z_local = embed(z)
    value = _objective(terms_w, z)
    gap = z.size / t_bar if z.size else 0.0
    primal = float(np.max(np.abs(a_act @ z_local - b))) if b.size else 0.0

    if not live.all() and snapshot is not None:
        # The face continuation must beat the cautious stage; otherwise the
        # face was misidentified and the pre-freeze iterate is the answer.
        if not math.isfinite(value) or value > snapshot[3] + 1e-4 or primal > 1e-8:
            z_local, _, t_snap, value = snapshot
            gap = nb0 / t_snap
            primal = float(np.max(np.abs(a_act @ z_local - b))) if b.size else 0.0

    z_full = np.zeros(n)
    z_full[np.where(active)[0]] = z_local
    kkt = max(gap, primal)
    converged = kkt <= max(CONVERGED_KKT, gap_tol * 1.01)
    status = "optimal" if converged else "max_iterations"
    return EntropicSolution(
        z_full, value + prog.constant, kkt, converged, status, total_iters, primal
    )
