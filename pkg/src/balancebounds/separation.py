"""Convex separation program for the mean-difference misspecification
magnitude: find summary coefficients whose level set separates the graph of a
perturbation over the treated support from its graph over the untreated
support, with penalized or hard slack.

For orientation sigma and slack price L the program is

    minimize  ||zeta||^2 + L * sum(xi)
    s.t.      sigma*h(x) <= sigma*r(x)'zeta + xi1(x)   on the arm-1 support,
              sigma*h(x) >= sigma*r(x)'zeta - xi0(x)   on the arm-0 support,
              xi >= 0.

Only feasibility is contractual (any feasible point yields a valid bound);
optimality is best effort. The solver eliminates the slacks, runs ADMM on the
reduced problem in zeta, and polishes with exact active-set KKT solves, so
generic instances terminate at the true optimum up to float rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .imbalance import SummarySet
from .misspec import Perturbation
from .sample import EmpiricalCond


@dataclass(frozen=True)
class SeparationSolution:
    zeta: np.ndarray
    slacks1: np.ndarray
    slacks0: np.ndarray
    sigma: int
    objective: float
    feasible: bool
    sharp: bool
    total_slack: float
    max_residual: float
    a_matrix: np.ndarray = field(repr=False)
    b_vector: np.ndarray = field(repr=False)


def _build(h: Perturbation, rset: SummarySet, g1, g0, sigma: int):
    if sigma not in (1, -1):
        raise ValidationError("sigma must be +1 or -1")
    if not (g1.is_scalar and g0.is_scalar):
        raise ValidationError(
            "separation needs scalar supports; push the arms through an index first"
        )
    rows = []
    rhs = []
    for loc, _ in g1.points:
        rows.append(sigma * rset.evaluate(loc))
        rhs.append(sigma * h(float(loc)))
    for loc, _ in g0.points:
        rows.append(-sigma * rset.evaluate(loc))
        rhs.append(-sigma * h(float(loc)))
    return np.array(rows, dtype=float), np.array(rhs, dtype=float), len(g1.points)


def _slack_completion(a: np.ndarray, b: np.ndarray, zeta: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, b - a @ zeta)


def _total_slack(a, b, zeta) -> float:
    return float(np.sum(_slack_completion(a, b, zeta)))


def _admm(a, b, quad_coef, hinge_weight, hard, max_iter, polish_cb, rho=1.0, tol=1e-12):
    """ADMM on  quad_coef*||z||^2 + sum phi(t_k),  t = A z, with phi either a
    weighted hinge of (b - t) or the indicator of t >= b. ``polish_cb`` is
    tried periodically; returning a vector ends the iteration early."""
    n, j = a.shape
    m = 2.0 * quad_coef * np.eye(j) + rho * (a.T @ a)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        m += 1e-12 * np.eye(j)
        chol = np.linalg.cholesky(m)
    z = np.zeros(j)
    t = np.zeros(n)
    u = np.zeros(n)
    kink = b - hinge_weight / rho
    best = z.copy()
    for it in range(1, max_iter + 1):
        rhsv = rho * (a.T @ (t - u))
        z = np.linalg.solve(chol.T, np.linalg.solve(chol, rhsv))
        v = a @ z + u
        t_old = t
        if hard:
            t = np.maximum(v, b)
        else:
            t = np.where(v >= b, v, np.where(v >= kink, b, v + hinge_weight / rho))
        u = u + a @ z - t
        best = z
        if it % 250 == 0 or it == max_iter:
            polished = polish_cb(z)
            if polished is not None:
                return polished, True
            r_prim = float(np.max(np.abs(a @ z - t))) if n else 0.0
            r_dual = float(np.max(np.abs(rho * (a.T @ (t - t_old))))) if n else 0.0
            if r_prim < tol and r_dual < tol:
                break
    polished = polish_cb(best)
    if polished is not None:
        return polished, True
    return best, False


def _nnls(m: np.ndarray, y: np.ndarray, max_iter=200):
    """Lawson-Hanson nonnegative least squares for tiny systems."""
    ncols = m.shape[1]
    passive: list[int] = []
    x = np.zeros(ncols)
    for _ in range(max_iter):
        w = m.T @ (y - m @ x)
        candidates = [k for k in range(ncols) if k not in passive]
        if not candidates:
            break
        k_best = max(candidates, key=lambda k: w[k])
        if w[k_best] <= 1e-12 * (1 + float(np.abs(y).max(initial=0.0))):
            break
        passive.append(k_best)
        while True:
            sub = np.linalg.lstsq(m[:, passive], y, rcond=None)[0]
            if np.all(sub > 0):
                x = np.zeros(ncols)
                x[passive] = sub
                break
            mask = sub <= 0
            ratios = [
                x[p] / (x[p] - s) for p, s, bad in zip(passive, sub, mask) if bad and x[p] != s
            ]
            alpha = min(ratios) if ratios else 0.0
            full = np.zeros(ncols)
            full[passive] = sub
            x = x + alpha * (full - x)
            passive = [p for p in passive if x[p] > 1e-14]
            x[[k for k in range(ncols) if k not in passive]] = 0.0
    return x, float(np.linalg.norm(y - m @ x))


def _polish_finite(a, b, big_l, zeta0, scale):
    """Exact KKT solve for the penalized problem given the activity pattern
    near ``zeta0``; returns the refined zeta when the pattern verifies.
    Declines on degenerate piles of near-active constraints (optimality is
    best effort; the caller's iterate is already feasible after slack
    completion)."""
    n, j = a.shape
    delta = 1e-7 * scale
    tol = 1e-9 * scale
    r = b - a @ zeta0
    violated = set(np.nonzero(r > delta)[0].tolist())
    active = set(np.nonzero(np.abs(r) <= delta)[0].tolist())
    if len(active) > 5 * j + 25:
        return None
    seen = set()
    for _ in range(100):
        key = (frozenset(violated), frozenset(active))
        if key in seen:
            return None
        seen.add(key)
        bl = sorted(active)
        vl = sorted(violated)
        g = big_l * a[vl].sum(axis=0) if vl else np.zeros(j)
        kkt = np.zeros((j + len(bl), j + len(bl)))
        kkt[:j, :j] = 2.0 * np.eye(j)
        if bl:
            kkt[:j, j:] = -a[bl].T
            kkt[j:, :j] = a[bl]
        if len(bl) > 5 * j + 25:
            return None
        rhs = np.concatenate([g, b[bl]])
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        zeta = sol[:j]
        lam = sol[j:]
        r_new = b - a @ zeta
        moved = False
        for pos, k in enumerate(bl):
            if lam[pos] < -tol:
                active.discard(k)
                moved = True
            elif lam[pos] > big_l + tol:
                active.discard(k)
                violated.add(k)
                moved = True
        for k in range(n):
            if k in active:
                continue
            if k in violated and r_new[k] < -tol:
                violated.discard(k)
                active.add(k)
                moved = True
            elif k not in violated and r_new[k] > tol:
                active.add(k)
                moved = True
        if not moved:
            # verify the stationarity and activity pattern exactly
            if bl and np.max(np.abs(a[bl] @ zeta - b[bl])) > 1e-7 * scale:
                return None
            return zeta
    return None


def _polish_hard(a, b, zeta0, scale):
    """Minimum-norm point under hard constraints A zeta >= b, via active-set
    equality solves verified by nonnegative multipliers."""
    n, j = a.shape
    delta = 1e-6 * scale
    tol = 1e-8 * scale
    r = b - a @ zeta0
    active = set(np.nonzero(r >= -delta)[0].tolist())
    seen = set()
    for _ in range(100):
        key = frozenset(active)
        if key in seen:
            return None
        seen.add(key)
        bl = sorted(active)
        if bl:
            ab = a[bl]
            lam = np.linalg.lstsq(ab @ ab.T, 2.0 * b[bl], rcond=None)[0]
            zeta = ab.T @ lam / 2.0
        else:
            zeta = np.zeros(j)
        r_new = b - a @ zeta
        worst = int(np.argmax(r_new)) if n else -1
        if n and r_new[worst] > tol:
            if worst in active:
                return None
            active.add(worst)
            continue
        if bl:
            mu, resid = _nnls(a[bl].T, 2.0 * zeta)
            if resid > 1e-7 * (1.0 + float(np.linalg.norm(zeta))):
                # some member blocks the nonnegative representation; drop the
                # least-norm multiplier's most negative entry
                ls = np.linalg.lstsq(a[bl].T, 2.0 * zeta, rcond=None)[0]
                drop = bl[int(np.argmin(ls))]
                active.discard(drop)
                continue
        return zeta
    return None


def _polish_minslack(a, b, zeta0, scale):
    """Snap to the best nearby vertex of the minimum-total-slack problem."""
    candidates = [zeta0, np.zeros(a.shape[1])]
    r = b - a @ zeta0
    for delta in (1e-9 * scale, 1e-7 * scale, 1e-5 * scale):
        tight = np.nonzero(np.abs(r) <= delta)[0]
        if len(tight):
            zt = np.linalg.lstsq(a[tight], b[tight], rcond=None)[0]
            candidates.append(zt)
    return min(candidates, key=lambda z: _total_slack(a, b, z))


def solve_separation(
    h: Perturbation,
    rset: SummarySet,
    g1: EmpiricalCond,
    g0: EmpiricalCond,
    sigma: int,
    L: float = math.inf,
) -> SeparationSolution:
    """Solve the separation program; the returned point always satisfies every
    constraint (slacks are completed exactly from zeta)."""
    a, b, n1 = _build(h, rset, g1, g0, sigma)
    n, j = a.shape
    scale = 1.0 + float(np.max(np.abs(b), initial=0.0)) + float(np.max(np.abs(a), initial=0.0))
    if L < 0:
        raise ValidationError("slack price L must be nonnegative")

    sharp = False
    if L == 0:
        zeta = np.zeros(j)
    elif math.isinf(L):
        # phase 1: minimum total slack (tiny ridge keeps the iteration
        # stable); stop once the snapped vertex value stabilizes
        history: list[float] = []

        def stop_when_stable(z):
            snapped = _polish_minslack(a, b, z, scale)
            val = _total_slack(a, b, snapped)
            history.append(val)
            if len(history) >= 3 and max(history[-3:]) - min(history[-3:]) <= 1e-13 * scale:
                return snapped
            return None

        zeta1, _ = _admm(
            a, b, quad_coef=1e-9, hinge_weight=1.0, hard=False, max_iter=40000,
            polish_cb=stop_when_stable,
        )
        zeta1 = _polish_minslack(a, b, zeta1, scale)
        min_slack = _total_slack(a, b, zeta1)
        if min_slack <= 1e-9 * scale * max(1, n):
            sharp = True
            zeta, _ = _admm(
                a, b, quad_coef=1.0, hinge_weight=0.0, hard=True, max_iter=40000,
                polish_cb=lambda z: _polish_hard(a, b, z, scale),
            )
        else:
            zeta = zeta1
    else:
        # finite penalty: exact polish when the activity pattern verifies,
        # value-stabilization stop otherwise (feasibility never depends on it)
        values: list[float] = []

        def finite_cb(z):
            polished = _polish_finite(a, b, L, z, scale)
            if polished is not None:
                return polished
            val = float(z @ z) + L * _total_slack(a, b, z)
            values.append(val)
            if len(values) >= 4 and max(values[-4:]) - min(values[-4:]) <= 1e-11 * (1 + val):
                return z
            return None

        zeta, _ = _admm(
            a, b, quad_coef=1.0, hinge_weight=L, hard=False, max_iter=40000,
            polish_cb=finite_cb,
        )

    xi = _slack_completion(a, b, zeta)
    if sharp:
        xi = np.where(xi < 1e-12 * scale, 0.0, xi)
    total_slack = float(xi.sum())
    residual = float(np.max(b - a @ zeta - xi, initial=0.0))
    if math.isinf(L):
        objective = float(zeta @ zeta) if sharp else math.inf
    else:
        objective = float(zeta @ zeta + L * total_slack)
    return SeparationSolution(
        zeta=zeta,
        slacks1=xi[:n1],
        slacks0=xi[n1:],
        sigma=sigma,
        objective=objective,
        feasible=bool(residual <= 1e-8 * scale),
        sharp=sharp,
        total_slack=total_slack,
        max_residual=residual,
        a_matrix=a,
        b_vector=b,
    )


def minimal_slack_oracle(h: Perturbation, rset: SummarySet, g1, g0, sigma: int) -> float:
    """Brute-force minimum total slack by enumerating candidate basic points
    (every subset of <= J constraint hyperplanes); exact on small instances
    because the piecewise-linear objective attains its minimum at one of
    them. Independent of the iterative solver path."""
    from itertools import combinations

    a, b, _ = _build(h, rset, g1, g0, sigma)
    n, j = a.shape
    best = _total_slack(a, b, np.zeros(j))
    for k in range(1, j + 1):
        for rows in combinations(range(n), k):
            sub = a[list(rows)]
            if np.linalg.matrix_rank(sub) < k:
                continue
            zeta = np.linalg.lstsq(sub, b[list(rows)], rcond=None)[0]
            best = min(best, _total_slack(a, b, zeta))
    return best


def m_md(
    sol_plus: SeparationSolution,
    sol_minus: SeparationSolution,
    g1: EmpiricalCond,
    g0: EmpiricalCond,
) -> tuple[np.ndarray, float]:
    """Componentwise max of |zeta| across the two orientations, plus the
    mass-weighted expected slack summed over orientations and arms."""
    if sol_plus.sigma != 1 or sol_minus.sigma != -1:
        raise ValidationError("need one solution per orientation (+1 and -1)")
    if sol_plus.a_matrix.shape != sol_minus.a_matrix.shape:
        raise ValidationError("separation solutions come from different instances")
    if not (
        np.allclose(sol_plus.a_matrix, -sol_minus.a_matrix)
        and np.allclose(sol_plus.b_vector, -sol_minus.b_vector)
    ):
        raise ValidationError("separation solutions come from different instances")
    if len(sol_plus.slacks1) != len(g1.points) or len(sol_plus.slacks0) != len(g0.points):
        raise ValidationError("solutions do not match the given arm distributions")
    m = np.maximum(np.abs(sol_plus.zeta), np.abs(sol_minus.zeta))
    mass1 = np.array([w for _, w in g1.points])
    mass0 = np.array([w for _, w in g0.points])
    slack = 0.0
    for sol in (sol_plus, sol_minus):
        slack += float(mass1 @ sol.slacks1) + float(mass0 @ sol.slacks0)
    return m, slack
