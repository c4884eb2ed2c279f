"""Embedded primal-dual interior-point solver with KKT verification,
a copper-plate analytic oracle, and a finite-difference derivative audit.

The solver minimizes the negated welfare objective subject to the power
balance equalities and all inequality rows (line limits, adequacy, box
bounds). Inequalities get positive slacks with a logarithmic barrier; the
barrier parameter decreases monotonically; the condensed KKT system is
factored with an inertia check and diagonal regularization; steps are
safeguarded by the fraction-to-boundary rule and a merit-function
backtracking line search. Everything is deterministic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .casemodel import CaseData
from .formulation import Problem
from .welfare import gen_cost, satisfaction

_FIXED_TOL = 1e-9     # bound pairs tighter than this are treated as fixed
_SMAX = 100.0         # residual scaling cap (dual magnitudes)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-6
    max_iter: int = 200
    mu0: float = 0.1
    mu_reduction: float = 0.2
    tau: float = 0.995  # fraction-to-boundary


@dataclass
class Solution:
    status: str  # converged | iteration_limit | infeasible_detected | numerical_failure
    x: np.ndarray
    lam_eq: np.ndarray      # power-balance duals
    nu_ineq: np.ndarray     # line-limit and adequacy duals
    z_lower: np.ndarray     # lower-bound duals
    z_upper: np.ndarray     # upper-bound duals
    iterations: int
    objective: float        # maximization value, $/h
    log: list = field(default_factory=list)
    max_violation: float = np.inf
    # unpacked physical quantities (MW/MVAr, p.u. voltages, rad angles)
    p_gen: np.ndarray = None
    q_gen: np.ndarray = None
    p_agg: np.ndarray = None
    q_agg: np.ndarray = None
    v: np.ndarray = None
    theta: np.ndarray = None


class _InternalNLP:
    """Minimization form of a Problem with bounds expanded to inequality
    rows. Row order: problem inequalities, finite lower bounds, finite upper
    bounds; near-degenerate bound pairs become extra equality rows."""

    def __init__(self, problem: Problem):
        self.problem = problem
        lb, ub = problem.lb, problem.ub
        self.lower_idx = np.flatnonzero(np.isfinite(lb) & (ub - lb > _FIXED_TOL))
        self.upper_idx = np.flatnonzero(np.isfinite(ub) & (ub - lb > _FIXED_TOL))
        self.fixed_idx = np.flatnonzero(np.isfinite(lb) & (ub - lb <= _FIXED_TOL))
        self.n = problem.n_var
        self.m_eq = problem.n_eq + len(self.fixed_idx)
        self.m_ineq = problem.n_ineq + len(self.lower_idx) + len(self.upper_idx)

    def f(self, x):
        return -self.problem.objective(x)

    def grad(self, x):
        return -self.problem.objective_gradient(x)

    def ce(self, x):
        vals = self.problem.equalities(x)
        if len(self.fixed_idx):
            vals = np.concatenate([vals, x[self.fixed_idx] - self.problem.lb[self.fixed_idx]])
        return vals

    def je(self, x):
        jac = self.problem.equality_jacobian(x)
        if len(self.fixed_idx):
            rows = np.zeros((len(self.fixed_idx), self.n))
            rows[np.arange(len(self.fixed_idx)), self.fixed_idx] = 1.0
            jac = np.vstack([jac, rows])
        return jac

    def h(self, x):
        vals = self.problem.inequalities(x)
        lo = self.problem.lb[self.lower_idx] - x[self.lower_idx]
        up = x[self.upper_idx] - self.problem.ub[self.upper_idx]
        return np.concatenate([vals, lo, up])

    def jh(self, x):
        jac = np.zeros((self.m_ineq, self.n))
        mi = self.problem.n_ineq
        jac[:mi] = self.problem.inequality_jacobian(x)
        r = np.arange(len(self.lower_idx))
        jac[mi + r, self.lower_idx] = -1.0
        r = np.arange(len(self.upper_idx))
        jac[mi + len(self.lower_idx) + r, self.upper_idx] = 1.0
        return jac

    def hess(self, x, lam, nu):
        lam_eq = lam[:self.problem.n_eq]
        nu_ineq = nu[:self.problem.n_ineq]
        return self.problem.lagrangian_hessian(x, 1.0, lam_eq, nu_ineq)


def _inertia(kkt: np.ndarray) -> tuple[int, int, int]:
    """(positive, negative, zero) eigenvalue counts via LDL factorization."""
    _, d, _ = scipy.linalg.ldl(kkt, lower=True)
    pos = neg = zero = 0
    m = d.shape[0]
    i = 0
    while i < m:
        if i + 1 < m and abs(d[i + 1, i]) > 1e-14:
            ev = np.linalg.eigvalsh(d[i:i + 2, i:i + 2])
            for e in ev:
                pos, neg, zero = _count(e, pos, neg, zero)
            i += 2
        else:
            pos, neg, zero = _count(d[i, i], pos, neg, zero)
            i += 1
    return pos, neg, zero


def _count(e, pos, neg, zero):
    if e > 1e-12:
        return pos + 1, neg, zero
    if e < -1e-12:
        return pos, neg + 1, zero
    return pos, neg, zero + 1


def _scaled_residuals(nlp, x, s, lam, nu, mu):
    grad_l = nlp.grad(x) + nlp.je(x).T @ lam + nlp.jh(x).T @ nu
    r_e = nlp.ce(x)
    r_h = nlp.h(x) + s
    comp = s * nu - mu
    m = max(1, len(lam) + len(nu))
    s_d = max(_SMAX, (np.abs(lam).sum() + np.abs(nu).sum()) / m) / _SMAX
    s_c = max(_SMAX, np.abs(nu).sum() / max(1, len(nu))) / _SMAX
    inf_pr = max(np.max(np.abs(r_e), initial=0.0), np.max(np.abs(r_h), initial=0.0))
    inf_du = np.max(np.abs(grad_l)) / s_d
    inf_comp = np.max(np.abs(comp), initial=0.0) / s_c
    return inf_pr, inf_du, inf_comp


def _screen_infeasible(problem: Problem) -> str | None:
    """Cheap separable screening of the adequacy-plus-box feasible set."""
    lay = problem.layout
    if np.sum(problem.ub[lay.pg]) < np.sum(problem.lb[lay.pa]) - 1e-12:
        return "total generation capacity below total critical active demand"
    if np.sum(problem.ub[lay.qg]) < np.sum(problem.lb[lay.qa]) - 1e-12:
        return "total reactive capability below total critical reactive demand"
    if np.any(problem.lb > problem.ub):
        return "empty variable box"
    return None


def solve(problem: Problem, opts: SolverOptions = SolverOptions()) -> Solution:
    reason = _screen_infeasible(problem)
    if reason is not None:
        x = problem.initial_point()
        return _finish(problem, None, x, None, None, 0, [], "infeasible_detected")

    nlp = _InternalNLP(problem)
    n, me, mi = nlp.n, nlp.m_eq, nlp.m_ineq

    x = problem.initial_point()
    s = np.maximum(1e-2, -nlp.h(x))
    mu = opts.mu0
    nu = np.maximum(mu / s, 1e-8)
    lam = np.zeros(me)
    rho = 10.0
    log = []
    status = "iteration_limit"
    it = 0

    for it in range(1, opts.max_iter + 1):
        inf_pr, inf_du, inf_comp0 = _scaled_residuals(nlp, x, s, lam, nu, 0.0)
        log.append({"iter": it, "mu": mu, "inf_pr": inf_pr, "inf_du": inf_du,
                    "f": nlp.f(x)})
        if max(inf_pr, inf_du, inf_comp0) <= opts.tol:
            status = "converged"
            break
        _, _, inf_comp_mu = _scaled_residuals(nlp, x, s, lam, nu, mu)
        if max(inf_pr, inf_du, inf_comp_mu) <= 10.0 * mu:
            mu = max(opts.tol / 100.0, opts.mu_reduction * mu)

        grad = nlp.grad(x)
        je = nlp.je(x)
        jh = nlp.jh(x)
        r_e = nlp.ce(x)
        r_h = nlp.h(x) + s
        r_d = grad + je.T @ lam + jh.T @ nu

        w = nlp.hess(x, lam, nu)
        d_sigma = nu / s
        m_base = w + (jh.T * d_sigma) @ jh
        rhs = np.concatenate([
            -(r_d + jh.T @ ((mu / s - nu) + d_sigma * r_h)),
            -r_e,
        ])

        delta_w = 0.0
        delta_c = 1e-8
        step = None
        for _ in range(30):
            kkt = np.zeros((n + me, n + me))
            kkt[:n, :n] = m_base + delta_w * np.eye(n)
            kkt[:n, n:] = je.T
            kkt[n:, :n] = je
            kkt[n:, n:] = -delta_c * np.eye(me)
            try:
                pos, neg, zero = _inertia(kkt)
                if pos == n and neg == me and zero == 0:
                    with warnings.catch_warnings():
                        # near convergence the system is legitimately stiff;
                        # accuracy is guarded by the residual tests instead
                        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                        step = scipy.linalg.solve(kkt, rhs, assume_a="sym")
                    if np.all(np.isfinite(step)):
                        break
                    step = None
            except (np.linalg.LinAlgError, ValueError):
                pass
            delta_w = 1e-4 if delta_w == 0.0 else delta_w * 10.0
            if delta_w > 1e20:
                break
        if step is None:
            status = "numerical_failure"
            break

        dx, dlam = step[:n], step[n:]
        ds = -r_h - jh @ dx
        dnu = mu / s - nu - d_sigma * ds

        # fraction-to-boundary step limits
        alpha_p = _max_step(s, ds, opts.tau)
        alpha_d = _max_step(nu, dnu, opts.tau)

        lam_new_inf = np.max(np.abs(lam + alpha_d * dlam), initial=0.0)
        nu_new_inf = np.max(np.abs(nu + alpha_d * dnu), initial=0.0)
        rho = max(rho, 1.2 * (lam_new_inf + nu_new_inf))

        phi0, theta0 = _merit(nlp, x, s, mu, rho)
        dphi = grad @ dx - mu * np.sum(ds / s) - rho * theta0
        alpha = alpha_p
        if dphi < 0.0:
            for _ in range(30):
                phi_t, _ = _merit(nlp, x + alpha * dx, s + alpha * ds, mu, rho)
                if np.isfinite(phi_t) and phi_t <= phi0 + 1e-4 * alpha * dphi + 1e-10 * abs(phi0):
                    break
                alpha *= 0.5
            else:
                # no sufficient decrease found; fall back to the full
                # boundary-limited step rather than stalling the iteration
                alpha = alpha_p
        x = x + alpha * dx
        s = s + alpha * ds
        lam = lam + alpha_d * dlam
        nu = np.maximum(nu + alpha_d * dnu, 1e-14)
        # keep inequality duals within a band of mu/s (degenerate or weakly
        # active rows otherwise distort the equality duals)
        kappa = 1e10
        nu = np.clip(nu, mu / (kappa * s), kappa * mu / s)

    else:
        it = opts.max_iter

    if status == "iteration_limit" and it >= opts.max_iter:
        pass
    return _finish(problem, nlp, x, lam, nu, it, log, status)


def _max_step(vals, deltas, tau):
    neg = deltas < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * vals[neg] / deltas[neg])))


def _merit(nlp, x, s, mu, rho):
    if np.any(s <= 0):
        return np.inf, np.inf
    theta = np.abs(nlp.ce(x)).sum() + np.abs(nlp.h(x) + s).sum()
    return nlp.f(x) - mu * np.log(s).sum() + rho * theta, theta


def _finish(problem, nlp, x, lam, nu, iterations, log, status) -> Solution:
    me_p, mi_p = problem.n_eq, problem.n_ineq
    if nlp is None:
        lam_eq = np.zeros(me_p)
        nu_ineq = np.zeros(mi_p)
        z_l = np.zeros(problem.n_var)
        z_u = np.zeros(problem.n_var)
    else:
        lam_eq = lam[:me_p]
        z_l = np.zeros(problem.n_var)
        z_u = np.zeros(problem.n_var)
        nu_ineq = nu[:mi_p]
        z_l[nlp.lower_idx] = nu[mi_p:mi_p + len(nlp.lower_idx)]
        z_u[nlp.upper_idx] = nu[mi_p + len(nlp.lower_idx):]
        # duals of fixed-variable rows fold into the bound duals
        for k, i in enumerate(nlp.fixed_idx):
            d = lam[me_p + k]
            if d >= 0:
                z_u[i] = d
            else:
                z_l[i] = -d

    eq = problem.equalities(x)
    ineq = problem.inequalities(x)
    bound_viol = np.maximum(problem.lb - x, 0.0) + np.maximum(x - problem.ub, 0.0)
    bound_viol[~np.isfinite(bound_viol)] = 0.0
    max_violation = max(np.max(np.abs(eq)), np.max(ineq, initial=0.0),
                        np.max(bound_viol, initial=0.0), 0.0)

    state = problem.unpack(x)
    return Solution(
        status=status, x=x, lam_eq=lam_eq, nu_ineq=nu_ineq,
        z_lower=z_l, z_upper=z_u, iterations=iterations,
        objective=problem.objective(x), log=log, max_violation=max_violation,
        p_gen=state["p_gen"], q_gen=state["q_gen"],
        p_agg=state["p_agg"], q_agg=state["q_agg"],
        v=state["v"], theta=state["theta"],
    )


# ---------------------------------------------------------------------------
# KKT verification


@dataclass(frozen=True)
class KKTReport:
    stationarity: float
    primal_feasibility: float
    dual_feasibility: float
    complementarity: float
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.stationarity, self.primal_feasibility,
                   self.dual_feasibility, self.complementarity) < self.tol


def kkt_check(problem: Problem, solution: Solution, tol: float = 1e-6) -> KKTReport:
    """Recompute the four KKT residual norms of a solution from scratch."""
    if solution.lam_eq is None or solution.nu_ineq is None:
        raise ValueError("solution carries no dual multipliers")
    x = solution.x
    grad = -problem.objective_gradient(x)  # minimization sense
    je = problem.equality_jacobian(x)
    jh = problem.inequality_jacobian(x)

    stat = (grad + je.T @ solution.lam_eq + jh.T @ solution.nu_ineq
            - solution.z_lower + solution.z_upper)
    duals_sum = (np.abs(solution.lam_eq).sum() + np.abs(solution.nu_ineq).sum()
                 + np.abs(solution.z_lower).sum() + np.abs(solution.z_upper).sum())
    m = max(1, problem.n_eq + problem.n_ineq + 2 * problem.n_var)
    s_d = max(_SMAX, duals_sum / m) / _SMAX

    eq = problem.equalities(x)
    ineq = problem.inequalities(x)
    lo = np.where(np.isfinite(problem.lb), problem.lb - x, -np.inf)
    up = np.where(np.isfinite(problem.ub), x - problem.ub, -np.inf)
    primal = max(np.max(np.abs(eq)), np.max(ineq, initial=0.0),
                 np.max(lo, initial=0.0), np.max(up, initial=0.0), 0.0)

    dual = max(0.0, -np.min(solution.nu_ineq, initial=0.0),
               -np.min(solution.z_lower, initial=0.0),
               -np.min(solution.z_upper, initial=0.0))

    comp_terms = [np.abs(solution.nu_ineq * ineq)]
    lo_gap = np.where(np.isfinite(problem.lb), x - problem.lb, 0.0)
    up_gap = np.where(np.isfinite(problem.ub), problem.ub - x, 0.0)
    comp_terms.append(np.abs(solution.z_lower * lo_gap))
    comp_terms.append(np.abs(solution.z_upper * up_gap))
    comp = max(np.max(t, initial=0.0) for t in comp_terms)
    s_c = max(_SMAX, duals_sum / m) / _SMAX

    return KKTReport(float(np.max(np.abs(stat)) / s_d), float(primal),
                     float(dual), float(comp / s_c), tol)


# ---------------------------------------------------------------------------
# copper-plate oracle


def copper_plate_oracle(case: CaseData, gap_tol: float = 1e-9):
    """Network-free optimum of the weighted-welfare dispatch.

    Solves max sum(sigma*U(P_a)) - sum(C(P_g)) subject to the single balance
    sum(P_g) = sum(P_a) and box bounds, by bisection on the shadow price.
    Returns (p_agg MW, p_gen MW, weighted objective $/h).
    """
    aggs, gens = case.aggregators, case.generators

    def demand(lam):
        out = []
        for a in aggs:
            if a.sigma <= 0:
                out.append(a.p_c if lam > 0 else a.p_n)
                continue
            p = (a.gamma - lam / a.sigma) / a.mu
            out.append(min(max(p, a.p_c), a.p_n))
        return np.array(out)

    def supply(lam):
        out = []
        for g in gens:
            if g.a > 0:
                p = (lam - g.b) / (2.0 * g.a)
            else:
                p = g.p_max if lam >= g.b else g.p_min
            out.append(min(max(p, g.p_min), g.p_max))
        return np.array(out)

    def gap(lam):
        return float(np.sum(supply(lam)) - np.sum(demand(lam)))

    hi = max([a.sigma * a.gamma for a in aggs]
             + [2.0 * g.a * g.p_max + g.b for g in gens]) + 1.0
    lo = min(0.0, min(g.b for g in gens)) - 1.0
    if gap(hi) < -gap_tol or gap(lo) > gap_tol:
        raise ValueError("no shadow price balances supply and demand within bounds")

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g_mid = gap(mid)
        if abs(g_mid) < gap_tol:
            lo = hi = mid
            break
        if g_mid > 0:
            hi = mid
        else:
            lo = mid
    lam = 0.5 * (lo + hi)
    p_a, p_g = demand(lam), supply(lam)

    # close any residual gap across marginal (strictly interior) units
    resid = float(np.sum(p_g) - np.sum(p_a))
    if abs(resid) > gap_tol:
        interior = [k for k, g in enumerate(gens)
                    if g.p_min + 1e-12 < p_g[k] < g.p_max - 1e-12]
        if interior:
            p_g[interior] -= resid / len(interior)
        else:
            raise ValueError("no shadow price balances supply and demand within bounds")

    weighted = (sum(a.sigma * satisfaction(a, p) for a, p in zip(aggs, p_a))
                - sum(gen_cost(g, p) for g, p in zip(gens, p_g)))
    return p_a, p_g, float(weighted)


# ---------------------------------------------------------------------------
# finite-difference derivative audit


@dataclass(frozen=True)
class AuditReport:
    max_rel_error: float
    worst_entry: str
    n_points: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def finite_difference_audit(problem: Problem, n_points: int = 100,
                            seed: int = 0, tol: float = 1e-6) -> AuditReport:
    """Compare analytic gradient/Jacobians with central differences at
    seeded random interior points."""
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_entry = "none"

    for _ in range(n_points):
        x = _interior_point(problem, rng)
        # The objective is piecewise quadratic, so a central difference is
        # exact for any step that stays on one branch; the wide step keeps
        # rounding noise (objective magnitudes reach 1e6) far below tol.
        checks = [
            ("gradient", problem.objective_gradient(x),
             _central_diff(problem.objective, x, step=_OBJ_FD_STEP)),
            ("eq_jacobian", problem.equality_jacobian(x),
             _central_diff_vec(problem.equalities, x)),
            ("ineq_jacobian", problem.inequality_jacobian(x),
             _central_diff_vec(problem.inequalities, x)),
        ]
        for name, analytic, fd in checks:
            err = np.abs(analytic - fd) / np.maximum(
                1.0, np.maximum(np.abs(analytic), np.abs(fd)))
            k = int(np.argmax(err))
            if err.flat[k] > worst:
                worst = float(err.flat[k])
                worst_entry = f"{name}[{np.unravel_index(k, err.shape)}]"
    return AuditReport(worst, worst_entry, n_points, tol)


_OBJ_FD_STEP = 0.02  # wide objective step; exact on a quadratic branch


def _interior_point(problem: Problem, rng) -> np.ndarray:
    lay = problem.layout
    lb, ub = problem.lb, problem.ub
    t = rng.uniform(0.15, 0.85, size=problem.n_var)
    x = np.zeros(problem.n_var)
    boxed = np.isfinite(lb) & np.isfinite(ub)
    x[boxed] = lb[boxed] + t[boxed] * (ub[boxed] - lb[boxed])
    x[lay.th] = rng.uniform(-0.3, 0.3, size=lay.n_bus - 1)
    # keep demands away from the satisfaction kink where the second
    # derivative jumps (central differences straddle it otherwise); the
    # margin must exceed the widest finite-difference step in use
    sb = problem.case.s_base
    for k, agg in enumerate(problem.case.aggregators):
        i = lay.pa.start + k
        sat = agg.gamma / agg.mu / sb
        margin = 2.0 * _OBJ_FD_STEP * max(1.0, sat)
        if abs(x[i] - sat) < margin:
            below = sat - margin
            x[i] = below if below >= lb[i] else min(sat + margin, ub[i])
    return x


def _central_diff(fun, x, step=1e-6):
    n = len(x)
    out = np.empty(n)
    for i in range(n):
        h = step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (fun(xp) - fun(xm)) / (2 * h)
    return out


def _central_diff_vec(fun, x, step=1e-6):
    n = len(x)
    cols = []
    for i in range(n):
        h = step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((fun(xp) - fun(xm)) / (2 * h))
    return np.stack(cols, axis=-1)
