"""Assembly of the welfare-maximizing AC-OPF as an equality/inequality
constrained NLP with analytic first and second derivatives.

Variable layout (all per-unit): generator P, generator Q, aggregator P,
aggregator Q, bus voltage magnitudes, then non-slack bus angles. The slack
angle is fixed to zero and is not a variable. Power balance is enforced at
every bus (the slack generator output remains free within its limits), line
limits are applied to both directed flows, and the adequacy constraints are
kept even though active-power adequacy is implied by balance plus
nonnegative losses.

Inequality convention: value <= 0 means satisfied. The objective evaluators
work in the maximization sense (SES-weighted satisfaction minus cost, $/h);
the solver negates internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import acnetwork
from .casemodel import CaseData, validate_case
from .welfare import marginal_cost, marginal_satisfaction, social_objective


@dataclass(frozen=True)
class VariableLayout:
    n_gen: int
    n_agg: int
    n_bus: int
    slack: int  # bus index whose angle is fixed

    @property
    def n_var(self) -> int:
        return 2 * self.n_gen + 2 * self.n_agg + 2 * self.n_bus - 1

    @property
    def pg(self) -> slice:
        return slice(0, self.n_gen)

    @property
    def qg(self) -> slice:
        return slice(self.n_gen, 2 * self.n_gen)

    @property
    def pa(self) -> slice:
        return slice(2 * self.n_gen, 2 * self.n_gen + self.n_agg)

    @property
    def qa(self) -> slice:
        return slice(2 * self.n_gen + self.n_agg, 2 * self.n_gen + 2 * self.n_agg)

    @property
    def v(self) -> slice:
        k = 2 * self.n_gen + 2 * self.n_agg
        return slice(k, k + self.n_bus)

    @property
    def th(self) -> slice:
        k = 2 * self.n_gen + 2 * self.n_agg + self.n_bus
        return slice(k, k + self.n_bus - 1)

    def theta_index(self, bus: int) -> int:
        """Global variable index of a non-slack bus angle."""
        if bus == self.slack:
            raise ValueError("slack angle is not a variable")
        off = bus if bus < self.slack else bus - 1
        return self.th.start + off


@dataclass
class Problem:
    case: CaseData
    layout: VariableLayout
    lb: np.ndarray
    ub: np.ndarray
    adm: acnetwork.Admittance
    # line incidence (bus indices) and series admittances, precomputed
    line_from: np.ndarray = field(default=None)
    line_to: np.ndarray = field(default=None)
    line_g: np.ndarray = field(default=None)
    line_b: np.ndarray = field(default=None)

    @property
    def n_var(self) -> int:
        return self.layout.n_var

    @property
    def n_eq(self) -> int:
        return 2 * self.layout.n_bus

    @property
    def n_ineq(self) -> int:
        return 2 * len(self.case.lines) + 2

    # -- state helpers ------------------------------------------------------

    def full_theta(self, x: np.ndarray) -> np.ndarray:
        lay = self.layout
        theta = np.zeros(lay.n_bus)
        mask = np.arange(lay.n_bus) != lay.slack
        theta[mask] = x[lay.th]
        return theta

    def unpack(self, x: np.ndarray) -> dict:
        """Decode a decision vector into named physical quantities (MW/MVAr)."""
        lay, sb = self.layout, self.case.s_base
        return {
            "p_gen": x[lay.pg] * sb,
            "q_gen": x[lay.qg] * sb,
            "p_agg": x[lay.pa] * sb,
            "q_agg": x[lay.qa] * sb,
            "v": x[lay.v].copy(),
            "theta": self.full_theta(x),
        }

    def initial_point(self) -> np.ndarray:
        """Flat voltage start, box-midpoint generation, critical demand."""
        lay = self.layout
        x = np.zeros(self.n_var)
        x[lay.pg] = 0.5 * (self.lb[lay.pg] + self.ub[lay.pg])
        x[lay.qg] = 0.5 * (self.lb[lay.qg] + self.ub[lay.qg])
        x[lay.pa] = self.lb[lay.pa]
        x[lay.qa] = self.lb[lay.qa]
        x[lay.v] = 1.0
        return x

    # -- objective ----------------------------------------------------------

    def objective(self, x: np.ndarray) -> float:
        lay, sb = self.layout, self.case.s_base
        w, _, _ = social_objective(self.case, x[lay.pa] * sb, x[lay.pg] * sb)
        return w

    def objective_gradient(self, x: np.ndarray) -> np.ndarray:
        lay, sb = self.layout, self.case.s_base
        grad = np.zeros(self.n_var)
        for k, agg in enumerate(self.case.aggregators):
            p = x[lay.pa.start + k] * sb
            grad[lay.pa.start + k] = agg.sigma * marginal_satisfaction(agg, p) * sb
        for k, gen in enumerate(self.case.generators):
            p = x[lay.pg.start + k] * sb
            grad[lay.pg.start + k] = -marginal_cost(gen, p) * sb
        return grad

    def objective_hessian_diag(self, x: np.ndarray) -> np.ndarray:
        lay, sb = self.layout, self.case.s_base
        diag = np.zeros(self.n_var)
        for k, agg in enumerate(self.case.aggregators):
            p = x[lay.pa.start + k] * sb
            if p < agg.gamma / agg.mu:
                diag[lay.pa.start + k] = -agg.sigma * agg.mu * sb * sb
        for k, gen in enumerate(self.case.generators):
            diag[lay.pg.start + k] = -2.0 * gen.a * sb * sb
        return diag

    # -- equality constraints (power balance, p.u.) -------------------------

    def _net_injection(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lay = self.layout
        p_net = np.zeros(lay.n_bus)
        q_net = np.zeros(lay.n_bus)
        for k, gen in enumerate(self.case.generators):
            i = self.case.bus_index(gen.bus)
            p_net[i] += x[lay.pg.start + k]
            q_net[i] += x[lay.qg.start + k]
        for k, agg in enumerate(self.case.aggregators):
            i = self.case.bus_index(agg.bus)
            p_net[i] -= x[lay.pa.start + k]
            q_net[i] -= x[lay.qa.start + k]
        return p_net, q_net

    def equalities(self, x: np.ndarray) -> np.ndarray:
        v = x[self.layout.v]
        theta = self.full_theta(x)
        p_net, q_net = self._net_injection(x)
        rp, rq = acnetwork.injection_residuals(self.adm, v, theta, p_net, q_net)
        return np.concatenate([rp, rq])

    def equality_jacobian(self, x: np.ndarray) -> np.ndarray:
        lay = self.layout
        nb = lay.n_bus
        v = x[lay.v]
        theta = self.full_theta(x)
        g, b = self.adm.g, self.adm.b

        dth = theta[:, None] - theta[None, :]
        ct, st = np.cos(dth), np.sin(dth)
        kp = g * ct + b * st
        kq = g * st - b * ct
        p_inj = v * (kp @ v)
        q_inj = v * (kq @ v)

        # network injection partials
        dp_dv = v[:, None] * kp
        np.fill_diagonal(dp_dv, kp @ v + v * np.diag(kp))
        dq_dv = v[:, None] * kq
        np.fill_diagonal(dq_dv, kq @ v + v * np.diag(kq))
        vv = v[:, None] * v[None, :]
        dp_dth = vv * kq
        np.fill_diagonal(dp_dth, -q_inj - v * v * np.diag(b))
        dq_dth = -vv * kp
        np.fill_diagonal(dq_dth, p_inj - v * v * np.diag(g))

        jac = np.zeros((2 * nb, self.n_var))
        for k, gen in enumerate(self.case.generators):
            i = self.case.bus_index(gen.bus)
            jac[i, lay.pg.start + k] = 1.0
            jac[nb + i, lay.qg.start + k] = 1.0
        for k, agg in enumerate(self.case.aggregators):
            i = self.case.bus_index(agg.bus)
            jac[i, lay.pa.start + k] = -1.0
            jac[nb + i, lay.qa.start + k] = -1.0

        jac[:nb, lay.v] = -dp_dv
        jac[nb:, lay.v] = -dq_dv
        mask = np.arange(nb) != lay.slack
        jac[:nb, lay.th] = -dp_dth[:, mask]
        jac[nb:, lay.th] = -dq_dth[:, mask]
        return jac

    # -- inequality constraints (<= 0) --------------------------------------

    def _line_state(self, x: np.ndarray):
        lay = self.layout
        v = x[lay.v]
        theta = self.full_theta(x)
        return v[self.line_from], v[self.line_to], theta[self.line_from], theta[self.line_to]

    def inequalities(self, x: np.ndarray) -> np.ndarray:
        lay = self.layout
        vi, vj, ti, tj = self._line_state(x)
        smax = np.array([ln.s_max for ln in self.case.lines]) / self.case.s_base
        p_ft = acnetwork.flow_p(vi, vj, ti, tj, self.line_g, self.line_b)
        p_tf = acnetwork.flow_p(vj, vi, tj, ti, self.line_g, self.line_b)
        adequacy = np.array([
            np.sum(x[lay.pa]) - np.sum(x[lay.pg]),
            np.sum(x[lay.qa]) - np.sum(x[lay.qg]),
        ])
        return np.concatenate([p_ft - smax, p_tf - smax, adequacy])

    def inequality_jacobian(self, x: np.ndarray) -> np.ndarray:
        lay = self.layout
        nl = len(self.case.lines)
        jac = np.zeros((self.n_ineq, self.n_var))
        vi, vj, ti, tj = self._line_state(x)

        for k in range(nl):
            i, j = self.line_from[k], self.line_to[k]
            g, b = self.line_g[k], self.line_b[k]
            cols_ft = self._line_cols(i, j)
            grad = acnetwork.flow_p_grad(vi[k], vj[k], ti[k], tj[k], g, b)
            for c, gval in zip(cols_ft, grad):
                if c is not None:
                    jac[k, c] += gval
            cols_tf = self._line_cols(j, i)
            grad = acnetwork.flow_p_grad(vj[k], vi[k], tj[k], ti[k], g, b)
            for c, gval in zip(cols_tf, grad):
                if c is not None:
                    jac[nl + k, c] += gval

        jac[2 * nl, lay.pa] = 1.0
        jac[2 * nl, lay.pg] = -1.0
        jac[2 * nl + 1, lay.qa] = 1.0
        jac[2 * nl + 1, lay.qg] = -1.0
        return jac

    def _line_cols(self, i: int, j: int):
        """Global column indices for local state (vi, vj, ti, tj); None for
        the fixed slack angle."""
        lay = self.layout
        ci = None if i == lay.slack else lay.theta_index(i)
        cj = None if j == lay.slack else lay.theta_index(j)
        return (lay.v.start + i, lay.v.start + j, ci, cj)

    # -- Lagrangian Hessian --------------------------------------------------

    def lagrangian_hessian(self, x, sigma_obj, lam_eq, lam_ineq) -> np.ndarray:
        """Hessian of sigma_obj * f_min + lam_eq . c_E + lam_ineq . h, where
        f_min = -objective (minimization sense)."""
        n = self.n_var
        lay = self.layout
        nb, nl = lay.n_bus, len(self.case.lines)
        hess = np.zeros((n, n))
        hess[np.diag_indices(n)] -= sigma_obj * self.objective_hessian_diag(x)

        vi, vj, ti, tj = self._line_state(x)
        for k in range(nl):
            i, j = self.line_from[k], self.line_to[k]
            g, b = self.line_g[k], self.line_b[k]
            # equality rows: residual = net - injection, and per-line flows
            # sum into the from/to bus injections
            w_p_i = -lam_eq[i]
            w_p_j = -lam_eq[j]
            w_q_i = -lam_eq[nb + i]
            w_q_j = -lam_eq[nb + j]
            # inequality rows: directed flow limits
            w_ft = lam_ineq[k]
            w_tf = lam_ineq[nl + k]

            h_from = ((w_p_i + w_ft)
                      * acnetwork.flow_p_hess(vi[k], vj[k], ti[k], tj[k], g, b)
                      + w_q_i * acnetwork.flow_q_hess(vi[k], vj[k], ti[k], tj[k], g, b))
            h_to = ((w_p_j + w_tf)
                    * acnetwork.flow_p_hess(vj[k], vi[k], tj[k], ti[k], g, b)
                    + w_q_j * acnetwork.flow_q_hess(vj[k], vi[k], tj[k], ti[k], g, b))

            self._scatter(hess, h_from, self._line_cols(i, j))
            self._scatter(hess, h_to, self._line_cols(j, i))
        return hess

    @staticmethod
    def _scatter(hess, local, cols):
        for r, cr in enumerate(cols):
            if cr is None:
                continue
            for c, cc in enumerate(cols):
                if cc is None:
                    continue
                hess[cr, cc] += local[r, c]


def build_problem(case: CaseData) -> Problem:
    report = validate_case(case)
    if report:
        raise ValueError("invalid case: " + "; ".join(report))

    ng, na, nb = len(case.generators), len(case.aggregators), len(case.buses)
    layout = VariableLayout(ng, na, nb, case.slack_index())
    sb = case.s_base

    lb = np.empty(layout.n_var)
    ub = np.empty(layout.n_var)
    lb[layout.pg] = [g.p_min / sb for g in case.generators]
    ub[layout.pg] = [g.p_max / sb for g in case.generators]
    lb[layout.qg] = [g.q_min / sb for g in case.generators]
    ub[layout.qg] = [g.q_max / sb for g in case.generators]
    lb[layout.pa] = [a.p_c / sb for a in case.aggregators]
    ub[layout.pa] = [a.p_n / sb for a in case.aggregators]
    lb[layout.qa] = [a.q_c / sb for a in case.aggregators]
    ub[layout.qa] = [a.q_n / sb for a in case.aggregators]
    lb[layout.v] = [b.v_min for b in case.buses]
    ub[layout.v] = [b.v_max for b in case.buses]
    lb[layout.th] = -np.inf
    ub[layout.th] = np.inf

    adm = acnetwork.build_admittance(case)
    line_from = np.array([case.bus_index(ln.from_bus) for ln in case.lines], dtype=int)
    line_to = np.array([case.bus_index(ln.to_bus) for ln in case.lines], dtype=int)
    series = [acnetwork.series_admittance(ln) for ln in case.lines]
    line_g = np.array([s[0] for s in series])
    line_b = np.array([s[1] for s in series])

    return Problem(case, layout, lb, ub, adm, line_from, line_to, line_g, line_b)


def eval_objective_and_gradient(problem: Problem, x) -> tuple[float, np.ndarray]:
    x = np.asarray(x, dtype=float)
    return problem.objective(x), problem.objective_gradient(x)


def eval_constraints_and_jacobian(problem: Problem, x):
    """Equality residuals, inequality values, and both Jacobians."""
    x = np.asarray(x, dtype=float)
    return (problem.equalities(x), problem.inequalities(x),
            problem.equality_jacobian(x), problem.inequality_jacobian(x))


@dataclass(frozen=True)
class CurtailmentReport:
    per_aggregator: np.ndarray  # p_n - p, MW
    total: float                # sum(P_g) - sum(P_a), MW


def curtailment_report(case: CaseData, solution) -> CurtailmentReport:
    """Per-aggregator and total effective curtailment of a feasible solution."""
    if getattr(solution, "max_violation", 0.0) > 1e-5:
        raise ValueError("solution is not feasible enough for curtailment reporting")
    p_agg = np.asarray(solution.p_agg, dtype=float)
    p_gen = np.asarray(solution.p_gen, dtype=float)
    p_n = np.array([a.p_n for a in case.aggregators])
    return CurtailmentReport(p_n - p_agg, float(np.sum(p_gen) - np.sum(p_agg)))
