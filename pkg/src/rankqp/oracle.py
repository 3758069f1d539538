"""Dense reference solver and KKT measurement harness.

The oracle follows the classical increasing-t log-barrier scheme with an
infeasible-start damped Newton inner loop (fraction-to-boundary step caps,
backtracking on the KKT residual norm).  It shares only the barrier
evaluations with the main solver, so agreement between the two is a
meaningful check.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import barrier, model
from .exceptions import SolverError, ValidationError

_DENSE_CAP = 2000


@dataclass
class KktReport:
    objective: float
    stationarity: float        # ||Qx + c - A'y - s||_2
    primal_residual_l1: float  # ||Ax - b||_1
    dual_domain: float         # max_i ||s_i/t + w_i grad phi_i||*_{x_i}, nan if t unknown
    duality_gap: float         # box complementarity bound on f(x) - OPT

    def all_finite(self):
        vals = [self.objective, self.stationarity, self.primal_residual_l1,
                self.duality_gap]
        return all(math.isfinite(v) for v in vals)


def kkt_residuals(inst: model.QPInstance, x, s, y, t=None) -> KktReport:
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float).reshape(inst.m)
    grad_f = inst.q_matvec(x) + inst.c
    stat = grad_f - (inst.A.T @ y if inst.m else 0.0) - s
    if t is not None:
        g = barrier.grad_vec(inst.lo, inst.hi, x)
        h = barrier.hess_vec(inst.lo, inst.hi, x)
        mu = s / t + inst.w * g
        dual_domain = float(np.max(np.abs(mu) / np.sqrt(h)))
    else:
        dual_domain = float("nan")
    s_pos = np.maximum(s, 0.0)
    s_neg = np.maximum(-s, 0.0)
    upper = np.where(np.isfinite(inst.hi), inst.hi - x, np.inf)
    gap_terms = s_pos * (x - inst.lo) + np.where(s_neg > 0, s_neg * upper, 0.0)
    return KktReport(objective=inst.objective(x),
                     stationarity=float(np.linalg.norm(stat)),
                     primal_residual_l1=inst.primal_residual_l1(x),
                     dual_domain=dual_domain,
                     duality_gap=float(gap_terms.sum()))


def _boundary_cap(inst, x, dx):
    """Largest multiple of dx keeping x strictly interior, damped to 99%."""
    step = 1.0
    lo_gap = x - inst.lo
    neg = dx < 0
    if neg.any():
        step = min(step, 0.99 * float(np.min(lo_gap[neg] / -dx[neg])))
    pos = dx > 0
    if pos.any():
        hi_gap = inst.hi - x
        finite_pos = pos & np.isfinite(inst.hi)
        if finite_pos.any():
            step = min(step, 0.99 * float(np.min(hi_gap[finite_pos] / dx[finite_pos])))
    return step


def _newton_stage(inst, x, nu, t_o, max_iter=80):
    """Infeasible-start damped Newton for min t_o f(x) + phi_w(x) s.t. Ax = b.

    Stops on a small Newton decrement (affine invariant) once primal
    feasibility is tight; tolerates a stall at decrement <= 1e-3, which only
    costs a (1 + decrement) factor in the certified gap.
    """
    n, m = inst.n, inst.m
    Q = inst.q_dense()
    b_scale = 1.0 + (float(np.linalg.norm(inst.b)) if m else 0.0)
    decrement = math.inf
    for _ in range(max_iter):
        g = barrier.grad_vec(inst.lo, inst.hi, x)
        h = barrier.hess_vec(inst.lo, inst.hi, x)
        grad = t_o * (inst.q_matvec(x) + inst.c) + inst.w * g
        r_dual = grad + (inst.A.T @ nu if m else 0.0)
        r_pri = inst.A @ x - inst.b if m else np.zeros(0)
        res = math.hypot(float(np.linalg.norm(r_dual)), float(np.linalg.norm(r_pri)))
        Hmat = t_o * Q + np.diag(inst.w * h)
        # Barrier endgames make these systems structurally ill conditioned;
        # the damped steps remain productive, so the warning is noise here.
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            if m:
                K = np.zeros((n + m, n + m))
                K[:n, :n] = Hmat
                K[:n, n:] = inst.A.T
                K[n:, :n] = inst.A
                rhs = -np.concatenate([r_dual, r_pri])
                try:
                    sol = scipy.linalg.solve(K, rhs)
                except (scipy.linalg.LinAlgError, np.linalg.LinAlgError):
                    sol = scipy.linalg.lstsq(K, rhs)[0]
                dx, dnu = sol[:n], sol[n:]
            else:
                try:
                    dx = scipy.linalg.solve(Hmat, -r_dual, assume_a="pos")
                except (scipy.linalg.LinAlgError, np.linalg.LinAlgError):
                    dx = scipy.linalg.lstsq(Hmat, -r_dual)[0]
                dnu = np.zeros(0)
        decrement = math.sqrt(max(float(dx @ (Hmat @ dx)), 0.0))
        feasible = float(np.linalg.norm(r_pri)) <= 1e-10 * b_scale
        if feasible and decrement <= 1e-7:
            return x, nu, decrement
        step = _boundary_cap(inst, x, dx)
        improved = False
        for _ in range(60):
            x_new = x + step * dx
            nu_new = nu + step * dnu
            g_new = barrier.grad_vec(inst.lo, inst.hi, x_new)
            grad_new = t_o * (inst.q_matvec(x_new) + inst.c) + inst.w * g_new
            rd_new = grad_new + (inst.A.T @ nu_new if m else 0.0)
            rp_new = inst.A @ x_new - inst.b if m else np.zeros(0)
            res_new = math.hypot(float(np.linalg.norm(rd_new)),
                                 float(np.linalg.norm(rp_new)))
            if res_new <= (1.0 - 0.25 * step) * res or res_new < res * (1 - 1e-12):
                improved = True
                break
            step *= 0.5
            if step < 1e-14:
                break
        if not improved:
            # float64 floor near the boundary; a sub-0.25 decrement only
            # inflates the certified gap by a (1 + decrement) factor
            if feasible and decrement <= 0.25:
                return x, nu, decrement
            raise SolverError("oracle line search stalled")
        x, nu = x_new, nu_new
    if decrement <= 0.25:
        return x, nu, decrement
    raise SolverError("oracle Newton did not converge within the iteration cap")


def dense_solve_qp(inst: model.QPInstance, tol=1e-9):
    """High-accuracy reference solution; returns (x, s, y, KktReport).

    Follows the increasing-t barrier path until the certified gap
    kappa / t_o drops below tol (absolute, in objective units).
    """
    if inst.n > _DENSE_CAP:
        raise ValidationError(f"oracle cap is n <= {_DENSE_CAP}, got {inst.n}")
    kappa = inst.kappa
    x = model.analytic_center_point(inst)
    nu = np.zeros(inst.m)
    if inst.m:
        # Feasibility projection: interiority is restored by the Newton
        # phase if the projection lands too close to a wall.
        AAt = inst.A @ inst.A.T
        try:
            corr = inst.A.T @ scipy.linalg.solve(AAt, inst.b - inst.A @ x, assume_a="pos")
            x_proj = x + corr
            barrier.check_interior(inst.lo, inst.hi, x_proj, margin=0.0)
            x = x_proj
        except Exception:
            pass
    t_o = max(1.0, kappa / max(abs(inst.objective(x)), 1.0))
    for _ in range(200):
        x, nu, _ = _newton_stage(inst, x, nu, t_o)
        if kappa / t_o <= tol:
            break
        t_o *= 10.0
    else:
        raise SolverError("oracle barrier path did not reach the gap target")
    g = barrier.grad_vec(inst.lo, inst.hi, x)
    s = -(inst.w * g) / t_o
    y = -nu / t_o
    return x, s, y, kkt_residuals(inst, x, s, y, t=1.0 / t_o)
