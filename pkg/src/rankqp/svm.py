"""SVM training by reduction to the generic QP form.

Every variant becomes  min 1/2 a'Qa + p'a  over a box with one or two
equality rows; maximization forms are negated in and the reported dual
objective negated back out.  Classification objectives carry
Q = (yy') o K through label-scaled kernel factors, regression variants
stack to dimension 2n with factors [U; -U], [V; -V].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import barrier, ipm, kernel, model
from .exceptions import ValidationError

VARIANTS = ("hard", "c-svc", "nu-svc", "one-class", "eps-svr", "nu-svr")
_CLASSIFICATION = ("hard", "c-svc", "nu-svc")
_SUPPORT_REL = 1e-5
_INTERIOR_BAND_REL = 1e-6


@dataclass(frozen=True)
class SvmSpec:
    X: np.ndarray
    y: np.ndarray = None          # +-1 labels, real targets for regression, None for one-class
    variant: str = "c-svc"
    kernel: str = "linear"        # "linear" or "gaussian"
    C: float = 1.0
    nu: float = 0.5
    eps_tube: float = 0.1
    box_cap: float = None         # hard-margin cap on alpha; default 10 n

    def __post_init__(self):
        object.__setattr__(self, "X", np.atleast_2d(np.asarray(self.X, dtype=float)))
        if self.y is not None:
            object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.kernel not in ("linear", "gaussian"):
            raise ValidationError(f"unknown kernel {self.kernel!r}")
        n = self.X.shape[0]
        if self.variant == "one-class":
            if self.y is not None:
                raise ValidationError("one-class takes no labels")
        else:
            if self.y is None:
                raise ValidationError(f"variant {self.variant} needs labels")
            if self.y.shape != (n,):
                raise ValidationError("labels must be one per row of X")
        if self.variant in _CLASSIFICATION and not np.all(np.abs(self.y) == 1.0):
            raise ValidationError("classification labels must be +1 or -1")
        if self.variant in ("c-svc", "eps-svr", "nu-svr") and not self.C > 0:
            raise ValidationError("C must be positive")
        if self.variant in ("nu-svc", "one-class", "nu-svr"):
            if not 0 < self.nu <= 1:
                raise ValidationError("nu must lie in (0, 1]")
        if self.variant == "nu-svc":
            kplus = int(np.sum(self.y > 0))
            kminus = n - kplus
            bound = 2.0 * min(kplus, kminus) / n
            if self.nu > bound + 1e-12:
                raise ValidationError(
                    f"nu-SVC infeasible: nu={self.nu} exceeds 2*min(k-,k+)/n={bound:.6g}")
        if self.variant == "eps-svr" and not self.eps_tube >= 0:
            raise ValidationError("eps_tube must be nonnegative")


def _kernel_factors(spec: SvmSpec, eps_factor):
    if spec.kernel == "linear":
        X = spec.X
        return X.copy(), X.copy(), None
    fact = kernel.gaussian_lowrank_factor(spec.X, eps_factor)
    return fact.U, fact.V, fact


@dataclass
class ReducedQP:
    instance: model.QPInstance
    maximization: bool
    factorization: object = None   # KernelFactorization or None for linear
    dim: int = 0


def reduce_to_qp(spec: SvmSpec, eps_factor=1e-6) -> ReducedQP:
    """Transcribe the variant into the solver's minimization form."""
    n = spec.X.shape[0]
    U, V, fact = _kernel_factors(spec, eps_factor)
    ones = np.ones(n)
    trace_bound = float(np.sum(U * V))  # trace(UV'); equals trace(K) up to eps

    if spec.variant in _CLASSIFICATION:
        U, V = kernel.scale_by_labels(U, V, spec.y)

    if spec.variant in ("hard", "c-svc"):
        cap = spec.C if spec.variant == "c-svc" else (spec.box_cap or 10.0 * n)
        p = -ones
        A = spec.y[None, :]
        b = np.zeros(1)
        boxes = [barrier.BlockDomain.nonneg_box(cap)] * n
        maximization = True
    elif spec.variant == "nu-svc":
        p = np.zeros(n)
        A = np.vstack([spec.y, ones])
        b = np.array([0.0, spec.nu])
        boxes = [barrier.BlockDomain.nonneg_box(1.0 / n)] * n
        maximization = False
    elif spec.variant == "one-class":
        p = np.zeros(n)
        A = ones[None, :]
        b = np.array([spec.nu])
        boxes = [barrier.BlockDomain.nonneg_box(1.0 / n)] * n
        maximization = False
    elif spec.variant == "eps-svr":
        U = np.vstack([U, -U])
        V = np.vstack([V, -V])
        p = np.concatenate([spec.eps_tube * ones + spec.y,
                            spec.eps_tube * ones - spec.y])
        A = np.concatenate([ones, -ones])[None, :]
        b = np.zeros(1)
        boxes = [barrier.BlockDomain.nonneg_box(spec.C)] * (2 * n)
        maximization = False
        trace_bound *= 2.0
    else:  # nu-svr
        U = np.vstack([U, -U])
        V = np.vstack([V, -V])
        p = np.concatenate([spec.y, -spec.y])
        A = np.vstack([np.concatenate([ones, -ones]),
                       np.concatenate([ones, ones])])
        b = np.array([0.0, spec.C * spec.nu])
        boxes = [barrier.BlockDomain.nonneg_box(spec.C / n)] * (2 * n)
        maximization = False
        trace_bound *= 2.0

    caps = np.array([d.hi for d in boxes])
    R = float(np.linalg.norm(caps))
    r = float(caps.min()) / 4.0
    L = max(float(np.linalg.norm(p)), abs(trace_bound) * 1.05, 1.0)
    inst = model.build_qp_instance(p, A, b, boxes, R=R, r=r, L=L, U=U, V=V)
    return ReducedQP(instance=inst, maximization=maximization,
                     factorization=fact, dim=inst.n)


@dataclass
class SvmModel:
    spec: SvmSpec
    alpha: np.ndarray
    bias: float
    support: np.ndarray            # indices of training points with active alpha
    w: np.ndarray = None           # primal normal vector, linear kernel only
    factorization: object = None
    dual_objective: float = 0.0
    solve_report: dict = field(default_factory=dict)

    # coefficient on K(x_j, .) in the decision function
    def _coef(self):
        n = self.spec.X.shape[0]
        if self.spec.variant in _CLASSIFICATION:
            return self.alpha * self.spec.y
        if self.spec.variant == "one-class":
            return self.alpha
        return -(self.alpha[:n] - self.alpha[n:])


def _kernel_cross(spec, fact, Xq, exact=False):
    """K(train, query): exact for linear, through the factors for gaussian
    unless exact is forced or no factorization is available."""
    Xq = np.atleast_2d(Xq)
    if spec.kernel == "linear":
        return spec.X @ Xq.T
    if exact or fact is None:
        d2 = (np.sum(spec.X**2, axis=1)[:, None] + np.sum(Xq**2, axis=1)[None, :]
              - 2.0 * spec.X @ Xq.T)
        return np.exp(-np.maximum(d2, 0.0))
    feat = kernel.feature_map(fact, Xq, side="v")
    return fact.U @ feat.T


def _band_average(values, alpha, cap):
    """Average over the interior band [tau, cap - tau] weighted by how far
    each coordinate sits from its bounds, so near-active coordinates (which
    an interior point method never places exactly on a face) barely count."""
    tau = _INTERIOR_BAND_REL * cap
    interior = (alpha > tau) & (alpha < cap - tau)
    if not interior.any():
        raise ValidationError("degenerate model: no interior support vectors")
    weight = np.minimum(alpha[interior], cap - alpha[interior])
    return float(np.average(values[interior], weights=weight))


def recover_primal(alpha, spec: SvmSpec, fact=None, exact_kernel=False):
    """Primal weight vector (linear kernel) and bias from interior supports."""
    n = spec.X.shape[0]
    alpha = np.asarray(alpha, dtype=float)
    if spec.variant in _CLASSIFICATION:
        coef = alpha * spec.y
        w = spec.X.T @ coef if spec.kernel == "linear" else None
        if spec.variant == "hard":
            # No meaningful upper cap: every markedly positive alpha sits on
            # the margin.
            interior = alpha > _SUPPORT_REL * float(np.max(alpha, initial=0.0))
            if not interior.any():
                raise ValidationError("degenerate model: no interior support vectors")
            f_nb = coef @ _kernel_cross(spec, fact, spec.X[interior], exact=exact_kernel)
            return w, float(np.mean(f_nb - spec.y[interior]))
        cap = spec.C if spec.variant == "c-svc" else 1.0 / n
        f_nb = coef @ _kernel_cross(spec, fact, spec.X, exact=exact_kernel)
        return w, _band_average(f_nb - spec.y, alpha, cap)
    if spec.variant == "one-class":
        f_nb = alpha @ _kernel_cross(spec, fact, spec.X, exact=exact_kernel)
        rho = _band_average(f_nb, alpha, 1.0 / n)
        w = spec.X.T @ alpha if spec.kernel == "linear" else None
        return w, rho
    # Regression: f(x) = -sum_j beta_j K(x_j, x) + b with beta = alpha - alpha*.
    # Interior alpha_i sits on f = y + eps_tube, interior alpha*_i on f = y - eps_tube.
    cap = spec.C if spec.variant == "eps-svr" else spec.C / n
    beta = alpha[:n] - alpha[n:]
    eps_t = spec.eps_tube if spec.variant == "eps-svr" else 0.0
    kb = beta @ _kernel_cross(spec, fact, spec.X, exact=exact_kernel)
    stacked = np.concatenate([spec.y + eps_t + kb, spec.y - eps_t + kb])
    b = _band_average(stacked, alpha, cap)
    w = -(spec.X.T @ beta) if spec.kernel == "linear" else None
    return w, b


def train(spec: SvmSpec, eps_solve=1e-4, mode="practical", backend="auto", seed=0):
    """Train to additive dual-objective error eps_solve against the exact
    optimum of the reduced program (Gaussian kernels add the certified
    entrywise kernel error on top)."""
    n = spec.X.shape[0]
    if spec.kernel == "gaussian":
        R_est = _outer_radius_estimate(spec)
        eps1 = min(max(eps_solve / (max(n, 2) * R_est**2), 1e-12), 1e-3)
    else:
        eps1 = None
    red = reduce_to_qp(spec, eps_factor=eps1)
    inst = red.instance
    eps_qp = min(0.5, eps_solve / (inst.L * inst.R * (inst.R + 1.0)))
    sol = ipm.solve(inst, eps_qp, mode=mode, backend=backend, seed=seed)
    alpha = sol.x
    dual_obj = inst.objective(alpha)
    if red.maximization:
        dual_obj = -dual_obj
    w, b_avg = recover_primal(alpha, spec, fact=red.factorization)
    # The equality-row multiplier recovers the bias at solver precision;
    # the interior average is the fallback when no row is present.
    b = -float(sol.y[0]) if inst.m else b_avg
    support = np.nonzero(alpha > _SUPPORT_REL * float(np.max(alpha, initial=1.0)))[0]
    from . import oracle
    kkt = oracle.kkt_residuals(inst, alpha, sol.s, sol.y)
    report = dict(sol.report)
    report.update({"dual_objective": dual_obj, "variant": spec.variant,
                   "kernel": spec.kernel, "eps_solve": eps_solve,
                   "kernel_eps": eps1,
                   "equality_residual_l1": inst.primal_residual_l1(alpha),
                   "kkt": {"stationarity": kkt.stationarity,
                           "primal_residual_l1": kkt.primal_residual_l1,
                           "duality_gap": kkt.duality_gap}})
    return SvmModel(spec=spec, alpha=alpha, bias=b, support=support, w=w,
                    factorization=red.factorization, dual_objective=dual_obj,
                    solve_report=report)


def _outer_radius_estimate(spec):
    n = spec.X.shape[0]
    if spec.variant in ("hard",):
        cap = spec.box_cap or 10.0 * n
    elif spec.variant in ("c-svc", "eps-svr"):
        cap = spec.C
    elif spec.variant == "nu-svr":
        cap = spec.C / n
    else:
        cap = 1.0 / n
    dim = 2 * n if spec.variant in ("eps-svr", "nu-svr") else n
    return cap * math.sqrt(dim)


def predict(mdl: SvmModel, Xq, exact_kernel=False):
    """Decision values and labels for query points.

    Classification and one-class return sign labels; regression returns the
    fitted values as labels.  Gaussian decisions go through the low-rank
    factors unless exact_kernel is set.
    """
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[1] != mdl.spec.X.shape[1]:
        raise ValidationError(
            f"query dimension {Xq.shape[1]} != training dimension {mdl.spec.X.shape[1]}")
    coef = mdl._coef()
    f_nb = coef @ _kernel_cross(mdl.spec, mdl.factorization, Xq, exact=exact_kernel)
    if mdl.spec.variant in _CLASSIFICATION or mdl.spec.variant == "one-class":
        dec = f_nb - mdl.bias
        return dec, np.sign(dec)
    dec = f_nb + mdl.bias
    return dec, dec
