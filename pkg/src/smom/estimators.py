"""Point estimators built on the Stein estimating equations

    n^-1 sum_i A^w_theta f_{theta,j}(X_i) = 0,   j = 1..d.

For exponential families and parameter-free fields the equations are linear
in theta and solved in closed form; otherwise a damped Newton iteration is
used.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateData, NoConvergence, NotSPD, SingularSystem, SmomError
from .moments import (DEFAULT_MC_SIZE, are_estimate, estimate_moments, improved_fields,
                      improvement_coefficients)
from .stein import base_terms
from .vector_fields import VectorField, combine

COND_LIMIT = 1e12


@dataclass
class EstimateRecord:
    name: str
    theta: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def failed(self):
        return not np.all(np.isfinite(self.theta))

    @property
    def fallback(self):
        return bool(self.diagnostics.get("fallback", False))


def _data(model, data):
    x = np.asarray(data, float)
    if x.ndim == 1:
        x = x[:, None] if model.domain.ambient_dim == 1 else x[None, :]
    model.domain.check(x)
    return x


def expfam_system(model, fields, data):
    """Empirical ``(G_SMoM_n, rhs)`` of the closed-form SMoM solution.

    ``G[j, k] = mean w <f_j, grad_M t_k>`` and
    ``rhs[j] = mean div_M(w f_j) + w <f_j, grad_M b>``.
    """
    x = _data(model, data)
    fields = list(fields)
    if len(fields) != model.d:
        raise ValueError(f"need {model.d} fields, got {len(fields)}")
    mixed = model.mixed_score_fields(None)
    # at theta = 0 the score term reduces to <f, grad b>
    vals, stein = base_terms(model, np.zeros(model.d), fields + mixed, x, check=False)
    w = model.weight(x)
    d = model.d
    gmat = np.einsum("m,jmd,kmd->jk", w, vals[:d], vals[d:]) / len(x)
    rhs = stein[:d].mean(axis=1)
    return gmat, rhs


def smom_expfam(model, fields, data, name="smom"):
    """Closed-form SMoM estimate ``-G_SMoM_n^-1 rhs`` for an exponential family."""
    gmat, rhs = expfam_system(model, fields, data)
    cond = float(np.linalg.cond(gmat))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystem(f"empirical inner-product matrix has condition {cond:.3g}")
    theta = -np.linalg.solve(gmat, rhs)
    return EstimateRecord(name, theta, {"cond": cond, "fallback": False})


def score_matching(model, data, theta_init=None, name=None):
    """(Weighted) score matching: SMoM with the mixed-score fields."""
    if name is None:
        name = "wsm" if model.family == "ppi" else "sm"
    if model.is_expfam:
        return smom_expfam(model, model.mixed_score_fields(None), data, name=name)
    if theta_init is None:
        theta_init = model.default_theta
    return newton_smom(model, model.mixed_score_fields, data, theta_init, name=name)


# ---------------------------------------------------------------------------
# generalized normal closed forms

def _gn_x(data):
    x = np.asarray(data, float).ravel()
    if x.size == 0:
        raise DegenerateData("empty data")
    return x


def _checked_ratio(num, den):
    if abs(den) < 1e-300:
        raise DegenerateData("denominator vanishes")
    return num / den


def gn_mle(beta, data):
    x = _gn_x(data)
    theta = _checked_ratio(x.size, 2 * beta * np.sum(x ** (2 * beta)))
    return EstimateRecord("mle", np.array([theta]))


def gn_sm(beta, data):
    x = _gn_x(data)
    ratio = _checked_ratio(np.sum(x ** (2 * beta - 2)), np.sum(x ** (4 * beta - 2)))
    return EstimateRecord("sm", np.array([(2 * beta - 1) / (2 * beta) * ratio]))


def gn_smom(beta, f, data, fprime=None):
    """``sum f'(X) / (2 beta sum X^(2 beta - 1) f(X))``.

    ``f`` is either a field on the real line (its Jacobian gives ``f'``) or a
    scalar callable paired with ``fprime``.
    """
    x = _gn_x(data)
    if isinstance(f, VectorField):
        fx = f.eval(x[:, None])[:, 0]
        dfx = f.jacobian(x[:, None])[:, 0, 0]
    else:
        fx = np.asarray(f(x), float)
        dfx = np.asarray(fprime(x), float)
    theta = _checked_ratio(np.sum(dfx), 2 * beta * np.sum(x ** (2 * beta - 1) * fx))
    return EstimateRecord("smom", np.array([theta]))


# ---------------------------------------------------------------------------
# general estimating equations

def moment_map(model, fields_fn, data, theta):
    x = np.asarray(data, float)
    _, stein = base_terms(model, theta, list(fields_fn(theta)), x, check=False)
    return stein.mean(axis=1)


def newton_smom(model, fields_fn, data, theta_init, name="smom", tol=1e-10,
                max_iter=50, step=1e-5):
    """Damped Newton on ``m(theta) = mean A_theta f_theta,j``.

    The Jacobian in theta is a central finite difference; each Newton step is
    halved until ``|m|`` decreases.
    """
    x = _data(model, data)
    theta = np.array(theta_init, float)
    d = theta.size

    def resid(th):
        try:
            r = moment_map(model, fields_fn, x, th)
        except SmomError:
            return None
        return r if np.all(np.isfinite(r)) else None

    r = resid(theta)
    if r is None:
        raise NoConvergence("moment map undefined at the initial value")
    for it in range(max_iter + 1):
        if np.max(np.abs(r)) < tol:
            return EstimateRecord(name, theta, {"iterations": it, "fallback": False})
        if it == max_iter:
            break
        jac = np.empty((d, d))
        for k in range(d):
            e = np.zeros(d)
            e[k] = step * max(1.0, abs(theta[k]))
            rp, rm = resid(theta + e), resid(theta - e)
            if rp is None or rm is None:
                raise NoConvergence("moment map undefined near the iterate")
            jac[:, k] = (rp - rm) / (2 * e[k])
        try:
            delta = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("singular Jacobian") from exc
        t = 1.0
        norm0 = np.linalg.norm(r)
        while t > 1e-12:
            cand = theta + t * delta
            rc = resid(cand)
            if rc is not None and np.linalg.norm(rc) < norm0:
                theta, r = cand, rc
                break
            t *= 0.5
        else:
            if np.max(np.abs(r)) < 1e3 * tol:
                return EstimateRecord(name, theta, {"iterations": it, "fallback": False})
            raise NoConvergence("line search failed")
    raise NoConvergence(f"no convergence in {max_iter} iterations")


# ---------------------------------------------------------------------------
# improved estimator

def improved_estimator(model, data, theta0, raw_fields, M=DEFAULT_MC_SIZE, rng=None,
                       name=None, baseline=None):
    """SMoM estimate with W-orthogonalised, A-optimally combined test fields.

    ``theta0`` is either a parameter vector (oracle mode) or the string
    ``"plugin"`` meaning the score matching estimate of ``data``.  When the
    moment matrices are degenerate or the final system is singular the
    record falls back to score matching with ``diagnostics['fallback']``.
    """
    x = _data(model, data)
    if baseline is None:
        baseline = score_matching(model, x)
    if isinstance(theta0, str):
        if theta0 != "plugin":
            raise ValueError(f"unknown theta0 rule {theta0!r}")
        th0 = baseline.theta
        name = name or "smom_plugin"
    else:
        th0 = np.asarray(theta0, float)
        name = name or "smom_oracle"
    diag = {"theta0": th0, "K_requested": len(raw_fields)}
    try:
        mm, v_fields = estimate_moments(model, th0, raw_fields, M, rng)
        fields = improved_fields(model, th0, mm, v_fields)
        diag["K"] = mm.K
        diag["are"] = are_estimate(mm)
        if model.is_expfam:
            rec = smom_expfam(model, fields, x, name=name)
        else:
            coef = improvement_coefficients(mm)

            def fields_fn(theta):
                mixed = model.mixed_score_fields(theta)
                return [combine([mixed[j]] + list(v_fields), np.concatenate([[1.0], -coef[j]]))
                        for j in range(model.d)]

            rec = newton_smom(model, fields_fn, x, th0, name=name)
    except (NotSPD, SingularSystem, NoConvergence) as exc:
        diag.update(fallback=True, error=f"{type(exc).__name__}: {exc}", K=0)
        return EstimateRecord(name, baseline.theta.copy(), diag)
    rec.diagnostics.update(diag)
    rec.diagnostics.setdefault("fallback", False)
    if rec.failed:
        rec.diagnostics["fallback"] = True
        rec.theta = baseline.theta.copy()
    return rec
