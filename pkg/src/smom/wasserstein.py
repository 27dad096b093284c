"""Closed-form Wasserstein score functions and efficiency diagnostics.

A Wasserstein score ``Phi_j`` solves ``A(grad Phi_j) = -d/dtheta_j log q``
with ``E[Phi_j] = 0``; its gradient field is the test function of the MLE.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import InvalidShape, MissingFisherScore
from .numerics import as_generator, spd_inverse
from .samplers import sample
from .stein import apply_stein, base_terms
from .vector_fields import AnalyticField, combine


@dataclass(frozen=True)
class WScore:
    """``phi(x)`` returns ``(m, d)`` values and ``grad(x)`` ``(m, d, D)``."""

    family: str
    domain: object
    d: int
    phi: object
    grad: object
    hess: object

    def fields(self):
        return [AnalyticField(self.domain,
                              (lambda x, j=j: self.grad(x)[:, j]),
                              (lambda x, j=j: self.hess(x)[:, j]),
                              tag=f"grad_phi[{j}]")
                for j in range(self.d)]

    def field(self, j):
        return self.fields()[j]


def _model_check(model, fam):
    if model.family != fam:
        raise InvalidShape(f"expected a {fam} model, got {model.family}")


def wscore_normal(model, theta) -> WScore:
    """``Phi_mu_j = x_j - mu_j`` and
    ``Phi_Sigma_jk = -tr(S_jk Sigma)/2 + (x-mu)^T S_jk (x-mu)/2``."""
    _model_check(model, "normal")
    mu, sigma = model.unpack(theta)
    s_mats = model.sylvester_mats(theta)
    p = model.p
    consts = np.array([0.5 * np.trace(s @ sigma) for s in s_mats])
    s_stack = np.array(s_mats)

    def phi(x):
        r = x - mu
        quad = 0.5 * np.einsum("mi,sij,mj->ms", r, s_stack, r) - consts
        return np.concatenate([r, quad], axis=1)

    def grad(x):
        r = x - mu
        eye = np.broadcast_to(np.eye(p), (len(x), p, p))
        return np.concatenate([eye, np.einsum("sij,mj->msi", s_stack, r)], axis=1)

    def hess(x):
        h = np.zeros((len(x), model.d, p, p))
        h[:, p:] = s_stack
        return h

    return WScore("normal", model.domain, model.d, phi, grad, hess)


def wscore_gn(beta, theta) -> WScore:
    """``Phi = -x^2/(4 b th) + Gamma(3/(2b)) / (4 b th^(1+1/b) Gamma(1/(2b)))``."""
    from .domains import Euclidean

    th = float(np.asarray(theta, float).ravel()[0])
    if not th > 0 or beta < 1:
        raise InvalidShape("need theta > 0 and beta >= 1")
    const = np.exp(gammaln(3 / (2 * beta)) - gammaln(1 / (2 * beta))) / (4 * beta * th ** (1 + 1 / beta))
    return WScore(
        "gnormal", Euclidean(1), 1,
        lambda x: -x ** 2 / (4 * beta * th) + const,
        lambda x: (-x / (2 * beta * th))[:, None, :],
        lambda x: np.full((len(x), 1, 1, 1), -1.0 / (2 * beta * th)),
    )


def wscore_gg(beta, theta) -> WScore:
    """``Phi = -x^2/(4 th) + (2b+1)/(8 th^2)``."""
    from .domains import Euclidean

    th = float(np.asarray(theta, float).ravel()[0])
    if not th > 0 or beta < 1:
        raise InvalidShape("need theta > 0 and beta >= 1")
    const = (2 * beta + 1) / (8 * th ** 2)
    return WScore(
        "ggamma", Euclidean(1), 1,
        lambda x: -x ** 2 / (4 * th) + const,
        lambda x: (-x / (2 * th))[:, None, :],
        lambda x: np.full((len(x), 1, 1, 1), -1.0 / (2 * th)),
    )


def wscore_for(model, theta) -> WScore:
    fam = model.family
    if fam == "normal":
        return wscore_normal(model, theta)
    if fam == "gnormal":
        return wscore_gn(model.beta, theta)
    if fam == "ggamma":
        return wscore_gg(model.beta, theta)
    raise MissingFisherScore(f"no closed-form Wasserstein score for {fam}")


def pde_residual(model, theta, wscore: WScore, j, x):
    """``A_theta(grad Phi_j)(x) + d/dtheta_j log q_theta(x)``; zero for a true score."""
    if not model.has_fisher:
        raise MissingFisherScore(model.family)
    value = apply_stein(model, theta, wscore.field(j), x).value
    return value + model.fisher_score(theta, j, x)


def are_closed_form(beta):
    """AVar[MLE] / AVar[SM] for the generalized normal scale parameter."""
    beta = float(beta)
    if beta < 1:
        raise InvalidShape("beta must be >= 1")
    a = 1.0 / (2 * beta)
    lead = (2 * beta - 1) / (2 * (3 * beta - 2))
    return float(lead * np.exp(2 * gammaln(1 - a) - gammaln(1 + a) - gammaln(2 - 3 * a)))


def fisher_matrix(model, theta, x):
    return np.stack([model.fisher_score(theta, j, x) for j in range(model.d)], axis=1)


def efficiency_span_test(model, theta, wscore: WScore, M, rng):
    """Regress Fisher scores on Wasserstein scores without intercept.

    Returns ``(residual, Lambda)`` where ``residual`` is the largest relative
    residual norm over parameters and ``fisher ~ Phi @ Lambda.T``.
    """
    if not model.has_fisher:
        raise MissingFisherScore(model.family)
    x = sample(model, theta, M, rng)
    y = fisher_matrix(model, theta, x)
    phi = wscore.phi(x)
    coef, *_ = np.linalg.lstsq(phi, y, rcond=None)
    resid = y - phi @ coef
    rel = np.linalg.norm(resid, axis=0) / np.linalg.norm(y, axis=0)
    return float(np.max(rel)), coef.T


@dataclass(frozen=True)
class GapResult:
    gap: np.ndarray
    avar_sm: np.ndarray
    F: np.ndarray
    G: np.ndarray
    fisher_info: np.ndarray
    stein_u: np.ndarray          # (d, M) Stein images of u*_j
    stein_m: np.ndarray          # (d, M) Stein images of the mixed score fields

    @property
    def ratio(self):
        """Elementwise diagonal ``gap / AVar[SM]``, i.e. ``1 - ARE``."""
        return np.diag(self.gap) / np.diag(self.avar_sm)


def mle_sm_gap(model, theta, wscore: WScore, M, rng, details=False):
    """``AVar[SM] - AVar[MLE] = G^-1 E[(A u*)(A u*)^T] G^-1`` by Monte Carlo,
    with ``u*_j = sum_k (G F^-1)[j, k] grad Phi_k - m_j``."""
    gen = as_generator(rng)
    x = sample(model, theta, M, gen)
    mixed = model.mixed_score_fields(theta)
    grads = wscore.fields()
    d = model.d
    vals, stein = base_terms(model, theta, mixed + grads, x)
    w = model.weight(x)
    mv, gv = vals[:d], vals[d:]
    G = np.einsum("m,jmd,kmd->jk", w, mv, mv) / M
    G = 0.5 * (G + G.T)
    F = np.einsum("m,jmd,kmd->jk", w, gv, mv) / M
    coef = np.linalg.solve(F.T, G.T).T             # G F^-1
    au = coef @ stein[d:] - stein[:d]
    ginv = spd_inverse(G)
    gap = ginv @ (au @ au.T / M) @ ginv
    if not details:
        return gap
    am = stein[:d]
    U = am @ am.T / M
    fy = fisher_matrix(model, theta, x) if model.has_fisher else None
    info = fy.T @ fy / M if fy is not None else None
    return GapResult(gap, ginv @ U @ ginv, F, G, info, au, am)


def u_fields(model, theta, wscore, G, F):
    """The W-orthogonal residual fields ``u*_j`` as combined fields."""
    coef = np.linalg.solve(F.T, G.T).T
    mixed = model.mixed_score_fields(theta)
    grads = wscore.fields()
    return [combine(grads + [mixed[j]], np.concatenate([coef[j], [-1.0]]))
            for j in range(model.d)]


__all__ = [
    "WScore", "wscore_normal", "wscore_gn", "wscore_gg", "wscore_for", "pde_residual",
    "are_closed_form", "efficiency_span_test", "mle_sm_gap", "GapResult", "u_fields",
    "fisher_matrix",
]
