"""The weighted divergence-based Stein operator

    A^w_theta f = div_M(w q f) / q = w div_M f + <grad w, f> + w <f, grad_M log q~>

which needs only x-derivatives of the unnormalised log density.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domains import BASIS_TOL, Domain
from .errors import DegenerateBasis, DomainMismatch

FD_STEP = 1e-5


@dataclass(frozen=True)
class SteinEval:
    """Stein operator value split into the divergence part ``div(w f)`` and
    the score part ``w <f, grad log q~>``.  Arrays for batched input."""

    divergence: np.ndarray
    score: np.ndarray

    @property
    def value(self):
        return self.divergence + self.score


def _batch(x):
    x = np.asarray(x, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def tangent_bases(domain: Domain, x):
    """Batched version of :func:`domains.tangent_basis`: ``(m, dim, D)``."""
    m, dim_amb = x.shape
    dim = domain.intrinsic_dim
    basis = np.zeros((m, dim, dim_amb))
    count = np.zeros(m, dtype=int)
    eye = np.eye(dim_amb)
    rows = np.arange(m)
    for c in range(dim_amb):
        r = domain.project(x, np.broadcast_to(eye[c], (m, dim_amb)))
        for _ in range(2):
            r = r - np.einsum("mk,mkd->md", np.einsum("mkd,md->mk", basis, r), basis)
        nrm = np.linalg.norm(r, axis=1)
        take = (nrm >= BASIS_TOL) & (count < dim)
        idx = rows[take]
        basis[idx, count[take]] = r[take] / nrm[take, None]
        count[take] += 1
    if np.any(count < dim):
        raise DegenerateBasis("could not complete a tangent basis at some points")
    return basis


def manifold_divergence(domain: Domain, field, x, h=FD_STEP):
    """Divergence by central differences along retraction curves.

    Sums ``<(f(R(x, h e_a)) - f(R(x, -h e_a))) / 2h, e_a>`` over an
    orthonormal tangent basis.  On Euclidean domains the analytic Jacobian
    trace is used when available.
    """
    xb, single = _batch(x)
    if domain.is_euclidean and field.has_jacobian:
        out = np.trace(field.jacobian(xb), axis1=1, axis2=2)
        return out[0] if single else out
    basis = tangent_bases(domain, xb)
    out = np.zeros(xb.shape[0])
    for a in range(basis.shape[1]):
        e = basis[:, a]
        fp = field.eval(domain.retract(xb, e, h, check=False))
        fm = field.eval(domain.retract(xb, e, -h, check=False))
        out += np.sum((fp - fm) * e, axis=1) / (2 * h)
    return out[0] if single else out


def jacobian_divergence(domain: Domain, x, jac):
    """``tr(P_x J)``: divergence of a tangent field from its ambient Jacobian."""
    if domain.is_euclidean:
        return np.trace(jac, axis1=-2, axis2=-1)
    proj = domain.projection_matrix(x)
    return np.einsum("...ij,...ji->...", proj, jac)


def divergence(domain: Domain, field, x):
    """Analytic divergence when the field has a Jacobian, otherwise the
    finite-difference rule of :func:`manifold_divergence`."""
    xb, single = _batch(x)
    if field.has_jacobian:
        out = jacobian_divergence(domain, xb, field.jacobian(xb))
    else:
        out = manifold_divergence(domain, field, xb)
    return out[0] if single else out


def apply_stein(model, theta, field, x) -> SteinEval:
    if field.domain != model.domain:
        raise DomainMismatch("field and model live on different domains")
    xb, single = _batch(x)
    model.domain.check(xb)
    f = field.eval(xb)
    div = divergence(model.domain, field, xb)
    w = model.weight(xb)
    score = model.domain.project(xb, model.grad_x_log(theta, xb))
    div_term = w * div + np.sum(model.grad_weight(xb) * f, axis=1)
    score_term = w * np.sum(f * score, axis=1)
    if single:
        return SteinEval(div_term[0], score_term[0])
    return SteinEval(div_term, score_term)


def base_terms(model, theta, fields, x, check=True):
    """Values and Stein images of many fields sharing one evaluation pass.

    Distinct base fields (after flattening linear combinations) are evaluated
    once.  Returns ``(values, stein)`` with shapes ``(K, m, D)`` and
    ``(K, m)`` where ``stein = div(w f) + w <f, grad log q~>``.
    """
    xb, _ = _batch(x)
    if check:
        model.domain.check(xb)
    domain = model.domain
    index = {}
    bases = []
    rows = []
    for f in fields:
        if f.domain != domain:
            raise DomainMismatch("field and model live on different domains")
        row = {}
        for base, c in f.terms():
            key = id(base)
            if key not in index:
                index[key] = len(bases)
                bases.append(base)
            row[index[key]] = row.get(index[key], 0.0) + c
        rows.append(row)
    coeff = np.zeros((len(fields), len(bases)))
    for i, row in enumerate(rows):
        for j, c in row.items():
            coeff[i, j] = c

    proj = None if domain.is_euclidean else domain.projection_matrix(xb)
    w = model.weight(xb)
    grad_w = model.grad_weight(xb)
    score = domain.project(xb, model.grad_x_log(theta, xb))
    vals = np.empty((len(bases),) + xb.shape)
    stein = np.empty((len(bases), xb.shape[0]))
    for i, base in enumerate(bases):
        if base.has_jacobian:
            if hasattr(base, "eval_and_jacobian"):
                v, jac = base.eval_and_jacobian(xb)
            else:
                v, jac = base.eval(xb), base.jacobian(xb)
            if proj is None:
                div = np.trace(jac, axis1=1, axis2=2)
            else:
                div = np.einsum("mij,mji->m", proj, jac)
        else:
            v = base.eval(xb)
            div = manifold_divergence(domain, base, xb)
        vals[i] = v
        stein[i] = w * div + np.sum(grad_w * v, axis=1) + w * np.sum(v * score, axis=1)
    values = np.tensordot(coeff, vals, axes=1)
    return values, coeff @ stein
