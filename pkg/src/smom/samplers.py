"""Exact samplers for every model.

The one-dimensional families use gamma transforms.  PPI and matrix Bingham
use rejection from a tractable proposal with an *exact* acceptance bound, so
the output is exact in distribution.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import BoundViolation, InvalidShape
from .numerics import as_generator

BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class SamplerInfo:
    method: str
    bound: float = 0.0
    proposals: int = 0
    accepted: int = 0

    @property
    def accept_rate(self):
        return self.accepted / self.proposals if self.proposals else 1.0


def _theta_scalar(theta):
    th = float(np.asarray(theta, float).ravel()[0])
    if not th > 0:
        raise InvalidShape(f"scale parameter must be positive, got {th}")
    return th


def sample_gn(beta, theta, n, rng):
    """``|X|^(2 beta) ~ Gamma(1/(2 beta), rate theta)`` with a fair random sign."""
    th = _theta_scalar(theta)
    gen = as_generator(rng)
    u = gen.gamma(1.0 / (2 * beta), 1.0 / th, size=n)
    sign = np.where(gen.random(n) < 0.5, -1.0, 1.0)
    return (sign * u ** (1.0 / (2 * beta)))[:, None]


def sample_gg(beta, theta, n, rng):
    """``X^2 ~ Gamma(beta + 1/2, rate theta)`` with a fair random sign."""
    if beta < 1:
        raise InvalidShape("beta must be >= 1")
    th = _theta_scalar(theta)
    gen = as_generator(rng)
    u = gen.gamma(beta + 0.5, 1.0 / th, size=n)
    sign = np.where(gen.random(n) < 0.5, -1.0, 1.0)
    return (sign * np.sqrt(u))[:, None]


def sample_normal(mu, sigma, n, rng):
    gen = as_generator(rng)
    chol = np.linalg.cholesky(sigma)
    z = gen.standard_normal((n, len(mu)))
    return mu + z @ chol.T


def simplex_quadratic_max(a, mu):
    """Exact ``max y^T A y + mu^T y`` over the probability simplex.

    Enumerates every face and solves the KKT system on its relative
    interior; singular faces are covered by their lower-dimensional faces.
    """
    a = np.asarray(a, float)
    mu = np.asarray(mu, float)
    p = len(mu)
    best = -np.inf
    for size in range(1, p + 1):
        for face in itertools.combinations(range(p), size):
            idx = list(face)
            kkt = np.zeros((size + 1, size + 1))
            kkt[:size, :size] = 2 * a[np.ix_(idx, idx)]
            kkt[:size, size] = -1.0
            kkt[size, :size] = 1.0
            rhs = np.concatenate([-mu[idx], [1.0]])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            y_face = sol[:size]
            if np.any(y_face < -1e-12) or not np.all(np.isfinite(y_face)):
                continue
            y = np.zeros(p)
            y[idx] = np.clip(y_face, 0, None)
            y /= y.sum()
            best = max(best, float(y @ a @ y + mu @ y))
    return best


def ppi_log_tilt(a, mu, y):
    return np.einsum("mi,ij,mj->m", y, a, y) + y @ mu


def sample_ppi(model, theta, n, rng, return_info=False):
    """Rejection sampler for the PPI model.

    With ``y = x**2`` the target is ``Dirichlet(1 + beta)`` tilted by
    ``exp(y^T A y + mu^T y)``; proposals come from the Dirichlet (uniform on
    the orthant when ``beta = -1/2``) and the bound is the exact simplex
    maximum of the tilt.
    """
    a, mu = model.unpack(theta)
    gen = as_generator(rng)
    bound = simplex_quadratic_max(a, mu)
    alpha = 1.0 + model.beta
    out = []
    have = 0
    proposals = 0
    batch = max(64, 2 * n)
    while have < n:
        y = gen.dirichlet(alpha, size=batch)
        log_ratio = ppi_log_tilt(a, mu, y) - bound
        if np.any(log_ratio > BOUND_SLACK):
            raise BoundViolation(f"acceptance ratio exp({log_ratio.max():.3g}) > 1")
        keep = np.log(gen.random(batch)) < log_ratio
        proposals += batch
        x = np.sqrt(y[keep])
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        out.append(x)
        have += len(x)
        rate = max(have / proposals, 1e-3)
        batch = int(min(max(64, 1.2 * (n - have) / rate), 10**6))
    data = np.concatenate(out)[:n]
    if return_info:
        return data, SamplerInfo("rejection", bound, proposals, have)
    return data


def uniform_stiefel(p, k, n, rng):
    """Haar-distributed points on V_{k,p} (flattened), via QR with positive
    diagonal of the triangular factor."""
    gen = as_generator(rng)
    z = gen.standard_normal((n, p, k))
    q, r = np.linalg.qr(z)
    sign = np.sign(np.diagonal(r, axis1=1, axis2=2))
    sign[sign == 0] = 1.0
    q = q * sign[:, None, :]
    return q.reshape(n, p * k)


def bingham_bound(a, k):
    """Ky Fan maximum of ``tr(X^T A X)``: sum of the k largest eigenvalues."""
    return float(np.sum(np.linalg.eigvalsh(a)[-k:]))


def sample_bingham(model, theta, n, rng, return_info=False):
    a = model.unpack(theta)
    p, k = model.p, model.k
    gen = as_generator(rng)
    bound = bingham_bound(a, k)
    out = []
    have = 0
    proposals = 0
    batch = max(64, 2 * n)
    while have < n:
        x = uniform_stiefel(p, k, batch, gen)
        xm = x.reshape(batch, p, k)
        log_ratio = np.einsum("mik,ij,mjk->m", xm, a, xm) - bound
        if np.any(log_ratio > BOUND_SLACK * max(1.0, abs(bound))):
            raise BoundViolation(f"acceptance ratio exp({log_ratio.max():.3g}) > 1")
        keep = np.log(gen.random(batch)) < log_ratio
        proposals += batch
        out.append(x[keep])
        have += int(keep.sum())
        rate = max(have / proposals, 1e-3)
        batch = int(min(max(64, 1.2 * (n - have) / rate), 10**6))
    data = np.concatenate(out)[:n]
    if return_info:
        return data, SamplerInfo("rejection", bound, proposals, have)
    return data


def sample(model, theta, n, rng):
    """Draw ``n`` exact samples from ``q_theta`` for any supported model."""
    fam = model.family
    if fam == "gnormal":
        return sample_gn(model.beta, theta, n, rng)
    if fam == "ggamma":
        return sample_gg(model.beta, theta, n, rng)
    if fam == "normal":
        mu, sigma = model.unpack(theta)
        return sample_normal(mu, sigma, n, rng)
    if fam == "ppi":
        return sample_ppi(model, theta, n, rng)
    if fam == "bingham":
        return sample_bingham(model, theta, n, rng)
    raise NotImplementedError(f"no sampler for {fam!r}")
