"""Unnormalised statistical models.

A model is a parameter-free family: every method takes the parameter vector
``theta`` explicitly and evaluates on a batch of points ``x`` of shape
``(m, D)``.  Only x-derivatives of ``log q~`` are needed by the estimators,
so the normalising constant never appears except in the optional
``fisher_score`` of closed-form families.
"""
from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .domains import Euclidean, SphereOrthant, Stiefel
from .errors import InvalidShape, MissingFisherScore, NotSPD
from .numerics import spd_inverse, sym_index_pairs, sylvester_solve
from .vector_fields import AnalyticField


def _batch(x):
    x = np.asarray(x, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


class Model:
    family = "abstract"
    has_fisher = False

    def __init__(self, domain, param_names, default_theta=None):
        self.domain = domain
        self.param_names = list(param_names)
        self.d = len(self.param_names)
        self.default_theta = None if default_theta is None else np.asarray(default_theta, float)

    # -- density -----------------------------------------------------------
    def log_unnorm(self, theta, x):
        raise NotImplementedError

    def grad_x_log(self, theta, x):
        """Ambient gradient of ``log q~`` in x (equal to that of ``log q``)."""
        raise NotImplementedError

    def mixed_score_field(self, theta, j):
        """The field ``grad_x d/dtheta_j log q~`` (projected on manifolds)."""
        raise NotImplementedError

    def mixed_score_fields(self, theta):
        return [self.mixed_score_field(theta, j) for j in range(self.d)]

    def fisher_score(self, theta, j, x):
        raise MissingFisherScore(f"{self.family} has an intractable normalising constant")

    # -- weight ------------------------------------------------------------
    def weight(self, x):
        xb, single = _batch(x)
        w = np.ones(xb.shape[0])
        return w[0] if single else w

    def grad_weight(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    @property
    def is_expfam(self):
        return False

    def __repr__(self):
        return f"<{type(self).__name__} d={self.d} on {self.domain!r}>"


class ExpFamModel(Model):
    """``log q~ = t(x)^T theta + b(x)``.

    Subclasses supply ``t``, ``grad_t`` (``(m, d, D)``), ``hess_t``
    (``(m, d, D, D)``), ``b`` and ``grad_b`` on batches.
    """

    def __init__(self, domain, param_names, default_theta=None):
        super().__init__(domain, param_names, default_theta)
        self._fields = [
            AnalyticField(domain,
                          (lambda x, j=j: self.grad_t(x)[:, j]),
                          (lambda x, j=j: self.hess_t(x)[:, j]),
                          tag=f"grad_t[{self.param_names[j]}]", project=True)
            for j in range(self.d)
        ]

    @property
    def is_expfam(self):
        return True

    def t(self, x):
        raise NotImplementedError

    def grad_t(self, x):
        raise NotImplementedError

    def hess_t(self, x):
        raise NotImplementedError

    def b(self, x):
        return np.zeros(np.asarray(x).shape[0])

    def grad_b(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def log_unnorm(self, theta, x):
        xb, single = _batch(x)
        out = self.t(xb) @ np.asarray(theta, float) + self.b(xb)
        return out[0] if single else out

    def grad_x_log(self, theta, x):
        xb, single = _batch(x)
        out = np.einsum("mjd,j->md", self.grad_t(xb), np.asarray(theta, float)) + self.grad_b(xb)
        return out[0] if single else out

    def mixed_score_field(self, theta, j):
        # parameter independent: the same object is returned for every theta
        return self._fields[j]


# ---------------------------------------------------------------------------
# one-dimensional families

class GeneralizedNormal(ExpFamModel):
    """``q ~ exp(-theta x^(2 beta))`` on the real line."""

    family = "gnormal"
    has_fisher = True

    def __init__(self, beta):
        if int(beta) != beta or beta < 1:
            raise InvalidShape(f"beta must be a positive integer, got {beta}")
        self.beta = int(beta)
        super().__init__(Euclidean(1), ["theta"])

    def t(self, x):
        return -(x ** (2 * self.beta))

    def grad_t(self, x):
        b = self.beta
        return (-2 * b * x ** (2 * b - 1))[:, None, :]

    def hess_t(self, x):
        b = self.beta
        return (-2 * b * (2 * b - 1) * x ** (2 * b - 2))[:, None, :, None]

    def fisher_score(self, theta, j, x):
        xb, single = _batch(x)
        th = float(np.asarray(theta).ravel()[0])
        out = 1.0 / (2 * self.beta * th) - xb[:, 0] ** (2 * self.beta)
        return out[0] if single else out


class GeneralizedGamma(ExpFamModel):
    """``q ~ x^(2 beta) exp(-theta x^2)`` on the real line."""

    family = "ggamma"
    has_fisher = True

    def __init__(self, beta):
        if int(beta) != beta or beta < 1:
            raise InvalidShape(f"beta must be a positive integer, got {beta}")
        self.beta = int(beta)
        super().__init__(Euclidean(1), ["theta"])

    def t(self, x):
        return -(x ** 2)

    def grad_t(self, x):
        return (-2.0 * x)[:, None, :]

    def hess_t(self, x):
        return np.full((x.shape[0], 1, 1, 1), -2.0)

    def b(self, x):
        return 2 * self.beta * np.log(np.abs(x[:, 0]))

    def grad_b(self, x):
        return 2 * self.beta / x

    def fisher_score(self, theta, j, x):
        xb, single = _batch(x)
        th = float(np.asarray(theta).ravel()[0])
        out = -xb[:, 0] ** 2 + (2 * self.beta + 1) / (2 * th)
        return out[0] if single else out


def generalized_normal(beta) -> GeneralizedNormal:
    return GeneralizedNormal(beta)


def generalized_gamma(beta) -> GeneralizedGamma:
    return GeneralizedGamma(beta)


def gn_unit_variance_theta(beta):
    """Scale giving unit variance: ``(Gamma(3/(2b)) / Gamma(1/(2b)))**b``."""
    return float(np.exp(beta * (gammaln(3 / (2 * beta)) - gammaln(1 / (2 * beta)))))


def gn_reference_theta(beta):
    """``Gamma(3/(2b))**(2b) / Gamma(1/(2b))**(2b)``, the experiment's true value."""
    return float(np.exp(2 * beta * (gammaln(3 / (2 * beta)) - gammaln(1 / (2 * beta)))))


# ---------------------------------------------------------------------------
# multivariate normal in (mu, vech Sigma) coordinates

class MultivariateNormal(Model):
    family = "normal"
    has_fisher = True

    def __init__(self, p, default_theta=None):
        self.p = int(p)
        self.pairs = sym_index_pairs(self.p)
        names = [f"mu{j + 1}" for j in range(self.p)]
        names += [f"Sigma{j + 1}{k + 1}" for j, k in self.pairs]
        super().__init__(Euclidean(self.p), names, default_theta)
        self._cache_key = None
        self._cache = None

    def pack(self, mu, sigma):
        sigma = np.asarray(sigma, float)
        return np.concatenate([np.asarray(mu, float).ravel(),
                               [sigma[j, k] for j, k in self.pairs]])

    def unpack(self, theta):
        theta = np.asarray(theta, float)
        mu = theta[: self.p]
        sigma = np.zeros((self.p, self.p))
        for v, (j, k) in zip(theta[self.p:], self.pairs):
            sigma[j, k] = sigma[k, j] = v
        return mu, sigma

    def _parts(self, theta):
        key = tuple(np.asarray(theta, float).ravel())
        if key != self._cache_key:
            mu, sigma = self.unpack(theta)
            prec = spd_inverse(sigma)
            s_mats = []
            for j, k in self.pairs:
                rhs = np.zeros((self.p, self.p))
                rhs[j, k] += 1.0
                if j != k:
                    rhs[k, j] += 1.0
                s_mats.append(sylvester_solve(sigma, rhs))
            self._cache = (mu, sigma, prec, s_mats)
            self._cache_key = key
        return self._cache

    def sylvester_mats(self, theta):
        return self._parts(theta)[3]

    def log_unnorm(self, theta, x):
        xb, single = _batch(x)
        mu, _, prec, _ = self._parts(theta)
        r = xb - mu
        out = -0.5 * np.einsum("mi,ij,mj->m", r, prec, r)
        return out[0] if single else out

    def grad_x_log(self, theta, x):
        xb, single = _batch(x)
        mu, _, prec, _ = self._parts(theta)
        out = -(xb - mu) @ prec
        return out[0] if single else out

    def mixed_score_field(self, theta, j):
        mu, _, prec, s_mats = self._parts(theta)
        p = self.p
        if j < p:
            row = prec[j].copy()
            return AnalyticField(self.domain, lambda x: np.broadcast_to(row, x.shape).copy(),
                                 lambda x: np.zeros(x.shape + (p,)), tag=self.param_names[j])
        s = s_mats[j - p]
        mat = s @ prec + prec @ s
        return AnalyticField(self.domain, lambda x: (x - mu) @ mat.T,
                             lambda x: np.broadcast_to(mat, x.shape + (p,)).copy(),
                             tag=self.param_names[j])

    def fisher_score(self, theta, j, x):
        xb, single = _batch(x)
        mu, _, prec, s_mats = self._parts(theta)
        r = xb - mu
        if j < self.p:
            out = r @ prec[j]
        else:
            s = s_mats[j - self.p]
            mat = s @ prec + prec @ s
            out = -np.trace(s) + 0.5 * np.einsum("mi,ij,mj->m", r, mat, r)
        return out[0] if single else out


def multivariate_normal(mu, sigma) -> MultivariateNormal:
    mu = np.asarray(mu, float).ravel()
    sigma = np.asarray(sigma, float)
    if sigma.shape != (mu.size, mu.size):
        raise InvalidShape("sigma must be p x p")
    if np.linalg.eigvalsh(0.5 * (sigma + sigma.T))[0] <= 0:
        raise NotSPD("sigma is not positive definite")
    model = MultivariateNormal(mu.size)
    model.default_theta = model.pack(mu, sigma)
    return model


# ---------------------------------------------------------------------------
# polynomially tilted pairwise interaction model on the sphere orthant

class PPI(ExpFamModel):
    """``q~ = prod x_j^(1+2 beta_j) exp(x2^T A x2 + mu^T x2)`` with ``x2 = x**2``.

    The last row/column of ``A`` and the last entry of ``mu`` are fixed at 0.
    Parameters: free entries of the leading (p-1) block of ``A`` (diagonal
    first, then off-diagonal), then ``mu_1..mu_{p-1}``.  The weight is
    ``w(x) = prod x_j``.
    """

    family = "ppi"

    def __init__(self, beta, p=None):
        beta = np.asarray(beta, float).ravel()
        if p is None:
            p = beta.size
        if p < 2 or beta.size != p:
            raise InvalidShape("need p >= 2 and one beta per coordinate")
        if np.any(beta <= -1):
            raise InvalidShape("beta entries must exceed -1")
        self.beta = beta
        self.p = int(p)
        self.a_pairs = sym_index_pairs(self.p - 1)
        names = [f"A{j + 1}{k + 1}" for j, k in self.a_pairs]
        names += [f"mu{j + 1}" for j in range(self.p - 1)]
        super().__init__(SphereOrthant(self.p), names)

    def pack(self, a, mu):
        a = np.asarray(a, float)
        mu = np.asarray(mu, float).ravel()
        return np.concatenate([[a[j, k] for j, k in self.a_pairs], mu[: self.p - 1]])

    def unpack(self, theta):
        theta = np.asarray(theta, float)
        a = np.zeros((self.p, self.p))
        na = len(self.a_pairs)
        for v, (j, k) in zip(theta[:na], self.a_pairs):
            a[j, k] = a[k, j] = v
        mu = np.zeros(self.p)
        mu[: self.p - 1] = theta[na:]
        return a, mu

    def t(self, x):
        x2 = x * x
        cols = [x2[:, j] ** 2 if j == k else 2 * x2[:, j] * x2[:, k] for j, k in self.a_pairs]
        cols += [x2[:, j] for j in range(self.p - 1)]
        return np.stack(cols, axis=1)

    def grad_t(self, x):
        m, p = x.shape
        out = np.zeros((m, self.d, p))
        for i, (j, k) in enumerate(self.a_pairs):
            if j == k:
                out[:, i, j] = 4 * x[:, j] ** 3
            else:
                out[:, i, j] = 4 * x[:, j] * x[:, k] ** 2
                out[:, i, k] = 4 * x[:, j] ** 2 * x[:, k]
        na = len(self.a_pairs)
        for j in range(self.p - 1):
            out[:, na + j, j] = 2 * x[:, j]
        return out

    def hess_t(self, x):
        m, p = x.shape
        out = np.zeros((m, self.d, p, p))
        for i, (j, k) in enumerate(self.a_pairs):
            if j == k:
                out[:, i, j, j] = 12 * x[:, j] ** 2
            else:
                out[:, i, j, j] = 4 * x[:, k] ** 2
                out[:, i, k, k] = 4 * x[:, j] ** 2
                out[:, i, j, k] = out[:, i, k, j] = 8 * x[:, j] * x[:, k]
        na = len(self.a_pairs)
        for j in range(self.p - 1):
            out[:, na + j, j, j] = 2.0
        return out

    def b(self, x):
        coef = 1 + 2 * self.beta
        live = coef != 0
        return np.log(x[:, live]) @ coef[live]

    def grad_b(self, x):
        coef = 1 + 2 * self.beta
        out = np.zeros_like(x)
        live = coef != 0
        out[:, live] = coef[live] / x[:, live]
        return out

    def weight(self, x):
        xb, single = _batch(x)
        w = np.prod(xb, axis=1)
        return w[0] if single else w

    def grad_weight(self, x):
        xb, single = _batch(x)
        out = np.empty_like(xb)
        for j in range(self.p):
            out[:, j] = np.prod(np.delete(xb, j, axis=1), axis=1)
        return out[0] if single else out


def ppi_model(beta, p=None, a=None, mu=None) -> PPI:
    """PPI model; ``default_theta`` defaults to ``A = diag(1,..,1,0)``, ``mu = 0``."""
    model = PPI(beta, p)
    if a is None:
        a = np.diag(np.r_[np.ones(model.p - 1), 0.0])
    if mu is None:
        mu = np.zeros(model.p)
    model.default_theta = model.pack(a, mu)
    return model


# ---------------------------------------------------------------------------
# matrix Bingham distribution on the Stiefel manifold

class MatrixBingham(ExpFamModel):
    """``q~ = exp(tr(X^T A X))`` on V_{k,p} with ``A_pp`` fixed at 0."""

    family = "bingham"

    def __init__(self, p, k):
        if not 1 <= k < p:
            raise InvalidShape("need 1 <= k < p")
        self.p, self.k = int(p), int(k)
        self.a_pairs = [(j, k_) for j, k_ in sym_index_pairs(self.p) if (j, k_) != (p - 1, p - 1)]
        names = [f"A{j + 1}{k_ + 1}" for j, k_ in self.a_pairs]
        super().__init__(Stiefel(self.p, self.k), names)

    def pack(self, a):
        a = np.asarray(a, float)
        return np.array([a[j, k] for j, k in self.a_pairs])

    def unpack(self, theta):
        a = np.zeros((self.p, self.p))
        for v, (j, k) in zip(np.asarray(theta, float), self.a_pairs):
            a[j, k] = a[k, j] = v
        return a

    def t(self, x):
        xm = self.domain.as_matrix(x)
        xx = xm @ np.swapaxes(xm, -1, -2)
        cols = [xx[:, j, k] if j == k else 2 * xx[:, j, k] for j, k in self.a_pairs]
        return np.stack(cols, axis=1)

    def grad_t(self, x):
        xm = self.domain.as_matrix(x)
        m = xm.shape[0]
        out = np.zeros((m, self.d, self.p, self.k))
        for i, (j, k) in enumerate(self.a_pairs):
            if j == k:
                out[:, i, j, :] = 2 * xm[:, j, :]
            else:
                out[:, i, j, :] = 2 * xm[:, k, :]
                out[:, i, k, :] = 2 * xm[:, j, :]
        return out.reshape(m, self.d, self.p * self.k)

    def hess_t(self, x):
        m = np.asarray(x).shape[0]
        return np.broadcast_to(self._hess_const(), (m,) + self._hess_const().shape).copy()

    def _hess_const(self):
        if not hasattr(self, "_hc"):
            p, k = self.p, self.k
            hc = np.zeros((self.d, p * k, p * k))
            for i, (j, l) in enumerate(self.a_pairs):
                for c in range(k):
                    if j == l:
                        hc[i, j * k + c, j * k + c] = 2.0
                    else:
                        hc[i, j * k + c, l * k + c] = 2.0
                        hc[i, l * k + c, j * k + c] = 2.0
            self._hc = hc
        return self._hc


def matrix_bingham(p, k, a=None) -> MatrixBingham:
    """Bingham model; ``default_theta`` defaults to ``A = diag(1,..,1,0)``."""
    model = MatrixBingham(p, k)
    if a is None:
        a = np.diag(np.r_[np.ones(p - 1), 0.0])
    model.default_theta = model.pack(a)
    return model
