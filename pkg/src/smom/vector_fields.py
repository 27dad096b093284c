"""Test functions ``f: M -> TM`` with values and ambient Jacobians.

All fields are evaluated on batches: ``eval(x)`` maps ``(m, D)`` to
``(m, D)`` and ``jacobian(x)`` maps ``(m, D)`` to ``(m, D, D)`` with
``J[i, a, b] = d f_a / d x_b``.  A single point of shape ``(D,)`` is accepted
as well.
"""
from __future__ import annotations

import numpy as np

from .domains import Domain
from .errors import DomainMismatch, MissingJacobian
from .numerics import RngStream, as_generator

MLP_HIDDEN = (3, 3, 3, 3, 3)


def _batch(x):
    x = np.asarray(x, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


class VectorField:
    """Base class. Subclasses implement ``_eval`` and optionally ``_jacobian``
    on batched input."""

    has_jacobian = False

    def __init__(self, domain: Domain, tag: str = ""):
        self.domain = domain
        self.tag = tag

    def eval(self, x):
        xb, single = _batch(x)
        out = self._eval(xb)
        return out[0] if single else out

    def jacobian(self, x):
        if not self.has_jacobian:
            raise MissingJacobian(f"field {self.tag!r} has no Jacobian")
        xb, single = _batch(x)
        out = self._jacobian(xb)
        return out[0] if single else out

    def __call__(self, x):
        return self.eval(x)

    def terms(self):
        """Flat linear-combination representation ``[(base_field, coeff)]``."""
        return [(self, 1.0)]

    def _eval(self, x):
        raise NotImplementedError

    def _jacobian(self, x):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.tag!r})"


class AnalyticField(VectorField):
    """Field from closed-form callables on batched ambient input.

    With ``project=True`` the raw output ``g`` is replaced by ``P_x g`` and
    the Jacobian picks up the derivative of the projection.
    """

    def __init__(self, domain, fn, jac=None, tag="analytic", project=False):
        super().__init__(domain, tag)
        self._fn = fn
        self._jac = jac
        self.project = project and not domain.is_euclidean
        self.has_jacobian = jac is not None

    def _eval(self, x):
        g = np.asarray(self._fn(x), dtype=float).reshape(x.shape)
        return self.domain.project(x, g) if self.project else g

    def _jacobian(self, x):
        jg = np.asarray(self._jac(x), dtype=float).reshape(x.shape + (x.shape[1],))
        if not self.project:
            return jg
        g = np.asarray(self._fn(x), dtype=float).reshape(x.shape)
        return self.domain.projected_jacobian(x, g, jg)

    def eval_and_jacobian(self, x):
        return self._eval(x), self._jacobian(x)


class MlpField(VectorField):
    """Random tanh network ``R^D -> R^D`` with five hidden layers of width 3.

    Weights and biases are i.i.d. N(0, 1).  On manifold domains the output is
    projected onto the tangent space at the input point.
    """

    has_jacobian = True

    def __init__(self, domain: Domain, rng, hidden=MLP_HIDDEN, tag=None):
        if tag is None:
            tag = f"mlp[{rng.seed}:{rng.stream}]" if isinstance(rng, RngStream) else "mlp"
        super().__init__(domain, tag)
        gen = as_generator(rng)
        dims = [domain.ambient_dim, *hidden, domain.ambient_dim]
        self.weights = []
        self.biases = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            self.weights.append(gen.standard_normal((d_out, d_in)))
            self.biases.append(gen.standard_normal(d_out))

    def raw(self, x, with_jacobian=False):
        h = x
        jac = None
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ w.T + b
            if with_jacobian:
                jac = np.broadcast_to(w, (x.shape[0],) + w.shape) if jac is None else w @ jac
            if i < last:
                h = np.tanh(a)
                if with_jacobian:
                    jac = (1.0 - h * h)[:, :, None] * jac
            else:
                h = a
        return h, jac

    def _eval(self, x):
        g, _ = self.raw(x)
        return g if self.domain.is_euclidean else self.domain.project(x, g)

    def _jacobian(self, x):
        return self.eval_and_jacobian(x)[1]

    def eval_and_jacobian(self, x):
        g, jg = self.raw(x, with_jacobian=True)
        if self.domain.is_euclidean:
            return g, np.array(jg)
        return self.domain.project(x, g), self.domain.projected_jacobian(x, g, jg)


def mlp_field(domain: Domain, rng) -> MlpField:
    return MlpField(domain, rng)


class CombinedField(VectorField):
    """Pointwise linear combination; nested combinations are flattened."""

    def __init__(self, fields, coeffs, tag="combination"):
        fields = list(fields)
        coeffs = np.asarray(coeffs, dtype=float).ravel()
        if len(fields) != coeffs.size:
            raise ValueError("fields and coeffs differ in length")
        if not fields:
            raise ValueError("combine needs at least one field")
        domain = fields[0].domain
        for f in fields[1:]:
            if f.domain != domain:
                raise DomainMismatch(f"{f.domain!r} != {domain!r}")
        super().__init__(domain, tag)
        merged = {}
        order = []
        for f, c in zip(fields, coeffs):
            for base, bc in f.terms():
                key = id(base)
                if key not in merged:
                    merged[key] = [base, 0.0]
                    order.append(key)
                merged[key][1] += c * bc
        self._terms = [(merged[k][0], merged[k][1]) for k in order]
        self.has_jacobian = all(b.has_jacobian for b, _ in self._terms)

    def terms(self):
        return list(self._terms)

    def _eval(self, x):
        out = np.zeros_like(x)
        for base, c in self._terms:
            out += c * base._eval(x)
        return out

    def _jacobian(self, x):
        out = np.zeros(x.shape + (x.shape[1],))
        for base, c in self._terms:
            out += c * base._jacobian(x)
        return out


def combine(fields, coeffs) -> CombinedField:
    return CombinedField(fields, coeffs)


def zero_field(domain: Domain) -> VectorField:
    return AnalyticField(domain, lambda x: np.zeros_like(x),
                         lambda x: np.zeros(x.shape + (x.shape[1],)), tag="zero")
