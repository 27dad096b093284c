"""Sample-space geometry: Euclidean space, the positive orthant of the unit
sphere and the Stiefel manifold.

Points and ambient vectors are flat float arrays of length ``ambient_dim``;
every routine also accepts a batch of shape ``(m, ambient_dim)``.  Stiefel
points are p x k matrices flattened row-major.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBasis, DomainViolation, RetractionFailure

MEMBERSHIP_TOL = 1e-10
BASIS_TOL = 1e-8


def _batch(x):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x, x.ndim == 1


def _unbatch(y, single):
    return y[0] if single else y


@dataclass(frozen=True)
class Domain:
    kind = "abstract"

    @property
    def ambient_dim(self) -> int:
        raise NotImplementedError

    @property
    def intrinsic_dim(self) -> int:
        raise NotImplementedError

    @property
    def is_euclidean(self) -> bool:
        return False

    def contains(self, x):
        """Boolean membership mask (scalar for a single point)."""
        raise NotImplementedError

    def check(self, x):
        ok = np.atleast_1d(self.contains(x))
        if not np.all(ok):
            raise DomainViolation(f"{int(np.sum(~ok))} point(s) outside {self!r}")

    def project(self, x, z):
        """Orthogonal projection of ambient ``z`` onto the tangent space at ``x``."""
        raise NotImplementedError

    def dproject(self, x, z, dx, dz):
        """Directional derivative of ``(x, z) -> project(x, z)``."""
        raise NotImplementedError

    def _retract(self, x, v):
        raise NotImplementedError

    def projection_matrix(self, x):
        """Matrix of the tangent projection, shape ``(m, D, D)`` for a batch."""
        xb, single = _batch(x)
        m, dim = xb.shape
        eye = np.eye(dim)
        cols = [self.project(xb, np.broadcast_to(eye[c], (m, dim))) for c in range(dim)]
        return _unbatch(np.stack(cols, axis=-1), single)

    def projected_jacobian(self, x, g, jg):
        """Jacobian of ``x -> project(x, g(x))`` given ``g`` and its Jacobian."""
        xb, single = _batch(x)
        gb = np.asarray(g, dtype=float).reshape(xb.shape)
        jb = np.asarray(jg, dtype=float).reshape(xb.shape + (xb.shape[1],))
        m, dim = xb.shape
        eye = np.eye(dim)
        cols = [self.dproject(xb, gb, np.broadcast_to(eye[c], (m, dim)), jb[:, :, c])
                for c in range(dim)]
        return _unbatch(np.stack(cols, axis=-1), single)

    def retract(self, x, v, t=1.0, check=True):
        """Map ``x + t v`` back onto the domain."""
        xb, single = _batch(x)
        if check:
            self.check(xb)
        out = self._retract(xb, t * np.asarray(v, dtype=float).reshape(xb.shape))
        if check and not np.all(self.contains(out)):
            raise RetractionFailure("retracted point left the domain")
        return _unbatch(out, single)


@dataclass(frozen=True)
class Euclidean(Domain):
    p: int
    kind = "euclidean"

    @property
    def ambient_dim(self):
        return self.p

    @property
    def intrinsic_dim(self):
        return self.p

    @property
    def is_euclidean(self):
        return True

    def contains(self, x):
        xb, single = _batch(x)
        ok = np.all(np.isfinite(xb), axis=1) & (xb.shape[1] == self.p)
        return ok[0] if single else ok

    def project(self, x, z):
        return np.array(z, dtype=float)

    def dproject(self, x, z, dx, dz):
        return np.array(dz, dtype=float)

    def _retract(self, x, v):
        return x + v


@dataclass(frozen=True)
class SphereOrthant(Domain):
    """``{x in R^p : |x| = 1, x >= 0}``, treated as its open interior."""

    p: int
    kind = "sphere_orthant"

    @property
    def ambient_dim(self):
        return self.p

    @property
    def intrinsic_dim(self):
        return self.p - 1

    def contains(self, x):
        xb, single = _batch(x)
        ok = (np.abs(np.linalg.norm(xb, axis=1) - 1.0) <= MEMBERSHIP_TOL) & np.all(xb >= 0.0, axis=1)
        return ok[0] if single else ok

    def project(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        return z - np.sum(x * z, axis=-1, keepdims=True) * x

    def dproject(self, x, z, dx, dz):
        xz = np.sum(x * z, axis=-1, keepdims=True)
        d_xz = np.sum(dx * z, axis=-1, keepdims=True) + np.sum(x * dz, axis=-1, keepdims=True)
        return dz - d_xz * x - xz * dx

    def projection_matrix(self, x):
        x = np.asarray(x, dtype=float)
        return np.eye(self.p) - x[..., :, None] * x[..., None, :]

    def _retract(self, x, v):
        y = x + v
        return y / np.linalg.norm(y, axis=1, keepdims=True)


@dataclass(frozen=True)
class Stiefel(Domain):
    """p x k matrices with orthonormal columns, flattened row-major."""

    p: int
    k: int
    kind = "stiefel"

    @property
    def ambient_dim(self):
        return self.p * self.k

    @property
    def intrinsic_dim(self):
        return self.p * self.k - self.k * (self.k + 1) // 2

    def as_matrix(self, x):
        x = np.asarray(x, dtype=float)
        return x.reshape(x.shape[:-1] + (self.p, self.k))

    def flatten(self, xm):
        xm = np.asarray(xm, dtype=float)
        return xm.reshape(xm.shape[:-2] + (self.p * self.k,))

    def contains(self, x):
        xb, single = _batch(x)
        xm = self.as_matrix(xb)
        gram = np.swapaxes(xm, -1, -2) @ xm
        ok = np.max(np.abs(gram - np.eye(self.k)), axis=(1, 2)) <= MEMBERSHIP_TOL
        return ok[0] if single else ok

    @staticmethod
    def _sym(a):
        return 0.5 * (a + np.swapaxes(a, -1, -2))

    def project(self, x, z):
        xm, zm = self.as_matrix(x), self.as_matrix(z)
        return self.flatten(zm - xm @ self._sym(np.swapaxes(xm, -1, -2) @ zm))

    def dproject(self, x, z, dx, dz):
        xm, zm = self.as_matrix(x), self.as_matrix(z)
        dxm, dzm = self.as_matrix(dx), self.as_matrix(dz)
        xt = np.swapaxes(xm, -1, -2)
        d_inner = np.swapaxes(dxm, -1, -2) @ zm + xt @ dzm
        out = dzm - dxm @ self._sym(xt @ zm) - xm @ self._sym(d_inner)
        return self.flatten(out)

    def _retract(self, x, v):
        # polar retraction: orthonormal factor of the polar decomposition
        u, _, vt = np.linalg.svd(self.as_matrix(x + v), full_matrices=False)
        return self.flatten(u @ vt)


def project_tangent(domain: Domain, x, z):
    """Tangent projection that first validates ``x``."""
    domain.check(x)
    return domain.project(x, z)


def tangent_basis(domain: Domain, x):
    """Orthonormal tangent basis at a single point ``x``, shape ``(dim, D)``.

    Gram-Schmidt (applied twice for stability) on the projected canonical
    ambient basis in ascending index order; residuals below 1e-8 are skipped.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("tangent_basis expects a single point")
    domain.check(x)
    dim = domain.ambient_dim
    basis = []
    for c in range(dim):
        e = np.zeros(dim)
        e[c] = 1.0
        r = domain.project(x, e)
        for _ in range(2):
            for b in basis:
                r = r - (b @ r) * b
        nrm = np.linalg.norm(r)
        if nrm < BASIS_TOL:
            continue
        basis.append(r / nrm)
        if len(basis) == domain.intrinsic_dim:
            break
    if len(basis) < domain.intrinsic_dim:
        raise DegenerateBasis(f"found {len(basis)} of {domain.intrinsic_dim} tangent directions")
    return np.array(basis)


def retract(domain: Domain, x, v, t=1.0):
    return domain.retract(x, v, t)
