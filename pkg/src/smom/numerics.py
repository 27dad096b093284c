"""Dense linear algebra helpers and the seeded random stream contract.

Matrices are plain float64 ``numpy`` arrays; callers must not mutate arrays
returned from this module.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NotSPD

JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)


def _inf_norm(a):
    return float(np.max(np.abs(a))) if a.size else 0.0


def solve_spd(a, b):
    """Solve ``a @ x = b`` for symmetric positive definite ``a``.

    Cholesky is attempted first without jitter and then with diagonal jitter
    of 1e-12, 1e-10 and 1e-8 times ``trace(a)/n``.  A jittered solve is only
    accepted when the residual against the *original* matrix still satisfies
    ``|a x - b|_inf <= 1e-8 (1 + |b|_inf)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    vector_rhs = b.ndim == 1
    if vector_rhs:
        b = b[:, None]
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"solve_spd needs a square matrix, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError("row mismatch between a and b")
    n = a.shape[0]
    scale = max(_inf_norm(a), 1e-300)
    if _inf_norm(a - a.T) > 1e-10 * scale:
        raise NotSPD("matrix is not symmetric")
    if not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
        raise NotSPD("non-finite entries")
    a = 0.5 * (a + a.T)
    tr = float(np.trace(a))
    if tr <= 0.0:
        raise NotSPD("non-positive trace")
    tol = 1e-8 * (1.0 + _inf_norm(b))
    for eps in JITTER_LADDER:
        try:
            factor = linalg.cho_factor(a + eps * tr / n * np.eye(n), lower=True,
                                       check_finite=False)
        except linalg.LinAlgError:
            continue
        x = linalg.cho_solve(factor, b, check_finite=False)
        if np.all(np.isfinite(x)) and _inf_norm(a @ x - b) <= tol:
            return x[:, 0] if vector_rhs else x
    raise NotSPD(f"{n}x{n} matrix not positive definite after jitter ladder")


def spd_inverse(a):
    return solve_spd(a, np.eye(np.shape(a)[0]))


def sylvester_solve(sigma, rhs):
    """Symmetric solution ``S`` of ``S sigma + sigma S = rhs``.

    Uses the eigendecomposition of ``sigma``: in its eigenbasis the solution
    is ``R_ab / (lambda_a + lambda_b)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    lam, q = np.linalg.eigh(0.5 * (sigma + sigma.T))
    if lam[0] <= 0.0:
        raise NotSPD("sigma has a non-positive eigenvalue")
    r = q.T @ rhs @ q
    s = q @ (r / (lam[:, None] + lam[None, :])) @ q.T
    s = 0.5 * (s + s.T)
    resid = _inf_norm(s @ sigma + sigma @ s - rhs)
    if resid > 1e-10 * (1.0 + _inf_norm(rhs)):
        raise NotSPD(f"Sylvester residual {resid:.3g} too large; sigma ill-conditioned")
    return s


def sym_index_pairs(p):
    """Free entries of a symmetric p x p matrix: diagonal first, then the
    strict upper triangle in lexicographic order."""
    pairs = [(j, j) for j in range(p)]
    pairs += [(j, k) for j in range(p) for k in range(j + 1, p)]
    return pairs


def stream_id(*labels) -> int:
    """Stable 64-bit id from arbitrary labels (ints, strings, floats)."""
    text = "\x1f".join(repr(x) for x in labels)
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by ``(seed, stream)``.

    Backed by the counter-based Philox generator; distinct stream ids give
    independent keys via ``SeedSequence`` hashing.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed % 2**64, spawn_key=(self.stream % 2**64,))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *labels) -> "RngStream":
        return RngStream(self.seed, stream_id(self.stream, *labels))


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)
