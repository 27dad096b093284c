"""Monte Carlo inner-product matrices and the W-orthogonalisation step.

For raw fields ``v~_1..v~_K`` and the mixed-score fields ``m_j`` at a
reference parameter ``theta0``, on one shared sample:

    F[a, j] = E[w <v~_a, m_j>]        G[j, k] = E[w <m_j, m_k>]
    v_a     = v~_a - sum_j (F G^-1)[a, j] m_j
    S[j, a] = E[(A m_j)(A v_a)]       T[a, b] = E[(A v_a)(A v_b)]
    U[j, k] = E[(A m_j)(A m_k)]
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotSPD
from .numerics import solve_spd, spd_inverse
from .samplers import sample
from .stein import base_terms
from .vector_fields import combine

DEFAULT_MC_SIZE = 1000
DEGENERATE_TOL = 1e-12
CANCEL_TOL = 1e-20


@dataclass(frozen=True)
class McSample:
    points: np.ndarray
    theta0: np.ndarray
    rng: object = None

    @property
    def size(self):
        return len(self.points)


@dataclass(frozen=True)
class MomentMatrices:
    F: np.ndarray
    G: np.ndarray
    S: np.ndarray
    T: np.ndarray
    U: np.ndarray
    sample: McSample
    kept: tuple = ()
    orth_coef: np.ndarray = field(default=None, repr=False)

    @property
    def K(self):
        return self.T.shape[0]

    @property
    def d(self):
        return self.G.shape[0]


def _sym(a):
    return 0.5 * (a + a.T)


def estimate_moments(model, theta0, raw_fields, M=DEFAULT_MC_SIZE, rng=None, points=None):
    """Estimate ``F, G, S, T, U`` and build the orthogonalised fields.

    Returns ``(MomentMatrices, v_fields)``.  Raw fields whose orthogonalised
    Stein image is numerically null are dropped: either ``T_aa <= 1e-12 tr(T)/K``
    or ``T_aa`` is pure cancellation error, below ``1e-20`` times the mean
    square of the terms subtracted to form it.  If every field is dropped
    ``NotSPD`` is raised.  ``points`` may be given
    to reuse a fixed sample instead of drawing ``M`` fresh points.
    """
    raw_fields = list(raw_fields)
    if not raw_fields:
        raise ValueError("need at least one raw field")
    theta0 = np.asarray(theta0, float)
    if points is None:
        points = sample(model, theta0, M, rng)
    x = np.asarray(points, float)
    m = len(x)
    d = model.d
    mixed = model.mixed_score_fields(theta0)
    vals, stein = base_terms(model, theta0, mixed + raw_fields, x)
    w = model.weight(x)
    mv, rv = vals[:d], vals[d:]
    am, ar = stein[:d], stein[d:]

    G = _sym(np.einsum("m,jmd,kmd->jk", w, mv, mv) / m)
    F = np.einsum("m,amd,jmd->aj", w, rv, mv) / m
    coef = solve_spd(G, F.T).T                      # F G^-1, (K, d)
    av = ar - coef @ am                             # Stein images of v_a

    T_full = _sym(av @ av.T / m)
    K = len(raw_fields)
    tr = np.trace(T_full)
    diag = np.diag(T_full)
    scale = np.mean((np.abs(ar) + np.abs(coef) @ np.abs(am)) ** 2, axis=1)
    live = (diag > DEGENERATE_TOL * max(tr, 0.0) / K) & (diag > CANCEL_TOL * scale)
    kept = tuple(int(a) for a in np.flatnonzero(live))
    if not kept or tr <= 0:
        raise NotSPD("every orthogonalised field has a null Stein image")
    idx = list(kept)
    av = av[idx]
    coef = coef[idx]
    T = T_full[np.ix_(idx, idx)]
    S = am @ av.T / m
    U = _sym(am @ am.T / m)

    v_fields = [combine([raw_fields[a]] + mixed, np.concatenate([[1.0], -coef[i]]))
                for i, a in enumerate(idx)]
    mm = MomentMatrices(F=F[idx], G=G, S=S, T=T, U=U,
                        sample=McSample(x, theta0, rng), kept=kept, orth_coef=coef)
    return mm, v_fields


def improvement_coefficients(mm: MomentMatrices):
    """``S T^-1`` (d x K)."""
    return solve_spd(mm.T, mm.S.T).T


def improved_fields(model, theta0, mm: MomentMatrices, v_fields):
    """``f_j = m_j - sum_a (S T^-1)[j, a] v_a`` for ``j = 1..d``."""
    coef = improvement_coefficients(mm)
    mixed = model.mixed_score_fields(theta0)
    return [combine([mixed[j]] + list(v_fields), np.concatenate([[1.0], -coef[j]]))
            for j in range(model.d)]


def are_estimate(mm: MomentMatrices):
    """``1 - diag(G^-1 S T^-1 S^T G^-1) / diag(G^-1 U G^-1)``."""
    ginv = spd_inverse(mm.G)
    gain = ginv @ mm.S @ solve_spd(mm.T, mm.S.T) @ ginv
    base = ginv @ mm.U @ ginv
    return 1.0 - np.diag(gain) / np.diag(base)


def empirical_orthogonality(model, mm: MomentMatrices, v_fields):
    """Shared-sample means of ``w <v_a, m_j>``; zero up to rounding."""
    x = mm.sample.points
    mixed = model.mixed_score_fields(mm.sample.theta0)
    w = model.weight(x)
    vv = np.array([f.eval(x) for f in v_fields])
    mv = np.array([f.eval(x) for f in mixed])
    return np.einsum("m,amd,jmd->aj", w, vv, mv) / len(x)
