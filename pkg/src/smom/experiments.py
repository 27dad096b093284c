"""Replication harness for the simulation studies.

Every replication draws from its own streams keyed by
``(seed, experiment, n, K, pair, rep)``; the random test fields of a pair are
keyed by ``(seed, experiment, pair, alpha)`` so that the fields for ``K`` are
a prefix of those for any larger ``K``.  Work is spread over a process pool
whose size comes from ``SMOM_WORKERS``; rows are sorted before writing, so the
output bytes do not depend on the worker count.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, SmomError
from .estimators import gn_mle, improved_estimator, score_matching
from .models import generalized_normal, gn_reference_theta, matrix_bingham, ppi_model
from .moments import estimate_moments, improved_fields
from .numerics import RngStream
from .samplers import sample
from .vector_fields import mlp_field
from .wasserstein import are_closed_form

log = logging.getLogger(__name__)

EXPERIMENTS = ("gnormal", "ppi", "bingham", "are-curve", "trace")
CSV_HEADER = ("experiment", "parameter", "n", "K", "pair", "estimator", "mse",
              "ratio_vs_sm", "are_estimate", "failures")
SUMMARY_HEADER = ("experiment", "parameter", "n", "K", "estimator", "median", "min", "max",
                  "pairs", "are_median")
TRACE_HEADER = ("K", "pair", "x", "f_sm", "f_mle", "f_mle_matched", "f_improved")
ARE_HEADER = ("beta", "are", "limit")
WORKERS_ENV = "SMOM_WORKERS"
DEFAULT_REPS = 300
FULL_REPS = 1000
TRACE_GRID = np.round(np.arange(-3.0, 3.0 + 1e-9, 0.05), 10)

_DEFAULTS = {
    "gnormal": dict(n=(10, 100, 1000), K=(1, 2, 4, 8), beta=(2.0,)),
    "trace": dict(n=(1000,), K=(1, 2, 4, 8), beta=(2.0,)),
    "ppi": dict(n=(100,), K=(3, 6, 12, 24), beta=(-0.5,)),
    "bingham": dict(n=(100,), K=(3, 6, 12, 24), beta=()),
    "are-curve": dict(n=(), K=(), beta=tuple(float(b) for b in range(1, 51))),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n: tuple = ()
    reps: int = DEFAULT_REPS
    K: tuple = ()
    pairs: int = 10
    M: int = 1000
    beta: tuple = ()
    seed: int = 0
    out: str = None

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.experiment == "are-curve":
            if not self.beta or any(b < 1 for b in self.beta):
                raise ConfigError("are-curve needs beta values >= 1")
            return self
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if not self.K or any(k < 1 for k in self.K):
            raise ConfigError("all K must be >= 1")
        if not self.n or any(n < 2 for n in self.n):
            raise ConfigError("all n must be >= 2")
        if self.pairs < 1 or self.M < 2:
            raise ConfigError("need pairs >= 1 and M >= 2")
        if self.experiment in ("gnormal", "trace") and (len(self.beta) != 1 or self.beta[0] < 1):
            raise ConfigError("gnormal needs a single beta >= 1")
        if self.experiment == "ppi" and (len(self.beta) != 1 or self.beta[0] <= -1):
            raise ConfigError("ppi needs a single beta > -1")
        return self


def default_config(experiment, **overrides) -> ExperimentConfig:
    if experiment not in _DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    base = dict(_DEFAULTS[experiment])
    base.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(experiment=experiment, **base).validate()


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    parameter: str
    n: int
    K: int
    pair: int
    estimator: str
    mse: float
    ratio_vs_sm: float
    are_estimate: float
    failures: int

    def key(self):
        return (self.experiment, self.n, self.K, self.pair, _EST_ORDER.get(self.estimator, 9),
                self.estimator, self.parameter)


_EST_ORDER = {"sm": 0, "wsm": 0, "mle": 1, "smom_oracle": 2, "smom_plugin": 3}


# ---------------------------------------------------------------------------
# per-experiment setup

@dataclass
class _Setup:
    experiment: str
    model: object
    theta_star: np.ndarray
    baseline: str
    with_mle: bool = False
    beta: float = None
    names: list = field(default_factory=list)


def _setup(cfg: ExperimentConfig) -> _Setup:
    exp = cfg.experiment
    if exp in ("gnormal", "trace"):
        beta = cfg.beta[0]
        model = generalized_normal(beta)
        return _Setup(exp, model, np.array([gn_reference_theta(beta)]), "sm", True, beta,
                      ["theta"])
    if exp == "ppi":
        model = ppi_model(np.full(3, cfg.beta[0]))
        return _Setup(exp, model, model.default_theta, "wsm", names=model.param_names)
    if exp == "bingham":
        model = matrix_bingham(3, 2)
        return _Setup(exp, model, model.default_theta, "sm", names=model.param_names)
    raise ConfigError(f"no replication setup for {exp!r}")


def pair_fields(cfg: ExperimentConfig, setup: _Setup, pair, K):
    root = RngStream(cfg.seed).child(cfg.experiment, "mlp", pair)
    return [mlp_field(setup.model.domain, root.child(alpha)) for alpha in range(K)]


def rep_stream(cfg: ExperimentConfig, n, K, pair, rep) -> RngStream:
    return RngStream(cfg.seed).child(cfg.experiment, n, K, pair, rep)


def _replicate(cfg, setup, fields, n, K, pair, rep):
    """One replication; ``None`` when the baseline itself cannot be computed."""
    root = rep_stream(cfg, n, K, pair, rep)
    model = setup.model
    x = sample(model, setup.theta_star, n, root.child("data"))
    try:
        sm = score_matching(model, x)
    except SmomError:
        return None
    out = {setup.baseline: (sm.theta, False, None)}
    if setup.with_mle:
        try:
            out["mle"] = (gn_mle(setup.beta, x).theta, False, None)
        except SmomError:
            out["mle"] = (np.full(model.d, np.nan), True, None)
    for name, theta0, label in (("smom_oracle", setup.theta_star, "mc_oracle"),
                                ("smom_plugin", "plugin", "mc_plugin")):
        rec = improved_estimator(model, x, theta0, fields, cfg.M, root.child(label),
                                 name=name, baseline=sm)
        out[name] = (rec.theta, rec.fallback, rec.diagnostics.get("are"))
    return out


def _geo_mean(values):
    v = np.asarray([a for a in values if a is not None and np.isfinite(a) and a > 0])
    return float(np.exp(np.mean(np.log(v)))) if v.size else math.nan


def _run_cell(args):
    cfg, n, K, pair = args
    setup = _setup(cfg)
    fields = pair_fields(cfg, setup, pair, K)
    reps = [_replicate(cfg, setup, fields, n, K, pair, r) for r in range(cfg.reps)]
    names = [setup.baseline] + (["mle"] if setup.with_mle else []) + ["smom_oracle", "smom_plugin"]
    d = setup.model.d
    mse = {}
    rows = []
    for name in names:
        errs, fails, ares = [], 0, []
        for rec in reps:
            if rec is None:
                fails += 1
                continue
            theta, fb, are = rec[name]
            fails += bool(fb)
            if np.all(np.isfinite(theta)):
                errs.append((theta - setup.theta_star) ** 2)
            if are is not None and not fb:
                ares.append(np.asarray(are, float))
        if fails >= cfg.reps or not errs:
            mse[name] = np.full(d, math.nan)
        else:
            mse[name] = np.mean(errs, axis=0)
        for j in range(d):
            are_j = _geo_mean([a[j] for a in ares]) if ares else math.nan
            rows.append((name, j, float(mse[name][j]), are_j, fails))
    base = mse[setup.baseline]
    result = []
    for name, j, m, are_j, fails in rows:
        ratio = m / base[j] if base[j] > 0 else math.nan
        result.append(ResultRow(cfg.experiment, setup.names[j], int(n), int(K), int(pair), name,
                                m, float(ratio), are_j, int(fails)))
    log.info("%s n=%d K=%d pair=%d done", cfg.experiment, n, K, pair)
    return result


def worker_count():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        w = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if w < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1")
    return w


def _map(fn, jobs, workers=None):
    workers = worker_count() if workers is None else workers
    if workers == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def run_replications(cfg: ExperimentConfig, workers=None):
    cfg.validate()
    jobs = [(cfg, n, K, pair) for n in cfg.n for K in cfg.K for pair in range(cfg.pairs)]
    rows = [row for cell in _map(_run_cell, jobs, workers) for row in cell]
    return sorted(rows, key=ResultRow.key)


def run_gnormal(cfg: ExperimentConfig, workers=None):
    return run_replications(_expect(cfg, "gnormal"), workers)


def run_ppi(cfg: ExperimentConfig, workers=None):
    return run_replications(_expect(cfg, "ppi"), workers)


def run_bingham(cfg: ExperimentConfig, workers=None):
    return run_replications(_expect(cfg, "bingham"), workers)


def _expect(cfg, name):
    if cfg.experiment != name:
        raise ConfigError(f"expected a {name} config, got {cfg.experiment!r}")
    return cfg


def run_are_curve(betas):
    """Rows ``(beta, ARE(beta), 1/3)``."""
    betas = [float(b) for b in betas]
    if not betas or any(b < 1 for b in betas):
        raise ConfigError("beta values must be >= 1")
    return [(b, are_closed_form(b), 1.0 / 3.0) for b in betas]


# ---------------------------------------------------------------------------
# test-function trace for the generalized normal family

def _trace_cell(args):
    cfg, n, K, pair = args
    setup = _setup(cfg)
    model = setup.model
    fields = pair_fields(cfg, setup, pair, K)
    grid = TRACE_GRID[:, None]
    acc = np.zeros(len(grid))
    used = 0
    for rep in range(cfg.reps):
        root = rep_stream(cfg, n, K, pair, rep)
        x = sample(model, setup.theta_star, n, root.child("data"))
        try:
            th0 = score_matching(model, x).theta
            mm, v_fields = estimate_moments(model, th0, fields, cfg.M, root.child("mc_plugin"))
            f = improved_fields(model, th0, mm, v_fields)[0]
        except SmomError:
            continue
        acc += f.eval(grid)[:, 0]
        used += 1
    mean = acc / used if used else np.full(len(grid), math.nan)
    return [(int(K), int(pair), float(g), float(v)) for g, v in zip(TRACE_GRID, mean)]


def run_testfunction_trace(cfg: ExperimentConfig, workers=None):
    """Rows ``(K, pair, x, f_sm, f_mle, f_mle_matched, f_improved)`` on ``[-3, 3]``.

    ``f_mle`` is the raw MLE field ``x``; ``f_mle_matched`` rescales it so that
    ``E<f, m> = E<m, m>`` at the true parameter, the normalisation shared by
    the score matching and improved fields.
    """
    cfg = _expect(cfg, "trace").validate()
    if len(cfg.n) != 1:
        raise ConfigError("trace needs a single n")
    setup = _setup(cfg)
    model = setup.model
    mixed = model.mixed_score_fields(setup.theta_star)[0]
    f_sm = mixed.eval(TRACE_GRID[:, None])[:, 0]
    xs = sample(model, setup.theta_star, 200_000, RngStream(cfg.seed).child(cfg.experiment, "scale"))
    mv = mixed.eval(xs)[:, 0]
    scale = np.mean(mv * mv) / np.mean(xs[:, 0] * mv)
    jobs = [(cfg, cfg.n[0], K, pair) for K in cfg.K for pair in range(cfg.pairs)]
    out = []
    for cell in _map(_trace_cell, jobs, workers):
        for i, (K, pair, x, fi) in enumerate(cell):
            out.append((K, pair, x, float(f_sm[i]), x, float(scale * x), fi))
    return sorted(out, key=lambda r: (r[0], r[1], r[2]))


# ---------------------------------------------------------------------------
# CSV output and summaries

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows, header=CSV_HEADER):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        values = [getattr(row, h) for h in header] if isinstance(row, ResultRow) else row
        writer.writerow([_fmt(v) for v in values])
    return buf.getvalue()


def write_csv(rows, path, header=CSV_HEADER):
    text = rows_to_csv(rows, header)
    if path is None or path == "-":
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ConfigError(f"{path}: unexpected header {reader.fieldnames}")
        return [ResultRow(r["experiment"], r["parameter"], int(r["n"]), int(r["K"]),
                          int(r["pair"]), r["estimator"], float(r["mse"]),
                          float(r["ratio_vs_sm"]), float(r["are_estimate"]), int(r["failures"]))
                for r in reader]


def summarize(rows):
    """Median (min, max) of ``ratio_vs_sm`` across pairs, NaN rows excluded."""
    groups = {}
    for r in rows:
        groups.setdefault((r.experiment, r.parameter, r.n, r.K, r.estimator), []).append(r)
    out = []
    for (exp, par, n, K, est), rs in groups.items():
        ratios = np.array([r.ratio_vs_sm for r in rs if np.isfinite(r.mse)])
        ares = np.array([r.are_estimate for r in rs if np.isfinite(r.are_estimate)])
        if ratios.size:
            med, lo, hi = float(np.median(ratios)), float(ratios.min()), float(ratios.max())
        else:
            med = lo = hi = math.nan
        are_med = float(np.median(ares)) if ares.size else math.nan
        out.append((exp, par, n, K, est, med, lo, hi, int(ratios.size), are_med))
    param_order = {}
    for r in rows:
        param_order.setdefault(r.parameter, len(param_order))
    out.sort(key=lambda t: (t[0], t[2], t[3], _EST_ORDER.get(t[4], 9), t[4], param_order[t[1]]))
    return out


def median_ratio(rows, estimator, K=None, n=None, parameter=None):
    """Median across pairs of the ratio for one estimator (and optional filters)."""
    vals = [r.ratio_vs_sm for r in rows if r.estimator == estimator and np.isfinite(r.mse)
            and (K is None or r.K == K) and (n is None or r.n == n)
            and (parameter is None or r.parameter == parameter)]
    return float(np.median(vals)) if vals else math.nan


def oracle_nan(rows):
    return any(r.estimator == "smom_oracle" and not np.isfinite(r.mse) for r in rows)


def config_dict(cfg: ExperimentConfig):
    return asdict(cfg)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None}).validate()
