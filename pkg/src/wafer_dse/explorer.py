"""Multi-fidelity multi-objective design search.

Gaussian-process surrogates over encoded design vectors, expected
hypervolume improvement as the acquisition function, and a two-rung
fidelity schedule: a cheap evaluator carries the early iterations, an
expensive one takes over once its surrogate has seen enough points.
Single-fidelity Bayesian optimization and random sampling are provided
as baselines on the same archive format.

Objectives are (maximize throughput, minimize average power); the
reference point is zero throughput at the wafer power cap.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize
from scipy.linalg import cho_solve, solve_triangular
from scipy.stats import norm, qmc

try:
    import tomllib
except ModuleNotFoundError:             # 3.10 backport
    import tomli as tomllib

from . import constants as C
from .errors import InputError, InternalError

REF_POINT = (0.0, C.POWER_CAP_W)

_JITTERS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2)


def _chol_with_jitter(K: np.ndarray) -> np.ndarray:
    for jit in _JITTERS:
        try:
            return np.linalg.cholesky(K + jit * np.eye(len(K)))
        except np.linalg.LinAlgError:
            continue
    raise InternalError("kernel matrix singular after maximum jitter")


# ---------------------------------------------------------------------------
# Gaussian-process surrogate
# ---------------------------------------------------------------------------

class GpSurrogate:
    """Squared-exponential kernel with per-dimension length scales.

    Inputs are the [0, 1]-encoded design vectors; targets are
    standardized internally. theta packs (log lengthscales, log signal
    std, log noise std).
    """

    def __init__(self, X, y, theta, noise_floor=1e-10):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.theta = np.asarray(theta, dtype=float)
        self.noise_floor = noise_floor
        self.y_mean = float(self.y.mean())
        self.y_std = float(self.y.std())
        if self.y_std < 1e-12:
            self.y_std = 1.0
        ys = (self.y - self.y_mean) / self.y_std
        d = self.X.shape[1]
        K = self._kern(self.X, self.X)
        K += (math.exp(2.0 * self.theta[d + 1]) + noise_floor) * np.eye(len(ys))
        self.L = _chol_with_jitter(K)
        self.alpha = cho_solve((self.L, True), ys)

    def _kern(self, A, B):
        d = A.shape[1]
        ls = np.exp(self.theta[:d])
        sf2 = math.exp(2.0 * self.theta[d])
        diff = (A[:, None, :] - B[None, :, :]) / ls
        return sf2 * np.exp(-0.5 * np.einsum("ijk,ijk->ij", diff, diff))

    def predict(self, Xs) -> tuple:
        """Posterior mean and variance in the original target units."""
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        Ks = self._kern(self.X, Xs)                      # (n, m)
        mu = Ks.T @ self.alpha
        v = solve_triangular(self.L, Ks, lower=True)
        d = self.X.shape[1]
        sf2 = math.exp(2.0 * self.theta[d])
        var = np.maximum(sf2 - np.einsum("ij,ij->j", v, v), 0.0)
        return self.y_mean + self.y_std * mu, (self.y_std ** 2) * var


def _nlml(z, X, ys, noise_floor):
    """Negative log marginal likelihood and its gradient in z."""
    n, d = X.shape
    ls = np.exp(z[:d])
    sf2 = math.exp(2.0 * z[d])
    sn2 = math.exp(2.0 * z[d + 1]) + noise_floor
    diff = (X[:, None, :] - X[None, :, :]) / ls          # (n, n, d)
    sq = diff * diff
    Kf = sf2 * np.exp(-0.5 * sq.sum(axis=2))
    K = Kf + sn2 * np.eye(n)
    L = _chol_with_jitter(K)
    alpha = cho_solve((L, True), ys)
    nll = (0.5 * float(ys @ alpha) + float(np.log(np.diag(L)).sum())
           + 0.5 * n * math.log(2.0 * math.pi))
    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv                    # dNLL = -0.5 tr(W dK)
    grad = np.empty(d + 2)
    for k in range(d):
        grad[k] = -0.5 * float((W * (Kf * sq[:, :, k])).sum())
    grad[d] = -0.5 * float((W * (2.0 * Kf)).sum())
    grad[d + 1] = -0.5 * float(np.trace(W)) * 2.0 * (sn2 - noise_floor)
    return nll, grad


def gp_fit(X, y, seed=0, restarts=5, noise_floor=1e-10) -> GpSurrogate:
    """Maximum-likelihood hyperparameters via multi-start L-BFGS-B."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise InputError("gp_fit needs at least two training points")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise InputError("gp_fit inputs must be finite")
    n, d = X.shape
    mean, std = float(y.mean()), float(y.std())
    if std < 1e-12:
        std = 1.0
    ys = (y - mean) / std

    bounds = [(-3.0, 2.5)] * d + [(-3.0, 3.0), (-9.0, 0.0)]
    starts = [np.array([math.log(0.5)] * d + [0.0, math.log(0.05)])]
    rng = np.random.default_rng([seed, 0x6f])
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    for _ in range(max(0, restarts - 1)):
        starts.append(lo + rng.random(d + 2) * (hi - lo))

    best, best_val = None, float("inf")
    for z0 in starts:
        try:
            res = optimize.minimize(_nlml, z0, args=(X, ys, noise_floor),
                                    jac=True, method="L-BFGS-B", bounds=bounds)
        except InternalError:
            continue
        if np.isfinite(res.fun) and res.fun < best_val:
            best, best_val = res.x, float(res.fun)
    if best is None:
        raise InternalError("all marginal-likelihood starts failed")
    return GpSurrogate(X, y, best, noise_floor)


# ---------------------------------------------------------------------------
# hypervolume (maximize throughput, minimize power)
# ---------------------------------------------------------------------------

def pareto_filter(points) -> list:
    """Indices of the nondominated subset of (throughput, power) pairs."""
    order = sorted(range(len(points)),
                   key=lambda i: (-points[i][0], points[i][1]))
    keep, best_p = [], float("inf")
    for i in order:
        if points[i][1] < best_p - 0.0:
            keep.append(i)
            best_p = points[i][1]
    return sorted(keep)


def hypervolume(points, ref=REF_POINT) -> float:
    """Exact 2D sweep: area dominated between the front and the reference."""
    ref_t, ref_p = ref
    pts = [(t, p) for t, p in points if t > ref_t and p < ref_p]
    if not pts:
        return 0.0
    front = [pts[i] for i in pareto_filter(pts)]
    front.sort(key=lambda tp: -tp[0])
    hv, bound = 0.0, ref_p
    for t, p in front:
        hv += (t - ref_t) * (bound - p)
        bound = p
    return hv


class _Staircase:
    """Dominated-region envelope of a 2D front, for fast HV increments."""

    def __init__(self, chi, ref=REF_POINT):
        ref_t, ref_p = ref
        pts = [(t, p) for t, p in chi if t > ref_t and p < ref_p]
        front = sorted((pts[i] for i in pareto_filter(pts)),
                       key=lambda tp: tp[0])
        ts = [t for t, _ in front]
        ps = [p for _, p in front]
        self.t_lo = np.array([ref_t] + ts)
        self.t_hi = np.array(ts + [np.inf])
        self.env = np.array(ps + [ref_p])
        self.ref = ref

    def increment(self, t, p) -> np.ndarray:
        """Hypervolume gained by each sample point (t_i, p_i); >= 0."""
        t = np.asarray(t, dtype=float)[:, None]
        p = np.asarray(p, dtype=float)[:, None]
        widths = np.clip(np.minimum(t, self.t_hi) - self.t_lo, 0.0, None)
        heights = np.clip(self.env - np.maximum(p, 0.0), 0.0, None)
        return (widths * heights).sum(axis=1)


# ---------------------------------------------------------------------------
# expected hypervolume improvement
# ---------------------------------------------------------------------------

@dataclass
class SurrogatePair:
    """Per-objective GPs: log1p(throughput) and raw power."""
    gp_t: GpSurrogate
    gp_p: GpSurrogate


def fit_pair(X, thr, pw, seed=0) -> SurrogatePair:
    return SurrogatePair(
        gp_t=gp_fit(X, np.log1p(np.maximum(np.asarray(thr, float), 0.0)),
                    seed=seed * 2 + 11),
        gp_p=gp_fit(X, pw, seed=seed * 2 + 13),
    )


def ehvi(pair: SurrogatePair, chi, X_cand, ref=REF_POINT, seed=0,
         n_qmc=128) -> tuple:
    """Expected HV improvement per candidate via seeded quasi-Monte-Carlo.

    The throughput posterior lives in log space, so each QMC draw is
    transformed before measuring the increment; a zero-variance
    posterior therefore reproduces the deterministic increment exactly.
    Returns (values, argmax with first-index tie-break).
    """
    X_cand = np.atleast_2d(np.asarray(X_cand, dtype=float))
    stair = _Staircase(chi, ref)
    mu_t, var_t = pair.gp_t.predict(X_cand)
    mu_p, var_p = pair.gp_p.predict(X_cand)
    sd_t, sd_p = np.sqrt(var_t), np.sqrt(var_p)

    sob = qmc.Sobol(d=2, scramble=True, seed=np.random.default_rng([seed, 0x51]))
    u = np.clip(sob.random(n_qmc), 1e-12, 1.0 - 1e-12)
    z = norm.ppf(u)                                      # (S, 2)

    vals = np.empty(len(X_cand))
    for i in range(len(X_cand)):
        log_t = np.clip(mu_t[i] + sd_t[i] * z[:, 0], -50.0, 50.0)
        t_s = np.expm1(log_t)
        p_s = mu_p[i] + sd_p[i] * z[:, 1]
        vals[i] = float(stair.increment(t_s, p_s).mean())
    return vals, int(np.argmax(vals))


# ---------------------------------------------------------------------------
# archive
# ---------------------------------------------------------------------------

@dataclass
class EvalRecord:
    index: int
    iteration: int          # -1 marks initialization samples
    fidelity: str           # "low" | "high"
    point: object           # jsonable design description
    throughput: float
    power: float
    feasible: bool
    error: str = ""

    def to_json(self) -> dict:
        return {"index": self.index, "iteration": self.iteration,
                "fidelity": self.fidelity, "point": self.point,
                "throughput": self.throughput, "power": self.power,
                "feasible": self.feasible, "error": self.error}

    @classmethod
    def from_json(cls, d: dict) -> "EvalRecord":
        return cls(int(d["index"]), int(d["iteration"]), d["fidelity"],
                   d["point"], float(d["throughput"]), float(d["power"]),
                   bool(d["feasible"]), d.get("error", ""))


@dataclass
class ParetoArchive:
    """Every evaluation ever made, plus the running front bookkeeping."""
    ref: tuple = REF_POINT
    records: list = field(default_factory=list)
    hv_log: list = field(default_factory=list)     # (index, fidelity, hv)
    calls: dict = field(default_factory=lambda: {"low": 0, "high": 0})
    meta: dict = field(default_factory=dict)

    def objectives(self, fidelity: str) -> list:
        return [(r.throughput, r.power) for r in self.records
                if r.fidelity == fidelity and r.feasible]

    def pareto(self, fidelity: str = "high") -> list:
        feas = [r for r in self.records
                if r.fidelity == fidelity and r.feasible]
        pts = [(r.throughput, r.power) for r in feas]
        return [feas[i] for i in pareto_filter(pts)]

    def hypervolume(self, fidelity: str = "high") -> float:
        return hypervolume(self.objectives(fidelity), self.ref)

    def save_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")

    @staticmethod
    def load_records(path) -> list:
        out = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(EvalRecord.from_json(json.loads(line)))
        return out


def hv_trajectory_csv(archive: ParetoArchive, path) -> None:
    with open(path, "w") as fh:
        fh.write("index,fidelity,hypervolume\n")
        for idx, fid, hv in archive.hv_log:
            fh.write(f"{idx},{fid},{hv!r}\n")


def pareto_csv(archive: ParetoArchive, path, fidelity: str = "high") -> None:
    with open(path, "w") as fh:
        fh.write("index,throughput,power,point\n")
        for r in archive.pareto(fidelity):
            pt = json.dumps(r.point, sort_keys=True).replace('"', "'")
            fh.write(f'{r.index},{r.throughput!r},{r.power!r},"{pt}"\n')


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MfmoboConfig:
    d0: int = 6             # initial high-fidelity samples
    d1: int = 12            # initial low-fidelity samples
    n0: int = 20            # total high-fidelity budget
    n1: int = 60            # total low-fidelity budget
    warmup_k: int = 4       # high-fidelity picks still chosen by the low model
    candidate_pool: int = 512
    n_qmc: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.d1 < 2 or self.d0 < 1:
            raise InputError("need d1 >= 2 and d0 >= 1 initial samples")
        if self.d0 > self.n0 or self.d1 > self.n1:
            raise InputError("initial samples exceed the fidelity budget")
        if not 0 <= self.warmup_k <= self.n0 - self.d0:
            raise InputError("warmup_k must lie in [0, n0 - d0]")
        if self.d0 + self.warmup_k < 2:
            raise InputError("high surrogate needs d0 + warmup_k >= 2 points")
        if self.candidate_pool < 1 or self.n_qmc < 1:
            raise InputError("candidate_pool and n_qmc must be positive")

    @classmethod
    def from_toml(cls, path) -> "MfmoboConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        table = data.get("mfmobo", data)
        known = {f for f in cls.__dataclass_fields__}
        bad = set(table) - known
        if bad:
            raise InputError(f"unknown mfmobo keys: {sorted(bad)}")
        return cls(**{k: int(v) for k, v in table.items()})


# ---------------------------------------------------------------------------
# search drivers
# ---------------------------------------------------------------------------

def _point_to_json(p):
    if hasattr(p, "to_json"):
        return p.to_json()
    if isinstance(p, (tuple, np.ndarray)):
        return [float(v) for v in p]
    return p


def _point_key(p) -> str:
    if hasattr(p, "canonical_json"):
        return p.canonical_json()
    return json.dumps(_point_to_json(p), sort_keys=True)


def _point_from_json(space, obj):
    hook = getattr(space, "point_from_json", None)
    if hook is not None:
        return hook(obj)
    if isinstance(obj, dict):
        from .design_space import DesignPoint
        return DesignPoint.from_json(obj)
    return obj


def _snap(space, p):
    if hasattr(space, "snap_to_grid") and hasattr(space, "to_vector"):
        return space.snap_to_grid(space.to_vector(p))
    return p


class _Dataset:
    """Evaluated points of one fidelity, encoded for the surrogate."""

    def __init__(self, space):
        self.space = space
        self.X, self.thr, self.pw = [], [], []
        self.keys = set()
        self.dirty = True

    def add(self, point, thr, pw):
        self.X.append(np.asarray(self.space.encode(point), dtype=float))
        self.thr.append(thr)
        self.pw.append(pw)
        self.keys.add(_point_key(point))
        self.dirty = True

    def fit(self, seed) -> SurrogatePair:
        self.dirty = False
        return fit_pair(np.array(self.X), self.thr, self.pw, seed=seed)


class _Runner:
    """Shared evaluate/record/resume machinery for all drivers."""

    def __init__(self, space, archive_path=None, ref=REF_POINT):
        self.space = space
        self.archive = ParetoArchive(ref=ref)
        self.path = Path(archive_path) if archive_path else None
        self.prior = []
        if self.path is not None and self.path.exists():
            self.prior = ParetoArchive.load_records(self.path)
        self.fh = None
        if self.path is not None:
            self.fh = open(self.path, "a")

    def close(self):
        if self.fh is not None:
            self.fh.close()

    def evaluate(self, point, fidelity, iteration, f) -> EvalRecord:
        idx = len(self.archive.records)
        if idx < len(self.prior):
            rec = self.prior[idx]
            if rec.fidelity != fidelity:
                raise InputError(
                    f"archive record {idx} is {rec.fidelity}-fidelity but the "
                    f"schedule expects {fidelity}; wrong archive for this run")
            point = _point_from_json(self.space, rec.point)
            rec = EvalRecord(idx, iteration, fidelity, rec.point,
                             rec.throughput, rec.power, rec.feasible,
                             rec.error)
        else:
            try:
                thr, pw = f(point)
                rec = EvalRecord(idx, iteration, fidelity,
                                 _point_to_json(point), float(thr), float(pw),
                                 True)
            except Exception as e:                 # noqa: BLE001
                rec = EvalRecord(idx, iteration, fidelity,
                                 _point_to_json(point), 0.0, self.archive.ref[1],
                                 False, f"{type(e).__name__}: {e}")
            self.archive.calls[fidelity] += 1
            if self.fh is not None:
                self.fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
                self.fh.flush()
        self.archive.records.append(rec)
        self.archive.hv_log.append(
            (idx, fidelity, self.archive.hypervolume(fidelity)))
        return rec, point


def _candidate_pool(space, rng, n, exclude_keys):
    cands, seen = [], set()
    for c in space.sample(rng, n):
        c = _snap(space, c)
        k = _point_key(c)
        if k in exclude_keys or k in seen:
            continue
        seen.add(k)
        cands.append(c)
    return cands


def run_mfmobo(space, f_low, f_high, cfg: MfmoboConfig,
               archive_path=None) -> ParetoArchive:
    """Two-fidelity search.

    Rungs run on one shared iteration counter: the first n1 - d1
    iterations evaluate with f_low; the remainder evaluate with f_high.
    For the first warmup_k high-fidelity iterations the low surrogate
    still picks the candidates while the high dataset fills up; after
    that the high surrogate takes over. Dataset sizes at termination
    are exactly n1 low and n0 high evaluations (initial samples
    included). Points whose evaluation raises are recorded infeasible
    at the reference point and never join the front.
    """
    runner = _Runner(space, archive_path)
    low, high = _Dataset(space), _Dataset(space)
    ds = {"low": low, "high": high}
    f = {"low": f_low, "high": f_high}

    def do(point, fidelity, iteration):
        rec, point = runner.evaluate(point, fidelity, iteration, f[fidelity])
        ds[fidelity].add(point, rec.throughput, rec.power)

    try:
        for pt in space.sample(np.random.default_rng([cfg.seed, 0, 1]), cfg.d1):
            do(_snap(space, pt), "low", -1)
        for pt in space.sample(np.random.default_rng([cfg.seed, 0, 2]), cfg.d0):
            do(_snap(space, pt), "high", -1)

        switch_i = cfg.n1 - cfg.d1
        acq_i = switch_i + cfg.warmup_k
        pair = {"low": None, "high": None}
        for i in range(cfg.n0 + cfg.n1 - cfg.d0 - cfg.d1):
            eval_fid = "high" if i >= switch_i else "low"
            acq_fid = "high" if i >= acq_i else "low"
            if ds[acq_fid].dirty or pair[acq_fid] is None:
                pair[acq_fid] = ds[acq_fid].fit(seed=cfg.seed)
            chi = runner.archive.objectives(eval_fid)
            pool = _candidate_pool(space, np.random.default_rng([cfg.seed, 1, i]),
                                   cfg.candidate_pool, ds[eval_fid].keys)
            if not pool:
                pool = [_snap(space, c) for c in space.sample(
                    np.random.default_rng([cfg.seed, 1, i]), cfg.candidate_pool)]
            X_c = np.array([space.encode(c) for c in pool])
            _, best = ehvi(pair[acq_fid], chi, X_c, runner.archive.ref,
                           seed=int(cfg.seed * 1000 + i), n_qmc=cfg.n_qmc)
            do(pool[best], eval_fid, i)
    finally:
        runner.close()

    runner.archive.meta = {"algo": "mfmobo", "seed": cfg.seed,
                           "schedule": {"switch": cfg.n1 - cfg.d1,
                                        "acq_switch": cfg.n1 - cfg.d1 + cfg.warmup_k},
                           "config": {"d0": cfg.d0, "d1": cfg.d1,
                                      "n0": cfg.n0, "n1": cfg.n1,
                                      "warmup_k": cfg.warmup_k}}
    return runner.archive


def run_baseline(space, f, budget, algo="Mobo", seed=0, init=6,
                 candidate_pool=512, n_qmc=128,
                 archive_path=None) -> ParetoArchive:
    """Single-fidelity baselines on the shared archive format.

    Random draws the whole budget uniformly from the grid; Mobo runs
    the same EHVI loop as the main driver on one evaluator.
    """
    if algo not in ("Random", "Mobo"):
        raise InputError(f"unknown baseline algorithm {algo!r}")
    if budget < 1 or (algo == "Mobo" and budget < 2):
        raise InputError("budget too small for the chosen baseline")
    runner = _Runner(space, archive_path)
    data = _Dataset(space)

    def do(point, iteration):
        rec, point = runner.evaluate(point, "high", iteration, f)
        data.add(point, rec.throughput, rec.power)

    try:
        if algo == "Random":
            for j, pt in enumerate(space.sample(
                    np.random.default_rng([seed, 0, 1]), budget)):
                do(_snap(space, pt), j)
        else:
            n_init = min(init, budget)
            for pt in space.sample(np.random.default_rng([seed, 0, 1]), n_init):
                do(_snap(space, pt), -1)
            pair = None
            for i in range(budget - n_init):
                if data.dirty or pair is None:
                    pair = data.fit(seed=seed)
                chi = runner.archive.objectives("high")
                pool = _candidate_pool(space, np.random.default_rng([seed, 1, i]),
                                       candidate_pool, data.keys)
                if not pool:
                    pool = [_snap(space, c) for c in space.sample(
                        np.random.default_rng([seed, 1, i]), candidate_pool)]
                X_c = np.array([space.encode(c) for c in pool])
                _, best = ehvi(pair, chi, X_c, runner.archive.ref,
                               seed=int(seed * 1000 + i), n_qmc=n_qmc)
                do(pool[best], i)
    finally:
        runner.close()

    runner.archive.meta = {"algo": algo, "seed": seed, "budget": budget}
    return runner.archive
