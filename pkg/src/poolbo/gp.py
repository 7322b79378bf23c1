"""Exact Gaussian-process surrogates: one independent GP per objective.

Targets are normalized per objective before fitting. Hyperparameters maximize
the log marginal likelihood via bounded multi-start search, with the signal
variance profiled out in closed form at every evaluation. Kernels: isotropic
RBF for dense real features, Tanimoto for binary features.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .seeds import child_rng

logger = logging.getLogger(__name__)

LENGTHSCALE_BOUNDS = (1e-2, 1e3)
SIGNAL_VARIANCE_BOUNDS = (1e-3, 1e3)
BASE_NUGGET = 1e-6
MAX_NUGGET = 1e-2
JITTER_LADDER = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
N_STARTS = 8


class FitError(RuntimeError):
    """Raised when a kernel matrix stays singular through nugget escalation."""


class NumericalError(RuntimeError):
    """Raised when a posterior covariance cannot be factorized."""


@dataclass(frozen=True)
class Dataset:
    """Labeled designs: parallel ids, feature rows, and objective rows.

    `genomes` optionally keeps the raw design strings so downstream pool
    generators can breed from labeled designs; the surrogate ignores it.
    """

    ids: tuple
    features: np.ndarray
    objectives: np.ndarray
    feature_kind: str = "auto"
    genomes: tuple | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        objs = np.asarray(self.objectives, dtype=float)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {feats.shape}")
        if objs.ndim != 2:
            raise ValueError(f"objectives must be 2-d, got shape {objs.shape}")
        if feats.shape[0] != objs.shape[0] or feats.shape[0] != len(self.ids):
            raise ValueError("ids, features, and objectives must have matching length")
        if not np.all(np.isfinite(feats)) or not np.all(np.isfinite(objs)):
            raise ValueError("dataset contains non-finite entries")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("dataset ids must be unique")
        if self.genomes is not None and len(self.genomes) != len(self.ids):
            raise ValueError("one genome per labeled design is required")
        kind = self.feature_kind
        if kind == "auto":
            kind = "binary" if feats.size and np.all((feats == 0) | (feats == 1)) else "dense_real"
        elif kind not in ("binary", "dense_real"):
            raise ValueError(f"unknown feature kind: {self.feature_kind}")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "objectives", objs)
        object.__setattr__(self, "feature_kind", kind)
        if self.genomes is not None:
            object.__setattr__(self, "genomes", tuple(str(g) for g in self.genomes))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def m(self) -> int:
        return self.objectives.shape[1]

    def append(self, ids, features, objectives, genomes=None) -> "Dataset":
        if not len(ids):
            return self
        if (self.genomes is None) != (genomes is None):
            raise ValueError("genomes must be given for all designs or none")
        return Dataset(
            ids=self.ids + tuple(ids),
            features=np.vstack([self.features, np.asarray(features, dtype=float)]),
            objectives=np.vstack([self.objectives, np.asarray(objectives, dtype=float)]),
            feature_kind=self.feature_kind,
            genomes=None if genomes is None else self.genomes + tuple(genomes),
        )


@dataclass(frozen=True)
class GpConfig:
    """Fit settings; lengthscale/signal_variance pin hyperparameters when set.

    Pinned values are on the normalized-target scale.
    """

    kernel: str = "auto"
    lengthscale: float | None = None
    signal_variance: float | None = None
    n_starts: int = N_STARTS
    nugget: float = BASE_NUGGET

    def __post_init__(self):
        if self.kernel not in ("auto", "rbf", "tanimoto"):
            raise ValueError(f"unknown kernel: {self.kernel}")
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")
        if not 0 < self.nugget <= MAX_NUGGET:
            raise ValueError(f"nugget must lie in (0, {MAX_NUGGET}]")


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = (a * a).sum(axis=1)
    bb = (b * b).sum(axis=1)
    d2 = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


def rbf_kernel(a: np.ndarray, b: np.ndarray, lengthscale: float) -> np.ndarray:
    """Unit-variance isotropic RBF kernel matrix."""
    return np.exp(-0.5 * squared_distances(a, b) / lengthscale ** 2)


def tanimoto_kernel(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unit-variance Tanimoto similarity for non-negative (binary) vectors.

    The all-zero pair has similarity 1 so k(x, x) stays constant.
    """
    dots = a @ b.T
    na = (a * a).sum(axis=1)
    nb = (b * b).sum(axis=1)
    denom = na[:, None] + nb[None, :] - dots
    out = np.ones_like(dots, dtype=float)
    nz = denom != 0
    out[nz] = dots[nz] / denom[nz]
    return out


def _escalated_cholesky(base: np.ndarray, start_nugget: float):
    """Cholesky of base + nugget*I, doubling the nugget until it succeeds."""
    nugget = start_nugget
    while nugget <= MAX_NUGGET:
        try:
            return np.linalg.cholesky(base + nugget * np.eye(base.shape[0])), nugget
        except np.linalg.LinAlgError:
            nugget *= 2.0
    raise FitError(f"kernel matrix singular even with nugget {MAX_NUGGET:.0e}")


@dataclass
class _ObjectiveGp:
    kernel: str
    lengthscale: float | None
    sigma2: float          # normalized-scale signal variance
    nugget: float
    out_mean: float
    out_std: float
    alpha: np.ndarray = field(repr=False)
    chol: np.ndarray = field(repr=False)

    @property
    def signal_variance(self) -> float:
        """Signal variance in raw output units."""
        return self.sigma2 * self.out_std ** 2


@dataclass
class GpModel:
    """Independent per-objective exact GPs sharing one training set."""

    data: Dataset
    parts: list

    @property
    def m(self) -> int:
        return len(self.parts)

    def hyperparams(self) -> list:
        return [
            {
                "objective": i,
                "kernel": p.kernel,
                "lengthscale": None if p.lengthscale is None else float(p.lengthscale),
                "signal_variance": float(p.signal_variance),
            }
            for i, p in enumerate(self.parts)
        ]


def _profile_sigma2(chol: np.ndarray, z: np.ndarray, pinned: float | None) -> float:
    if pinned is not None:
        return float(pinned)
    n = z.size
    s = float(z @ cho_solve((chol, True), z))
    return float(np.clip(s / max(n, 1), *SIGNAL_VARIANCE_BOUNDS))


def _lml(chol: np.ndarray, z: np.ndarray, sigma2: float) -> float:
    n = z.size
    s = float(z @ cho_solve((chol, True), z))
    logdet_base = 2.0 * float(np.log(np.diag(chol)).sum())
    return -0.5 * s / sigma2 - 0.5 * (n * np.log(sigma2) + logdet_base) - 0.5 * n * np.log(2.0 * np.pi)


def _fit_objective(X: np.ndarray, y: np.ndarray, kernel: str, config: GpConfig,
                   d2: np.ndarray | None) -> _ObjectiveGp:
    out_mean = float(y.mean())
    out_std = float(y.std())
    if out_std < 1e-12:
        out_std = 1.0
    z = (y - out_mean) / out_std

    state = {"nugget": config.nugget}

    def factor(base):
        chol, nugget = _escalated_cholesky(base, state["nugget"])
        state["nugget"] = nugget
        return chol

    if kernel == "tanimoto":
        chol = factor(tanimoto_kernel(X, X))
        sigma2 = _profile_sigma2(chol, z, config.signal_variance)
        lengthscale = None
    else:
        lo, hi = np.log(LENGTHSCALE_BOUNDS[0]), np.log(LENGTHSCALE_BOUNDS[1])

        def neg_lml(t):
            chol = factor(np.exp(-0.5 * d2 / np.exp(2.0 * t[0])))
            sigma2 = _profile_sigma2(chol, z, config.signal_variance)
            return -_lml(chol, z, sigma2)

        if config.lengthscale is not None:
            lengthscale = float(config.lengthscale)
        else:
            starts = np.log(np.geomspace(*LENGTHSCALE_BOUNDS, config.n_starts))
            best = []
            for t0 in starts:
                res = minimize(neg_lml, x0=[t0], method="L-BFGS-B", bounds=[(lo, hi)])
                best.append((float(res.fun), float(res.x[0])))
            vals = np.array([b[0] for b in best])
            lengthscale = float(np.exp(best[int(np.argmin(vals))][1]))
        chol = factor(rbf_kernel(X, X, lengthscale))
        sigma2 = _profile_sigma2(chol, z, config.signal_variance)

    alpha = cho_solve((chol, True), z)
    return _ObjectiveGp(
        kernel=kernel, lengthscale=lengthscale, sigma2=sigma2, nugget=state["nugget"],
        out_mean=out_mean, out_std=out_std, alpha=alpha, chol=chol,
    )


def fit(data: Dataset, config: GpConfig = GpConfig()) -> GpModel:
    """Fit one exact GP per objective column; deterministic given (data, config)."""
    if data.n < 1:
        raise ValueError("fit requires at least one labeled point")
    kernel = config.kernel
    if kernel == "auto":
        kernel = "tanimoto" if data.feature_kind == "binary" else "rbf"
    d2 = squared_distances(data.features, data.features) if kernel == "rbf" else None
    parts = [
        _fit_objective(data.features, data.objectives[:, j], kernel, config, d2)
        for j in range(data.m)
    ]
    return GpModel(data=data, parts=parts)


def _safe_cholesky(cov: np.ndarray) -> np.ndarray:
    if cov.shape[0] == 0:
        return np.zeros_like(cov)
    if not cov.any():
        # exactly-degenerate posterior: a zero factor reproduces the mean
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    for jitter in JITTER_LADDER:
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(f"covariance not positive definite with jitter up to {JITTER_LADDER[-1]:.0e}")


@dataclass
class Posterior:
    """Joint posterior over a candidate pool.

    `cov` holds one block per objective over the stochastic subset of the
    pool; `stochastic_idx` of None means the full pool is stochastic. Rows
    outside the subset are deterministic at `mean`.
    """

    ids: tuple | None
    mean: np.ndarray
    cov: np.ndarray
    stochastic_idx: np.ndarray | None = None
    chol: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        if self.mean.ndim != 2:
            raise ValueError(f"mean must be 2-d, got shape {self.mean.shape}")
        if self.cov.ndim != 3 or self.cov.shape[0] != self.mean.shape[1]:
            raise ValueError("cov must be one square block per objective")
        u = self.cov.shape[1]
        if self.stochastic_idx is None:
            if u != self.mean.shape[0]:
                raise ValueError("cov block size must match the pool when stochastic_idx is None")
        else:
            self.stochastic_idx = np.asarray(self.stochastic_idx, dtype=int)
            if self.stochastic_idx.size != u:
                raise ValueError("stochastic_idx length must match cov block size")

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    @property
    def m(self) -> int:
        return self.mean.shape[1]

    def _factors(self) -> np.ndarray:
        if self.chol is None:
            self.chol = np.stack([_safe_cholesky(self.cov[j]) for j in range(self.m)])
        return self.chol

    def sample(self, n_samples: int, seed: int) -> np.ndarray:
        """Draw joint samples, shape (n_samples, n, m).

        Sample ell is generated from a stream derived from (seed, ell), so any
        single draw is reproducible in isolation and results do not depend on
        batching.
        """
        if n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        factors = self._factors()
        u = self.cov.shape[1]
        idx = np.arange(self.n) if self.stochastic_idx is None else self.stochastic_idx
        out = np.repeat(self.mean[None, :, :], n_samples, axis=0)
        if u == 0:
            return out
        for ell in range(n_samples):
            zs = child_rng(seed, ell).standard_normal((u, self.m))
            for j in range(self.m):
                out[ell, idx, j] += factors[j] @ zs[:, j]
        return out


def sample_joint(post: Posterior, n_samples: int, seed: int) -> np.ndarray:
    """Joint posterior samples; see Posterior.sample."""
    return post.sample(n_samples, seed)


def _cross_kernels(model: GpModel, Xq: np.ndarray):
    """Base train-query and query-query kernels, shared across objectives when possible."""
    X = model.data.features
    kinds = {p.kernel for p in model.parts}
    shared = {}
    if kinds == {"tanimoto"}:
        shared["cross"] = tanimoto_kernel(Xq, X)
        shared["self"] = tanimoto_kernel(Xq, Xq)
    else:
        shared["d2_cross"] = squared_distances(Xq, X)
        shared["d2_self"] = squared_distances(Xq, Xq)
    return shared


def _objective_blocks(part: _ObjectiveGp, shared: dict):
    if part.kernel == "tanimoto":
        return shared["cross"], shared["self"]
    ls2 = part.lengthscale ** 2
    return np.exp(-0.5 * shared["d2_cross"] / ls2), np.exp(-0.5 * shared["d2_self"] / ls2)


def posterior(model: GpModel, features, ids=None) -> Posterior:
    """Exact joint posterior over query features, one covariance block per objective.

    Covariances are symmetrized and diagonally jittered (1e-8, escalating
    tenfold to at most 1e-4) until they factorize.
    """
    Xq = np.asarray(features, dtype=float)
    if Xq.ndim != 2 or Xq.shape[1] != model.data.d:
        raise ValueError(f"query features must be (n, {model.data.d}), got {Xq.shape}")
    shared = _cross_kernels(model, Xq)
    means, covs, chols = [], [], []
    for part in model.parts:
        rq, rqq = _objective_blocks(part, shared)
        mean_z = rq @ part.alpha
        v = solve_triangular(part.chol, rq.T, lower=True)
        cov_z = part.sigma2 * (rqq - v.T @ v)
        cov = part.out_std ** 2 * cov_z
        cov = 0.5 * (cov + cov.T)
        for jitter in JITTER_LADDER:
            try:
                chol = np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
                cov = cov + jitter * np.eye(cov.shape[0])
                break
            except np.linalg.LinAlgError:
                continue
        else:
            raise NumericalError(
                f"posterior covariance not positive definite with jitter up to {JITTER_LADDER[-1]:.0e}")
        means.append(part.out_mean + part.out_std * mean_z)
        covs.append(cov)
        chols.append(chol)
    return Posterior(
        ids=None if ids is None else tuple(ids),
        mean=np.stack(means, axis=1),
        cov=np.stack(covs),
        chol=np.stack(chols),
    )


def pool_posterior(model: GpModel, features, known_idx, known_values, ids=None) -> Posterior:
    """Pool posterior with already-labeled members held at their observed values.

    Labeled pool rows are deterministic (a noise-free GP interpolates them);
    only the unlabeled block carries covariance, which keeps joint sampling
    over large, mostly-labeled pools cheap.
    """
    Xq = np.asarray(features, dtype=float)
    known_idx = np.asarray(known_idx, dtype=int)
    known_values = np.asarray(known_values, dtype=float).reshape(known_idx.size, model.m)
    mask = np.zeros(Xq.shape[0], dtype=bool)
    mask[known_idx] = True
    open_idx = np.flatnonzero(~mask)
    sub = posterior(model, Xq[open_idx])
    mean = np.empty((Xq.shape[0], model.m))
    mean[open_idx] = sub.mean
    mean[known_idx] = known_values
    return Posterior(
        ids=None if ids is None else tuple(ids),
        mean=mean,
        cov=sub.cov,
        stochastic_idx=open_idx,
        chol=sub.chol,
    )
