"""Gaussian-process surrogate over WL graph features with EI batch acquisition."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.stats import norm

from .arch import (ALL_OPS, CellSpec, WLFeatureVector, canonical_hash,
                   mutate_cell, random_cell, wl_features)

SIGNAL_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)
NOISE_GRID = tuple(np.logspace(-6, -1, 11))


class GPFitError(RuntimeError):
    """Raised when the kernel matrix cannot be factorized at any grid point."""


def wl_kernel(a: WLFeatureVector, b: WLFeatureVector, normalized: bool = True) -> float:
    if a.wl_depth != b.wl_depth:
        raise ValueError("feature vectors have different WL depths")
    k = a.dot(b)
    if not normalized:
        return k
    kaa, kbb = a.dot(a), b.dot(b)
    if kaa == 0.0 or kbb == 0.0:
        raise ValueError("cannot normalize against an empty feature vector")
    return k / math.sqrt(kaa * kbb)


def kernel_matrix(features: list[WLFeatureVector], normalized: bool = True) -> np.ndarray:
    n = len(features)
    K = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            K[i, j] = K[j, i] = wl_kernel(features[i], features[j], normalized)
    return K


@dataclass
class GPModel:
    training_features: list[WLFeatureVector]
    training_scores: np.ndarray
    signal_variance: float
    noise_variance: float
    log_marginal: float
    grid_choice: tuple[float, float]
    _chol: np.ndarray = field(repr=False)
    _alpha: np.ndarray = field(repr=False)

    @property
    def wl_depth(self) -> int:
        return self.training_features[0].wl_depth


def _log_marginal(L: np.ndarray, alpha: np.ndarray, y: np.ndarray) -> float:
    n = len(y)
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L)))
                 - 0.5 * n * math.log(2 * math.pi))


def gp_fit(features: list[WLFeatureVector], scores,
           fixed_hyper: tuple[float, float] | None = None) -> GPModel:
    y = np.asarray(scores, dtype=float)
    if len(features) == 0 or len(features) != len(y):
        raise ValueError("features and scores must be non-empty and equal length")
    if not np.all(np.isfinite(y)):
        raise ValueError("scores must be finite")
    Knorm = kernel_matrix(features)
    # Keep the kernel informative even when all scores coincide.
    sample_var = max(float(np.var(y)), 1e-8)
    if fixed_hyper is not None:
        grid = [fixed_hyper]
    else:
        grid = [(s * sample_var, nv) for s in SIGNAL_GRID for nv in NOISE_GRID]
    best = None
    failures = []
    for signal, noise in grid:
        K = signal * Knorm + noise * np.eye(len(y))
        try:
            c, low = cho_factor(K, lower=True)
        except np.linalg.LinAlgError as exc:
            failures.append(f"signal={signal:g} noise={noise:g}: {exc}")
            continue
        L = np.tril(c)
        alpha = cho_solve((c, low), y)
        lml = _log_marginal(L, alpha, y)
        if best is None or lml > best[0]:
            best = (lml, signal, noise, L, alpha)
    if best is None:
        raise GPFitError("kernel matrix not positive definite at any grid point: "
                         + "; ".join(failures))
    lml, signal, noise, L, alpha = best
    return GPModel(training_features=list(features), training_scores=y,
                   signal_variance=signal, noise_variance=noise,
                   log_marginal=lml, grid_choice=(signal, noise),
                   _chol=L, _alpha=alpha)


def gp_predict(model: GPModel, query: WLFeatureVector) -> tuple[float, float]:
    if query.wl_depth != model.wl_depth:
        raise ValueError("query WL depth does not match the model")
    k_star = model.signal_variance * np.array(
        [wl_kernel(query, f) for f in model.training_features])
    mean = float(k_star @ model._alpha)
    v = solve_triangular(model._chol, k_star, lower=True)
    var = model.signal_variance - float(v @ v)
    if var < -1e-8:
        import logging
        logging.getLogger(__name__).warning(
            "predictive variance %.3e clamped to 0", var)
    return mean, max(var, 0.0)


def expected_improvement(mean: float, variance: float, incumbent_best: float,
                         xi: float = 0.01) -> float:
    if variance < 0:
        raise ValueError("variance must be >= 0")
    gap = mean - incumbent_best - xi
    sigma = math.sqrt(variance)
    if sigma == 0.0:
        return max(0.0, gap)
    z = gap / sigma
    return float(gap * norm.cdf(z) + sigma * norm.pdf(z))


@dataclass
class AcquisitionConfig:
    exploration_margin: float = 0.01
    pool_size: int = 100
    mutation_fraction: float = 0.5
    batch_size: int = 4

    def __post_init__(self):
        if self.pool_size < self.batch_size:
            raise ValueError("pool_size must be >= batch_size")
        if not 0.0 <= self.mutation_fraction <= 1.0:
            raise ValueError("mutation_fraction must be in [0, 1]")


class EmptyPoolError(RuntimeError):
    """All pool candidates were duplicates of already-evaluated cells."""


def select_batch(model: GPModel, archive: list[tuple[CellSpec, float]],
                 cfg: AcquisitionConfig, rng_seed: int) -> list[CellSpec]:
    """Propose a batch by EI over a mutation + random candidate pool.

    `archive` holds (cell, score) pairs of everything already evaluated.
    """
    if not archive:
        raise ValueError("archive must be non-empty")
    rng = random.Random(rng_seed)
    top = [c for c, _ in sorted(archive, key=lambda t: -t[1])[:5]]
    seen = {canonical_hash(c) for c, _ in archive}
    n_mut = round(cfg.pool_size * cfg.mutation_fraction)
    pool: list[CellSpec] = []
    for i in range(cfg.pool_size):
        if i < n_mut:
            cand = mutate_cell(rng.choice(top), rng_seed=rng.randrange(2**32))
        else:
            cand = random_cell(rng.randrange(2**32), ALL_OPS)
        h = canonical_hash(cand)
        if h in seen:
            continue
        seen.add(h)
        pool.append(cand)
    if not pool:
        raise EmptyPoolError("candidate pool empty after deduplication; retry "
                             "with a different seed")
    incumbent = max(score for _, score in archive)
    scored = []
    for idx, cand in enumerate(pool):
        mean, var = gp_predict(model, wl_features(cand, h=model.wl_depth))
        ei = expected_improvement(mean, var, incumbent, cfg.exploration_margin)
        scored.append((-ei, -var, idx, cand))
    scored.sort(key=lambda t: t[:3])
    return [cand for _, _, _, cand in scored[:cfg.batch_size]]
