"""Gaussian-process regression (Matern 5/2) and Expected-Improvement search.

The box minimizer is deliberately simple and fully deterministic given its
seed: a fixed number of uniform initial evaluations, then one acquisition per
iteration chosen by maximizing EI over a fresh batch of uniform candidates.
Kernel hyperparameters are fixed from the initial design (median-heuristic
lengthscale, signal variance from the observed spread) rather than optimized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

SQRT5 = np.sqrt(5.0)


class GPError(RuntimeError):
    pass


def matern52(X1, X2, lengthscale: float, signal_var: float) -> np.ndarray:
    """Matern nu=5/2 kernel matrix between two point sets."""
    d = np.sqrt(np.maximum(
        np.sum(X1 * X1, axis=1)[:, None]
        + np.sum(X2 * X2, axis=1)[None, :]
        - 2.0 * X1 @ X2.T, 0.0))
    r = d / lengthscale
    return signal_var * (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-SQRT5 * r)


def median_lengthscale(X) -> float:
    """Median pairwise distance; falls back to 1.0 for degenerate designs."""
    X = np.asarray(X, dtype=float)
    if len(X) < 2:
        return 1.0
    diff = X[:, None, :] - X[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    vals = d[np.triu_indices(len(X), k=1)]
    vals = vals[vals > 0]
    if len(vals) == 0:
        return 1.0
    return float(np.median(vals))


@dataclass
class GaussianProcess:
    X: np.ndarray
    y: np.ndarray
    lengthscale: float
    signal_var: float
    noise_var: float
    mean: float = 0.0
    _chol: np.ndarray = field(default=None, repr=False)
    _alpha: np.ndarray = field(default=None, repr=False)


def gp_fit(X, y, lengthscale: float = None, signal_var: float = None,
           noise_var: float = 1e-6, max_jitter_doublings: int = 20
           ) -> GaussianProcess:
    """Fit the posterior; jitter is escalated until Cholesky succeeds."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(X) != len(y) or len(y) == 0:
        raise GPError(f"need matching non-empty X ({len(X)}) and y ({len(y)})")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise GPError("non-finite training data")
    if lengthscale is None:
        lengthscale = median_lengthscale(X)
    if signal_var is None:
        signal_var = float(np.var(y))
        if signal_var <= 0.0:
            signal_var = 1.0
    mean = float(np.mean(y))
    K = matern52(X, X, lengthscale, signal_var)
    jitter = noise_var
    for _ in range(max_jitter_doublings + 1):
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(len(X)))
            break
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-12)
    else:
        raise GPError("Cholesky factorization failed even at maximum jitter")
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, y - mean))
    return GaussianProcess(X=X, y=y, lengthscale=lengthscale,
                           signal_var=signal_var, noise_var=jitter,
                           mean=mean, _chol=L, _alpha=alpha)


def gp_predict(gp: GaussianProcess, x):
    """Posterior mean and standard deviation at query points.

    Accepts a single point ``(d,)`` or a batch ``(n, d)``; std is clamped at
    zero against round-off.
    """
    xq = np.asarray(x, dtype=float)
    single = xq.ndim == 1
    Xq = xq[None, :] if single else xq
    Ks = matern52(Xq, gp.X, gp.lengthscale, gp.signal_var)
    mu = gp.mean + Ks @ gp._alpha
    v = np.linalg.solve(gp._chol, Ks.T)
    var = gp.signal_var - np.sum(v * v, axis=0)
    std = np.sqrt(np.maximum(var, 0.0))
    if single:
        return float(mu[0]), float(std[0])
    return mu, std


def expected_improvement(mu, std, best_so_far: float, xi: float = 0.01):
    """EI for minimization: expected drop below ``best_so_far - xi``."""
    mu = np.asarray(mu, dtype=float)
    std = np.asarray(std, dtype=float)
    imp = best_so_far - mu - xi
    safe_std = np.where(std > 0.0, std, 1.0)
    z = imp / safe_std
    ei = np.where(std > 0.0, imp * norm.cdf(z) + std * norm.pdf(z),
                  np.maximum(imp, 0.0))
    return ei if ei.ndim else float(ei)


def expected_improvement_at(gp: GaussianProcess, x, best_so_far: float,
                            xi: float = 0.01):
    mu, std = gp_predict(gp, x)
    return expected_improvement(mu, std, best_so_far, xi)


@dataclass
class AcquisitionConfig:
    xi: float = 0.01
    n_init: int = 10
    n_iter: int = 30
    candidates_per_step: int = 2048
    noise_var: float = 1e-6

    def __post_init__(self):
        if self.xi < 0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")
        if self.n_init < 1 or self.n_iter < 1:
            raise ValueError("n_init and n_iter must be >= 1")

    @property
    def budget(self) -> int:
        return self.n_init + self.n_iter


@dataclass
class BOResult:
    best_x: np.ndarray
    best_y: float
    X: np.ndarray  # every evaluated point, in evaluation order
    y: np.ndarray  # raw objective values (+inf where non-finite)


def bo_minimize(objective, box, acq_cfg: AcquisitionConfig, seed) -> BOResult:
    """Minimize a black-box function over an axis-aligned box.

    ``box`` is a (d, 2) array of [low, high] bounds.  Performs exactly
    ``n_init + n_iter`` objective evaluations; non-finite objective values are
    recorded as +inf and excluded from the surrogate.
    """
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2:
        raise ValueError(f"box must have shape (d, 2), got {box.shape}")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("box must be non-degenerate (high > low per dim)")
    rng = np.random.default_rng(seed)
    d = box.shape[0]

    def eval_at(x):
        val = float(objective(x))
        return val if np.isfinite(val) else np.inf

    X = list(rng.uniform(box[:, 0], box[:, 1], size=(acq_cfg.n_init, d)))
    y = [eval_at(x) for x in X]

    # hyperparameters frozen from the initial design
    init_arr = np.array(X)
    finite0 = np.isfinite(y)
    lengthscale = median_lengthscale(init_arr[finite0] if finite0.any()
                                     else init_arr)
    y0 = np.array(y)[finite0]
    signal_var = float(np.var(y0)) if len(y0) > 1 and np.var(y0) > 0 else 1.0

    for _ in range(acq_cfg.n_iter):
        arrX = np.array(X)
        arry = np.array(y)
        finite = np.isfinite(arry)
        cands = rng.uniform(box[:, 0], box[:, 1],
                            size=(acq_cfg.candidates_per_step, d))
        if finite.any():
            gp = gp_fit(arrX[finite], arry[finite], lengthscale=lengthscale,
                        signal_var=signal_var, noise_var=acq_cfg.noise_var)
            best = float(np.min(arry[finite]))
            mu, std = gp_predict(gp, cands)
            ei = expected_improvement(mu, std, best, acq_cfg.xi)
            pick = int(np.argmax(ei))
        else:
            pick = 0
        x_next = cands[pick]
        X.append(x_next)
        y.append(eval_at(x_next))

    arrX = np.array(X)
    arry = np.array(y)
    finite = np.isfinite(arry)
    if finite.any():
        ibest = int(np.flatnonzero(finite)[np.argmin(arry[finite])])
    else:
        ibest = 0
    return BOResult(best_x=arrX[ibest], best_y=float(arry[ibest]),
                    X=arrX, y=arry)
