"""Line fitting, least squares and the two distribution tests the pipeline uses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .rng import RANSAC, stream


class DegenerateInputError(ValueError):
    pass


class ConsensusError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LineFit:
    slope: float
    intercept: float
    r2: float
    inlier_mask: np.ndarray = field(repr=False)

    @property
    def n_inliers(self) -> int:
        return int(np.count_nonzero(self.inlier_mask))

    @property
    def inlier_fraction(self) -> float:
        return self.n_inliers / max(len(self.inlier_mask), 1)

    def predict(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    def summary(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "n_pairs": int(len(self.inlier_mask)),
            "n_inliers": self.n_inliers,
            "inlier_fraction": self.inlier_fraction,
        }


def _xy(pairs) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(pairs, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 2:
        raise DegenerateInputError(f"expected (n, 2) pairs, got shape {a.shape}")
    return a[:, 0], a[:, 1]


def r_squared(y: np.ndarray, yhat: np.ndarray) -> float:
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else -math.inf
    return 1.0 - ss_res / ss_tot


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = float(np.dot(dx, dx))
    if sxx == 0.0:
        raise DegenerateInputError("all x values are equal")
    slope = float(np.dot(dx, y - ym)) / sxx
    return slope, float(ym - slope * xm)


def ols_line(pairs) -> LineFit:
    x, y = _xy(pairs)
    if len(x) < 2:
        raise DegenerateInputError("need at least 2 pairs")
    slope, intercept = _ols(x, y)
    return LineFit(slope, intercept, r_squared(y, slope * x + intercept),
                   np.ones(len(x), dtype=bool))


def default_threshold(y: np.ndarray, fraction: float = 0.1) -> float:
    q75, q25 = np.percentile(y, [75, 25])
    return fraction * float(q75 - q25)


def _residuals(x, y, slope, intercept, relative):
    pred = slope * x + intercept
    res = np.abs(y - pred)
    if relative:
        res = np.where(pred > 0, res / np.where(pred > 0, pred, 1.0), np.inf)
    return res


def ransac_line(pairs, iterations: int = 500, inlier_threshold: float | None = None,
                seed: int = 0, chunk: int = 64, refine: int = 0,
                relative: bool = False) -> LineFit:
    """RANSAC over 2-point line hypotheses, refit by OLS on the best consensus set.

    Residuals are absolute vertical distances, or with ``relative=True`` the
    vertical distance divided by the predicted y (for data whose spread grows
    in proportion to y).  ``inlier_threshold=None`` uses 10% of the
    interquartile range of y.  ``refine`` extra rounds re-select inliers around
    the refit line.  R² is reported over inliers only.
    """
    x, y = _xy(pairs)
    n = len(x)
    if n < 2:
        raise DegenerateInputError("need at least 2 pairs")
    thr = default_threshold(y) if inlier_threshold is None else float(inlier_threshold)
    min_consensus = max(2, math.ceil(0.2 * n))

    rng = stream(seed, RANSAC)
    i = rng.integers(0, n, size=iterations)
    j = (i + rng.integers(1, n, size=iterations)) % n  # j != i
    dx = x[j] - x[i]
    ok = dx != 0
    slopes = np.where(ok, (y[j] - y[i]) / np.where(ok, dx, 1.0), 0.0)
    icepts = y[i] - slopes * x[i]

    best_count, best = -1, None
    for s in range(0, iterations, chunk):
        sl = slice(s, s + chunk)
        res = _residuals(x, y, slopes[sl, None], icepts[sl, None], relative)
        counts = np.count_nonzero(res <= thr, axis=1)
        counts[~ok[sl]] = -1
        k = int(np.argmax(counts))
        if counts[k] > best_count:
            best_count = int(counts[k])
            best = s + k
    if best is None or best_count < min_consensus:
        raise ConsensusError(
            f"best consensus {max(best_count, 0)} < required {min_consensus} of {n} pairs")

    mask = _residuals(x, y, slopes[best], icepts[best], relative) <= thr
    try:
        slope, intercept = _ols(x[mask], y[mask])
    except DegenerateInputError:
        raise ConsensusError("consensus set has no x spread") from None
    for _ in range(refine):
        new = _residuals(x, y, slope, intercept, relative) <= thr
        if np.count_nonzero(new) < min_consensus or np.array_equal(new, mask):
            break
        mask = new
        slope, intercept = _ols(x[mask], y[mask])
    r2 = r_squared(y[mask], slope * x[mask] + intercept)
    return LineFit(slope, intercept, r2, mask)


def lstsq_through_constraints(rows: Sequence[tuple[Sequence[float], float]]
                              ) -> tuple[np.ndarray, float]:
    """Least-squares solution of ``coeffs . theta = rhs`` over all rows, plus its R²."""
    A = np.array([np.atleast_1d(np.asarray(c, dtype=float)) for c, _ in rows])
    b = np.array([float(r) for _, r in rows])
    if A.ndim != 2 or A.shape[0] < A.shape[1]:
        raise DegenerateInputError(f"need at least as many rows as unknowns, got {A.shape}")
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise DegenerateInputError("design matrix is rank deficient")
    theta, *_ = np.linalg.lstsq(A, b, rcond=None)
    return theta, r_squared(b, A @ theta)


# --- Shapiro-Wilk (AS R94 coefficients and Royston's p-value transform) -----

_C1 = (0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.544, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(cc, x):
    return sum(c * x**k for k, c in enumerate(cc))


def swilk_coefficients(n: int) -> np.ndarray:
    """Full antisymmetric weight vector for sorted samples (sum of squares = 1)."""
    if not 3 <= n <= 5000:
        raise ValueError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    half = n // 2
    if n == 3:
        low = np.array([-math.sqrt(0.5)])
    else:
        m = ndtri((np.arange(1, half + 1) - 0.375) / (n + 0.25))  # negative
        summ2 = 2.0 * float(np.sum(m**2))
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        low = m / ssumm2  # placeholder, overwritten below
        a1 = -_poly(_C1, rsn) + m[0] / ssumm2
        if n > 5:
            a2 = -_poly(_C2, rsn) + m[1] / ssumm2
            fac = math.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2)
                            / (1 - 2 * a1**2 - 2 * a2**2))
            low = m / fac
            low[0], low[1] = a1, a2
        else:
            fac = math.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * a1**2))
            low = m / fac
            low[0] = a1
    a = np.zeros(n)
    a[:half] = low
    a[n - half:] = -low[::-1]
    return a


def _swilk_pvalue(w: np.ndarray, n: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if n == 3:
        return np.clip(6.0 / math.pi * (np.arcsin(np.sqrt(w)) - math.pi / 3.0), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        y = np.log1p(-np.minimum(w, 1.0))
    if n <= 11:
        gamma = _poly(_G, n)
        over = y >= gamma
        y = -np.log(np.where(over, 1.0, gamma - y))
        m, s = _poly(_C3, n), math.exp(_poly(_C4, n))
        p = ndtr(-(y - m) / s)
        return np.where(over, 1e-99, p)
    ln = math.log(n)
    m, s = _poly(_C5, ln), math.exp(_poly(_C6, ln))
    return ndtr(-(y - m) / s)


def shapiro_wilk_columns(samples: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Shapiro-Wilk over many samples of equal length.

    Returns ``(W, p)`` arrays; zero-variance samples yield NaN for both.
    """
    x = np.moveaxis(np.asarray(samples, dtype=np.float64), axis, 0)
    n = x.shape[0]
    a = swilk_coefficients(n)
    xs = np.sort(x, axis=0)
    xs = xs - xs.mean(axis=0)
    ss = np.sum(xs**2, axis=0)
    num = np.tensordot(a, xs, axes=(0, 0)) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(ss > 0, np.minimum(num / np.where(ss > 0, ss, 1.0), 1.0), np.nan)
    p = np.where(np.isnan(w), np.nan, _swilk_pvalue(np.nan_to_num(w, nan=1.0), n))
    return w, p


def shapiro_wilk(samples) -> tuple[float, float]:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if not 3 <= x.size <= 5000:
        raise ValueError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {x.size}")
    if np.ptp(x) == 0:
        raise DegenerateInputError("zero-variance sample")
    w, p = shapiro_wilk_columns(x[:, None])
    return float(w[0]), float(p[0])


# --- Kolmogorov-Smirnov ----------------------------------------------------

def kolmogorov_sf(lam: float) -> float:
    """Survival function of the limiting Kolmogorov distribution."""
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        # Jacobi-theta form converges fast for small arguments
        t = math.pi**2 / (8.0 * lam * lam)
        cdf = math.sqrt(2 * math.pi) / lam * sum(
            math.exp(-(2 * k - 1) ** 2 * t) for k in range(1, 8))
        return min(max(1.0 - cdf, 0.0), 1.0)
    s = sum((-1) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam) for k in range(1, 101))
    return min(max(2.0 * s, 0.0), 1.0)


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample KS statistic and asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise DegenerateInputError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    d = float(np.max(np.abs(np.searchsorted(a, grid, side="right") / n
                            - np.searchsorted(b, grid, side="right") / m)))
    en = math.sqrt(n * m / (n + m))
    return d, kolmogorov_sf(en * d)
