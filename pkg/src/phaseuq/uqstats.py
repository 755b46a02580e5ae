"""Reliability analytics over Laplacian predictive ensembles.

An ensemble of P per-pixel Laplace distributions (mu_p, sigma_p) is
treated as an equal-weight mixture. This module computes the mixture
mean, the variance decomposition into data and model parts, credibility
maps p_i(eps) = P(|y - mu_hat| <= eps), credible-interval bounds by
bisection, reliability diagrams, and mask-averaged credibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BracketFailure,
    EmptyMask,
    NonFiniteInput,
    NonPositiveSigma,
    ShapeMismatch,
)
from .grid import RealRaster
from .learner import PredictiveEnsemble, PredictiveMap

__all__ = [
    "PredictiveEnsemble",
    "PredictiveMap",
    "UncertaintyMaps",
    "CredibilityMap",
    "ReliabilityBin",
    "ReliabilityDiagram",
    "laplace_cdf",
    "predictive_mean",
    "decompose_uncertainty",
    "credibility_map",
    "credible_bound",
    "reliability_diagram",
    "averaged_credibility",
]


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class UncertaintyMaps:
    """Per-pixel mean and the data/model/total sigma decomposition."""

    mean: RealRaster
    data_sigma: RealRaster
    model_sigma: RealRaster
    total_sigma: RealRaster

    def __post_init__(self):
        shapes = {
            self.mean.shape,
            self.data_sigma.shape,
            self.model_sigma.shape,
            self.total_sigma.shape,
        }
        if len(shapes) != 1:
            raise ShapeMismatch("uncertainty maps must share one shape")
        for name in ("data_sigma", "model_sigma", "total_sigma"):
            if np.any(getattr(self, name).data < 0.0):
                raise NonPositiveSigma(f"{name} must be nonnegative")


@dataclass(frozen=True)
class CredibilityMap:
    """Probability that the true mean lies within +-epsilon of mu_hat."""

    values: RealRaster
    epsilon: float

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0.0):
            raise NonFiniteInput(f"epsilon must be finite >= 0, got {self.epsilon}")
        v = self.values.data
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise NonFiniteInput("credibility values must lie in [0, 1]")


@dataclass(frozen=True)
class ReliabilityBin:
    lo: float
    hi: float  # bin is (lo, hi], pixels at p = 0 join the first bin
    credibility: float  # nan when empty
    accuracy: float  # nan when empty
    count: int
    flagged: bool  # count below min_count; excluded from summaries

    def __post_init__(self):
        if self.count > 0:
            if not (0.0 <= self.credibility <= 1.0 and 0.0 <= self.accuracy <= 1.0):
                raise NonFiniteInput("bin credibility and accuracy must be in [0, 1]")


@dataclass(frozen=True)
class ReliabilityDiagram:
    bins: tuple[ReliabilityBin, ...]
    epsilon: float
    delta_p: float

    def __post_init__(self):
        object.__setattr__(self, "bins", tuple(self.bins))

    @property
    def populated(self) -> tuple[ReliabilityBin, ...]:
        return tuple(b for b in self.bins if not b.flagged)

    def max_gap(self) -> float:
        """Largest |accuracy - credibility| over the unflagged bins."""
        gaps = [abs(b.accuracy - b.credibility) for b in self.populated]
        return max(gaps) if gaps else 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("bin_lo,bin_hi,avg_credibility,accuracy,count\n")
            for b in self.bins:
                fh.write(
                    f"{b.lo:.17g},{b.hi:.17g},{b.credibility:.17g},"
                    f"{b.accuracy:.17g},{b.count}\n"
                )


# ------------------------------------------------------------ internals


def _stacks(ens: PredictiveEnsemble) -> tuple[np.ndarray, np.ndarray]:
    mus = np.stack([m.mu.data for m in ens.members])
    sigmas = np.stack([m.sigma for m in ens.members])
    return mus, sigmas


def _mixture_credibility(mus, sigmas, center, eps):
    # mean over members of F_p(center + eps) - F_p(center - eps)
    hi = laplace_cdf(center + eps, mus, sigmas)
    lo = laplace_cdf(center - eps, mus, sigmas)
    return np.clip((hi - lo).mean(axis=0), 0.0, 1.0)


# ------------------------------------------------------------ operations


def laplace_cdf(y, mu, sigma):
    """CDF of Laplace(mu, sigma) at y; broadcasts over array arguments."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0.0) or not np.all(np.isfinite(sigma)):
        raise NonPositiveSigma("sigma must be finite and > 0")
    r = y - mu
    out = 0.5 + 0.5 * np.sign(r) * (1.0 - np.exp(-np.abs(r) / sigma))
    return float(out) if out.ndim == 0 else out


def predictive_mean(ens: PredictiveEnsemble) -> RealRaster:
    """Equal-weight mixture mean, mu_hat = mean over members of mu_p."""
    mus, _ = _stacks(ens)
    return RealRaster(mus.mean(axis=0), ens.members[0].mu.pitch)


def decompose_uncertainty(ens: PredictiveEnsemble) -> UncertaintyMaps:
    """Split the mixture variance into data and model parts.

    data^2 = mean_p 2 sigma_p^2 (each Laplace has variance 2 sigma^2),
    model^2 = population variance of the member means, and
    total^2 = data^2 + model^2 exactly.
    """
    mus, sigmas = _stacks(ens)
    pitch = ens.members[0].mu.pitch
    mu_hat = mus.mean(axis=0)
    data_var = (2.0 * sigmas**2).mean(axis=0)
    model_var = ((mus - mu_hat) ** 2).mean(axis=0)
    return UncertaintyMaps(
        mean=RealRaster(mu_hat, pitch),
        data_sigma=RealRaster(np.sqrt(data_var), pitch),
        model_sigma=RealRaster(np.sqrt(model_var), pitch),
        total_sigma=RealRaster(np.sqrt(data_var + model_var), pitch),
    )


def credibility_map(ens: PredictiveEnsemble, epsilon: float) -> CredibilityMap:
    """Mixture probability of the interval [mu_hat - eps, mu_hat + eps]."""
    epsilon = float(epsilon)
    if not (np.isfinite(epsilon) and epsilon >= 0.0):
        raise NonFiniteInput(f"epsilon must be finite >= 0, got {epsilon}")
    mus, sigmas = _stacks(ens)
    mu_hat = mus.mean(axis=0)
    values = _mixture_credibility(mus, sigmas, mu_hat, epsilon)
    return CredibilityMap(
        values=RealRaster(values, ens.members[0].mu.pitch), epsilon=epsilon
    )


def credible_bound(
    ens: PredictiveEnsemble, target_p: float, tol: float = 1e-6
) -> RealRaster:
    """Per-pixel interval half-width reaching the target credibility.

    Bisection on the monotone map eps -> credibility, run to absolute
    tolerance tol on eps. Returns the upper end of the final bracket, so
    the reported bound never undershoots the target.
    """
    target_p = float(target_p)
    if not (0.0 <= target_p < 1.0):
        raise NonFiniteInput(f"target_p must be in [0, 1), got {target_p}")
    if not (np.isfinite(tol) and tol > 0.0):
        raise NonFiniteInput(f"tol must be finite > 0, got {tol}")
    mus, sigmas = _stacks(ens)
    pitch = ens.members[0].mu.pitch
    if target_p == 0.0:
        return RealRaster(np.zeros(mus.shape[1:]), pitch)
    mu_hat = mus.mean(axis=0)
    lo = np.zeros(mus.shape[1:])
    hi = 50.0 * sigmas.max(axis=0) + np.abs(mus - mu_hat).max(axis=0)
    if np.any(_mixture_credibility(mus, sigmas, mu_hat, hi) < target_p):
        raise BracketFailure("upper bracket does not reach target credibility")
    steps = int(math.ceil(math.log2(max(float(hi.max()), tol) / tol))) + 1
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        below = _mixture_credibility(mus, sigmas, mu_hat, mid) < target_p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return RealRaster(hi, pitch)


def reliability_diagram(
    ens: PredictiveEnsemble,
    truth: RealRaster,
    epsilon: float,
    delta_p: float = 0.04,
    min_count: int = 100,
) -> ReliabilityDiagram:
    """Bin pixels by credibility and compare against empirical accuracy.

    Pixels land in bins ((m-1) dp, m dp] by their credibility, with
    p = 0 assigned to the first bin. Per bin: the mean credibility, the
    fraction of pixels whose true value lies within +-epsilon of the
    ensemble mean, and the pixel count. Bins with fewer than min_count
    pixels are flagged and left out of summary statistics.
    """
    n_bins = round(1.0 / delta_p)
    if not math.isclose(n_bins * delta_p, 1.0, rel_tol=0.0, abs_tol=1e-12):
        raise NonFiniteInput(f"1/delta_p must be an integer, got {delta_p}")
    mus, sigmas = _stacks(ens)
    if truth.shape != mus.shape[1:]:
        raise ShapeMismatch(
            f"truth shape {truth.shape} does not match ensemble {mus.shape[1:]}"
        )
    cmap = credibility_map(ens, epsilon)
    p = cmap.values.data.ravel()
    mu_hat = mus.mean(axis=0).ravel()
    hit = np.abs(mu_hat - truth.data.ravel()) <= epsilon

    idx = np.ceil(p / delta_p).astype(int)  # (lo, hi] binning
    idx[idx < 1] = 1  # p = 0 joins the first bin
    idx[idx > n_bins] = n_bins
    idx -= 1
    counts = np.bincount(idx, minlength=n_bins)
    p_sum = np.bincount(idx, weights=p, minlength=n_bins)
    hit_sum = np.bincount(idx, weights=hit.astype(float), minlength=n_bins)

    bins = []
    for m in range(n_bins):
        c = int(counts[m])
        cred = p_sum[m] / c if c else math.nan
        acc = hit_sum[m] / c if c else math.nan
        bins.append(
            ReliabilityBin(
                lo=m * delta_p,
                hi=(m + 1) * delta_p,
                credibility=cred,
                accuracy=acc,
                count=c,
                flagged=c < min_count,
            )
        )
    return ReliabilityDiagram(bins=tuple(bins), epsilon=float(epsilon), delta_p=float(delta_p))


def averaged_credibility(cmap: CredibilityMap, mask: np.ndarray) -> float:
    """Mean credibility over the masked pixels."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != cmap.values.shape:
        raise ShapeMismatch(
            f"mask shape {mask.shape} does not match map {cmap.values.shape}"
        )
    if not mask.any():
        raise EmptyMask("mask selects no pixels")
    return float(cmap.values.data[mask].mean())
