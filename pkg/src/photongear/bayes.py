"""Bayesian a-posteriori estimation of the rotation angle on a grid.

The posterior is accumulated in the log domain (an H/V record stream of
10^4 photons underflows any linear-domain product) on a uniform grid over
a bijectivity interval Omega, normalized by log-sum-exp with trapezoid
quadrature weights. Lost records are theta-independent and drop out of the
normalized posterior, so they are discarded up front.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .probes import ProbeSpec, Strategy, detection_probability
from .sampling import KIND_COHERENT, KIND_SINGLE, Dataset


class DegeneratePosteriorError(ValueError):
    """Raised when the data assigns zero probability to every grid node."""


@dataclass
class PosteriorGrid:
    """Discretized posterior over Omega = [omega_lo, omega_hi).

    ``normalized_weights`` are per-node probability masses (trapezoid node
    weight times density) and sum to one; ``log_weights`` keep the raw
    unnormalized log posterior for diagnostics.
    """

    omega_lo: float
    omega_hi: float
    nodes: np.ndarray
    log_weights: np.ndarray
    normalized_weights: np.ndarray

    @property
    def interval_length(self) -> float:
        return self.omega_hi - self.omega_lo

    def to_csv(self, path) -> None:
        lines = ["# photongear-posterior v1", "theta,probability"]
        for t, w in zip(self.nodes, self.normalized_weights):
            lines.append(f"{t!r},{w!r}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class EstimationResult:
    """Point estimate with its posterior uncertainty and resource usage."""

    theta_bar: float
    delta_theta: float
    m_used: int
    xi_used: float
    photons_consumed: int
    interval: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.interval
        if not lo <= self.theta_bar < hi + 1e-12:
            raise ValueError("estimate fell outside its interval")
        if self.delta_theta <= 0.0:
            raise ValueError("uncertainty must be positive")


def likelihood(outcome: str, theta, spec: ProbeSpec):
    """Per-record likelihood p(outcome | theta) with the spec's phase applied.

    Lost records carry likelihood 1: they are theta-independent and cancel
    in the posterior normalization. ``theta`` may be an ndarray.
    """
    if outcome == "Lost":
        theta_arr = np.asarray(theta, dtype=float)
        out = np.ones(theta_arr.shape)
        return float(out) if theta_arr.ndim == 0 else out
    return detection_probability(spec, outcome, theta)


def _count_pair(dataset: Dataset) -> tuple[int, int]:
    """Total (H-like, V-like) counts, the sufficient statistic for the fringe."""
    if dataset.kind == KIND_SINGLE:
        return dataset.label_count("H"), dataset.label_count("V")
    if dataset.kind == KIND_COHERENT:
        return (
            dataset.counts_summary["n_H_total"],
            dataset.counts_summary["n_V_total"],
        )
    raise ValueError(f"no posterior accumulation rule for kind {dataset.kind!r}")


def _log_channel_laws(spec: ProbeSpec, nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """log p(H|theta), log p(V|theta) on the grid, constants dropped."""
    if spec.strategy is Strategy.COHERENT_GEAR:
        # Per-pulse Poisson likelihood: the channel means sum to a
        # theta-independent constant, so only the fringe fractions matter.
        v = spec.visibility
        c2 = np.cos(spec.m * nodes + spec.xi) ** 2
        f_h = v * c2 + (1.0 - v) / 2.0
    else:
        f_h = np.asarray(
            detection_probability(spec, "H", nodes), dtype=float
        ) / spec.transmissivity
    with np.errstate(divide="ignore"):
        return np.log(f_h), np.log1p(-f_h)


def posterior_from_counts(
    n_h: int,
    n_v: int,
    spec: ProbeSpec,
    omega: tuple[float, float],
    grid_size: int = 1024,
    prior: np.ndarray | None = None,
) -> PosteriorGrid:
    """Posterior over Omega given total H/V counts (the sufficient statistic)."""
    lo, hi = float(omega[0]), float(omega[1])
    length = hi - lo
    if not 0.0 < length <= 2.0 * np.pi + 1e-12:
        raise ValueError("Omega must have positive length at most 2*pi")
    if grid_size < 256:
        raise ValueError("grid_size must be at least 256")
    nodes = np.linspace(lo, hi, grid_size)
    log_h, log_v = _log_channel_laws(spec, nodes)
    log_w = np.zeros(grid_size)
    if n_h:
        log_w = log_w + n_h * log_h
    if n_v:
        log_w = log_w + n_v * log_v
    if prior is not None:
        prior = np.asarray(prior, dtype=float)
        if prior.shape != nodes.shape:
            raise ValueError("prior must supply one weight per grid node")
        if np.any(prior < 0.0):
            raise ValueError("prior weights must be non-negative")
        with np.errstate(divide="ignore"):
            log_w = log_w + np.log(prior)
    if not np.any(np.isfinite(log_w)):
        raise DegeneratePosteriorError(
            "every grid node has zero posterior weight; the data contradict "
            "the probability law on this interval"
        )
    step = length / (grid_size - 1)
    trap = np.full(grid_size, step)
    trap[0] = trap[-1] = step / 2.0
    log_mass = log_w + np.log(trap)
    log_norm = float(logsumexp(log_mass))
    masses = np.exp(log_mass - log_norm)
    return PosteriorGrid(
        omega_lo=lo,
        omega_hi=hi,
        nodes=nodes,
        log_weights=log_w,
        normalized_weights=masses,
    )


def posterior(
    dataset: Dataset,
    omega: tuple[float, float],
    grid_size: int = 1024,
    prior: np.ndarray | None = None,
) -> PosteriorGrid:
    """Posterior over Omega for a recorded dataset.

    The H/V fringe likelihood factorizes over records, so only the channel
    totals enter; Lost records are dropped. The prior defaults to uniform
    on Omega.
    """
    n_h, n_v = _count_pair(dataset)
    return posterior_from_counts(n_h, n_v, dataset.spec, omega, grid_size, prior)


def estimate(grid: PosteriorGrid) -> float:
    """Posterior mean of theta (trapezoid quadrature over Omega)."""
    return float(np.sum(grid.nodes * grid.normalized_weights))


def uncertainty(grid: PosteriorGrid, theta_bar: float) -> float:
    """Root mean square posterior deviation from ``theta_bar``."""
    return float(
        np.sqrt(np.sum((grid.nodes - theta_bar) ** 2 * grid.normalized_weights))
    )
