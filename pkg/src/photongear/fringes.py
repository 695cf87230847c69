"""Weighted least-squares recovery of visibility, phase, and frequency.

The fringe model is counts = A * [1 + V cos(2 m theta + 2 xi)] / 2. In the
internal parameterization (offset, V cos 2xi, V sin 2xi) the model is
linear for fixed m, so the damped-iteration machinery a nonlinear
parameterization would need collapses to one weighted normal-equation
solve; the frequency is recovered by a discrete scan over integer
candidates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


class FitConvergenceError(RuntimeError):
    """The fit could not produce usable parameters (degenerate data)."""


@dataclass
class FringeScan:
    """Counts (or intensities) of one polarization channel versus set angle.

    ``sigma`` holds per-point standard errors; when omitted, Poisson
    counting errors sqrt(max(count, 1)) are assumed.
    """

    angles: np.ndarray
    counts: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.angles.shape != self.counts.shape or self.angles.ndim != 1:
            raise ValueError("angles and counts must be 1-d arrays of equal length")
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            if self.sigma.shape != self.angles.shape:
                raise ValueError("sigma must match the data shape")
            if np.any(self.sigma <= 0.0):
                raise ValueError("sigma must be positive")

    @property
    def weights_sigma(self) -> np.ndarray:
        if self.sigma is not None:
            return self.sigma
        return np.sqrt(np.maximum(self.counts, 1.0))

    @property
    def span(self) -> float:
        return float(self.angles.max() - self.angles.min())


@dataclass(frozen=True)
class FringeFitResult:
    """Best-fit fringe parameters with curvature-based standard errors."""

    visibility: float
    visibility_err: float
    phase: float
    phase_err: float
    frequency: int
    offset: float
    offset_err: float
    chi_squared: float
    ndof: int

    @property
    def reduced_chi_squared(self) -> float:
        return self.chi_squared / max(self.ndof, 1)


def _check_density(scan: FringeScan, m: int) -> None:
    n = scan.angles.size
    if n < 12:
        raise ValueError("a fringe fit needs at least 12 data points")
    half_period = math.pi / (2.0 * m)
    half_periods = max(scan.span / half_period, 1.0)
    if n < 8.0 * half_periods:
        raise ValueError(
            f"scan too sparse for m = {m}: {n} points over "
            f"{half_periods:.1f} half-periods (need 8 per half-period)"
        )


def _linear_fit(scan: FringeScan, m: int):
    """Weighted solve in (offset, Bc, Bs); returns params, covariance, chi2."""
    theta = scan.angles
    w = 1.0 / scan.weights_sigma
    design = np.column_stack(
        [np.ones_like(theta), np.cos(2.0 * m * theta), np.sin(2.0 * m * theta)]
    )
    a = design * w[:, None]
    b = scan.counts * w
    normal = a.T @ a
    try:
        cov = np.linalg.inv(normal)
    except np.linalg.LinAlgError as exc:
        raise FitConvergenceError(f"singular design matrix for m = {m}") from exc
    params = cov @ (a.T @ b)
    resid = b - a @ params
    chi2 = float(resid @ resid)
    return params, cov, chi2


def fit_fringe(scan: FringeScan, m_fixed: int | None = None,
               m_candidates=None) -> FringeFitResult:
    """Fit the fringe model, scanning the frequency when it is not pinned.

    With ``m_fixed`` the frequency is taken as given; otherwise the best
    integer from ``m_candidates`` (chi-squared scan) is used. Parameter
    errors come from the curvature of the weighted least-squares problem,
    propagated through V = sqrt(Bc^2 + Bs^2)/offset and
    xi = atan2(-Bs, Bc)/2.
    """
    if m_fixed is None:
        if not m_candidates:
            raise ValueError("provide m_fixed or a non-empty candidate set")
        m = frequency_scan(scan, m_candidates)
    else:
        m = int(m_fixed)
        if m < 1:
            raise ValueError("the fringe frequency must be a positive integer")
        _check_density(scan, m)
    params, cov, chi2 = _linear_fit(scan, m)
    offset, b_c, b_s = params
    if offset <= 0.0:
        raise FitConvergenceError(
            f"nonpositive fitted offset {offset:.3g}; the scan carries no fringe"
        )
    amp = math.hypot(b_c, b_s)
    vis = amp / offset
    phase = 0.5 * math.atan2(-b_s, b_c) % math.pi

    # Delta-method propagation through (offset, Bc, Bs) -> (V, xi).
    if amp > 0.0:
        g_v = np.array([-amp / offset**2, b_c / (amp * offset), b_s / (amp * offset)])
        g_p = np.array([0.0, 0.5 * b_s / amp**2, -0.5 * b_c / amp**2])
        vis_err = float(np.sqrt(g_v @ cov @ g_v))
        phase_err = float(np.sqrt(g_p @ cov @ g_p))
    else:
        vis_err = float(np.sqrt((cov[1, 1] + cov[2, 2])) / offset)
        phase_err = math.pi / math.sqrt(12.0)
    return FringeFitResult(
        visibility=float(min(max(vis, 0.0), 1.0)),
        visibility_err=vis_err,
        phase=float(phase),
        phase_err=phase_err,
        frequency=m,
        offset=float(offset),
        offset_err=float(np.sqrt(cov[0, 0])),
        chi_squared=chi2,
        ndof=scan.angles.size - 3,
    )


def frequency_scan(scan: FringeScan, m_candidates) -> int:
    """Integer fringe frequency minimizing the fit chi-squared.

    Candidates too high for the scan density are dropped with a warning.
    Ties (and near-ties within one chi-squared unit) break deterministically
    toward the smaller frequency, with a warning for the ambiguity.
    """
    candidates = sorted(set(int(m) for m in m_candidates))
    if not candidates:
        raise ValueError("the candidate set must not be empty")
    results: list[tuple[int, float]] = []
    for m in candidates:
        if m < 1:
            raise ValueError("fringe frequency candidates must be positive")
        try:
            _check_density(scan, m)
        except ValueError as exc:
            warnings.warn(f"dropping candidate m = {m}: {exc}", stacklevel=2)
            continue
        try:
            _, _, chi2 = _linear_fit(scan, m)
        except FitConvergenceError:
            continue
        results.append((m, chi2))
    if not results:
        raise ValueError("no usable frequency candidate for this scan")
    best_chi2 = min(chi2 for _, chi2 in results)
    ambiguous = sorted(m for m, chi2 in results if chi2 - best_chi2 < 1.0)
    if len(ambiguous) > 1:
        warnings.warn(
            f"ambiguous fringe frequency: candidates {ambiguous} lie within "
            "one chi-squared unit of the best fit",
            stacklevel=2,
        )
    # Numerical ties (constant data fits every frequency equally) resolve
    # toward the smallest candidate.
    tie_eps = 1e-9 * max(best_chi2, 1.0)
    tied = sorted(m for m, chi2 in results if chi2 - best_chi2 <= tie_eps)
    return tied[0]
