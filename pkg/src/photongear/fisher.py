"""Fisher information and Cramer-Rao bounds for every probe strategy.

Closed forms only: the per-photon quantum Fisher information of a gear
probe is 4m^2, losses rescale it by eta, a visibility deficit by V^2, and
polarization analysis extracts all of it except for the angle-dependent
factor C(theta) that appears once V < 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .probes import ProbeSpec, Strategy


@dataclass(frozen=True)
class HeuristicVisibilityModel:
    """Empirical charge dependence of the combined factor V*sqrt(eta).

    The effective factor for gear ratio m is v0*sqrt(eta0)*(1 - gamma*m**delta),
    clipped at zero; v0 and eta0 are the visibility and transmission of the
    plain polarization stage (no q-plate).
    """

    v0: float = 1.0
    eta0: float = 1.0
    gamma: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.v0 <= 1.0:
            raise ValueError("v0 must lie in [0, 1]")
        if not 0.0 < self.eta0 <= 1.0:
            raise ValueError("eta0 must lie in (0, 1]")
        if self.gamma < 0.0:
            raise ValueError("gamma must be non-negative")


#: Charge-dependence parameters fitted to the measured enhancement curve.
FITTED_FALLOFF = HeuristicVisibilityModel(v0=1.0, eta0=1.0, gamma=0.026, delta=0.62)


@dataclass(frozen=True)
class BoundReport:
    """Analytic information quantities and the resulting precision bound."""

    strategy: str
    m: float
    n_photons: float
    nu: int
    visibility: float
    eta: float
    theta: float | None
    qfi_per_photon: float
    cfi_per_photon: float
    crb: float

    CSV_HEADER = "strategy,m,N,nu,V,eta,theta,qfi,cfi,crb"

    def __post_init__(self):
        if self.crb <= 0.0:
            raise ValueError("Cramer-Rao bound must be positive")
        if self.cfi_per_photon > self.qfi_per_photon + 1e-9:
            raise ValueError("classical Fisher information exceeds the quantum one")

    def csv_row(self) -> str:
        theta = "" if self.theta is None else repr(float(self.theta))
        cells = [
            self.strategy,
            repr(float(self.m)),
            repr(float(self.n_photons)),
            str(self.nu),
            repr(float(self.visibility)),
            repr(float(self.eta)),
            theta,
            repr(float(self.qfi_per_photon)),
            repr(float(self.cfi_per_photon)),
            repr(float(self.crb)),
        ]
        return ",".join(cells)


def qfi_single_photon(m: int) -> float:
    """Quantum Fisher information per photon of an ideal gear probe: 4m^2."""
    if m < 1 or int(m) != m:
        raise ValueError(f"gear ratio must be a positive integer, got {m}")
    return 4.0 * m * m


def qfi_with_losses(m: int, eta: float) -> float:
    """Per-photon quantum Fisher information with transmissivity eta: eta*4m^2.

    The lost fraction ends in the vacuum, which carries no angle
    information, so losses only rescale the photon budget.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    return eta * qfi_single_photon(m)


def c_function(m: int, visibility: float, theta: float, xi: float = 0.0) -> float:
    """Angle-dependent saturation factor of the imperfect-probe bound.

    C(theta) = sin^2(2m*theta + 2xi) / (1 - V^2 cos^2(2m*theta + 2xi)),
    with maximum 1 at theta = pi/(4m) + k*pi/(2m) - xi/m. At V = 1 the
    expression degenerates exactly at fringe extrema (0/0); that case is
    rejected rather than silently evaluated.
    """
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    u = 2.0 * m * theta + 2.0 * xi
    s2 = math.sin(u) ** 2
    denom = 1.0 - visibility**2 * (1.0 - s2)
    if denom == 0.0:
        raise ValueError(
            "degenerate sensitivity point: V = 1 at a fringe extremum"
        )
    return s2 / denom


def cfi_polarization(spec: ProbeSpec, theta: float) -> float:
    """Classical Fisher information per detected photon of the H/V analysis.

    Ideal fringes (V = 1) give the constant (2f)^2 with f the fringe
    frequency, matching the quantum bound at every angle; the division by
    p that is singular at fringe extrema cancels analytically and the limit
    is returned. With V < 1 the information is 4f^2 V^2 C(theta).
    """
    if spec.strategy not in (
        Strategy.CLASSICAL_POLARIZATION,
        Strategy.GEAR_SINGLE_PHOTON,
        Strategy.NOON_POLARIZATION,
        Strategy.GEAR_NOON,
    ):
        raise ValueError("cfi_polarization applies to single-mode strategies")
    f = spec.fringe_frequency
    v = spec.visibility if spec.strategy is Strategy.GEAR_SINGLE_PHOTON else 1.0
    if v == 1.0:
        return 4.0 * f * f
    return 4.0 * f * f * v * v * c_function(f, v, theta, spec.xi)


def heuristic_effective_factor(model: HeuristicVisibilityModel, m: int) -> float:
    """Effective V*sqrt(eta) for gear ratio m under the empirical falloff."""
    if m < 1:
        raise ValueError("gear ratio must be at least 1")
    falloff = max(0.0, 1.0 - model.gamma * m**model.delta)
    return model.v0 * math.sqrt(model.eta0) * falloff


def enhancement_ratio(m: int, model: HeuristicVisibilityModel) -> float:
    """Precision gain of the gear strategy over plain polarization.

    The baseline factors v0*sqrt(eta0) cancel in the ratio, leaving
    m*(1 - gamma*m**delta), clipped at zero.
    """
    if m < 1:
        raise ValueError("gear ratio must be at least 1")
    return m * max(0.0, 1.0 - model.gamma * m**model.delta)


def _effective_quantities(spec: ProbeSpec) -> tuple[float, float, float, float]:
    """(m_eff, n_eff, qfi_per_photon, visibility_used) for the bound dispatch."""
    s = spec.strategy
    if s is Strategy.CLASSICAL_POLARIZATION:
        return 1.0, float(spec.n_photons), 4.0, 1.0
    if s is Strategy.GEAR_SINGLE_PHOTON:
        v, eta = spec.visibility, spec.transmissivity
        return float(spec.m), float(spec.n_photons), 4.0 * spec.m**2 * v * v * eta, v
    if s is Strategy.NOON_POLARIZATION:
        n = float(spec.n_photons)
        return 1.0, n, 4.0 * n, 1.0
    if s is Strategy.GEAR_NOON:
        n = float(spec.n_photons)
        return float(spec.m), n, 4.0 * spec.m**2 * n, 1.0
    if s is Strategy.COHERENT_GEAR:
        v, eta = spec.visibility, spec.transmissivity
        return float(spec.m), float(spec.mean_photons), 4.0 * spec.m**2 * v * v * eta, v
    if s is Strategy.ENTANGLED_PAIR:
        # Co-rotated phi-minus pairs are metrologically a two-photon
        # gear-NOON probe with m = (m_A + m_B)/2.
        m_eff = 0.5 * (spec.m_a + spec.m_b)
        return m_eff, 2.0, 4.0 * m_eff**2 * 2.0, 1.0
    raise ValueError(f"no closed-form bound for strategy {s.value}")


def crb(spec: ProbeSpec, nu: int, theta: float | None = None) -> BoundReport:
    """Cramer-Rao lower bound on the angle uncertainty after nu repetitions.

    With theta given and an imperfect single-photon/coherent gear probe the
    bound carries the saturation factor C(theta); with theta omitted the
    theta-optimal bound (C = 1) is reported. All bounds reduce to
    1/sqrt(nu * N * F_per_photon * C).
    """
    if nu < 1:
        raise ValueError("nu must be a positive repetition count")
    m_eff, n_eff, qfi, v = _effective_quantities(spec)
    c_val = 1.0
    if (
        theta is not None
        and v < 1.0
        and spec.strategy in (Strategy.GEAR_SINGLE_PHOTON, Strategy.COHERENT_GEAR)
    ):
        c_val = c_function(spec.m, v, theta, spec.xi)
        if c_val == 0.0:
            raise ValueError(
                "no angle information at a fringe extremum with V < 1; "
                "the bound diverges"
            )
    cfi = qfi * c_val
    bound = 1.0 / math.sqrt(nu * n_eff * cfi)
    return BoundReport(
        strategy=spec.strategy.value,
        m=m_eff,
        n_photons=n_eff,
        nu=nu,
        visibility=spec.visibility,
        eta=spec.transmissivity,
        theta=theta,
        qfi_per_photon=qfi,
        cfi_per_photon=cfi,
        crb=bound,
    )


def coherent_cfi_numeric(
    m: int,
    mean_photons: float,
    theta: float,
    truncation: int | None = None,
) -> float:
    """Classical Fisher information of coherent-gear photocounting, by sum.

    Evaluates sum over (n_H, n_V) of (d p / d theta)^2 / p for the
    product-Poisson count law, truncating both counts at ``truncation``
    (defaults to ceil(10*mean_photons)). Converges to the optimal 4 m^2
    |alpha|^2. Warns when the truncated tail mass exceeds 1e-10.
    """
    if m < 1 or int(m) != m:
        raise ValueError("gear ratio must be a positive integer")
    if mean_photons < 0:
        raise ValueError("mean photon number must be non-negative")
    if truncation is None:
        truncation = max(1, math.ceil(10.0 * mean_photons))
    if truncation < 10.0 * mean_photons:
        raise ValueError("truncation must be at least 10x the mean photon number")
    mu = mean_photons
    if mu == 0.0:
        return 0.0
    a = mu * math.cos(m * theta) ** 2
    b = mu * math.sin(m * theta) ** 2
    k = mu * m * math.sin(2.0 * m * theta)  # dA/dtheta = -k, dB/dtheta = +k
    n = np.arange(truncation + 1)
    log_fact = gammaln(n + 1)

    def _poisson(mean: float) -> np.ndarray:
        if mean == 0.0:
            out = np.zeros(n.size)
            out[0] = 1.0
            return out
        return np.exp(-mean + n * math.log(mean) - log_fact)

    p_h = _poisson(a)
    p_v = _poisson(b)
    tail = 1.0 - p_h.sum() * p_v.sum()
    if tail > 1e-10:
        warnings.warn(
            f"truncated tail mass {tail:.3e} exceeds 1e-10; "
            "increase the truncation",
            stacklevel=2,
        )
    # Score of the joint law: k * (n_V / b - n_H / a); terms with zero mean
    # carry zero probability beyond n = 0 and drop out.
    score_h = np.zeros(n.size) if a == 0.0 else -k * n / a
    score_v = np.zeros(n.size) if b == 0.0 else k * n / b
    score = score_h[:, None] + score_v[None, :]
    joint = p_h[:, None] * p_v[None, :]
    return float(np.sum(joint * score**2))
