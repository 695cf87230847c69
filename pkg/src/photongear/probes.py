"""Probability laws for rotation-sensing photonic probes.

A q-plate of topological charge q, sandwiched between preparation and
analysis half-wave plates, turns a mechanical rotation by theta into a
polarization rotation by m*theta, where m = 2q +/- 1 is the gear ratio.
Every probe strategy here reduces to a parametric distribution over
detector outcomes:

* single-mode strategies (classical polarization, single-photon gear,
  NOON, gear-NOON) produce one of the labels ``H``, ``V``, ``Lost``;
* the coherent-pulse strategy produces a pair of photocounts (n_H, n_V);
* the entangled-pair strategy produces a coincidence label from
  ``HH, HV, VH, VV`` or one of the loss labels ``LossA, LossB, LossBoth``.

All functions are pure and accept scalar or ndarray angles where noted.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import gammaln


class Strategy(enum.Enum):
    """Probe preparation / detection strategy."""

    CLASSICAL_POLARIZATION = "classical-polarization"
    GEAR_SINGLE_PHOTON = "gear-single-photon"
    NOON_POLARIZATION = "noon-polarization"
    GEAR_NOON = "gear-noon"
    COHERENT_GEAR = "coherent-gear"
    ENTANGLED_PAIR = "entangled-pair"


class BellState(enum.Enum):
    PSI_MINUS = "psi-minus"
    PHI_MINUS = "phi-minus"


SINGLE_MODE_STRATEGIES = frozenset(
    {
        Strategy.CLASSICAL_POLARIZATION,
        Strategy.GEAR_SINGLE_PHOTON,
        Strategy.NOON_POLARIZATION,
        Strategy.GEAR_NOON,
    }
)

SINGLE_PHOTON_LABELS = ("H", "V", "Lost")
COINCIDENCE_LABELS = ("HH", "HV", "VH", "VV")
PAIR_LABELS = COINCIDENCE_LABELS + ("LossA", "LossB", "LossBoth")


def gear_ratio(q: float, hwp_sign: int) -> int:
    """Gear ratio m = 2q + hwp_sign of a q-plate stage.

    ``hwp_sign=+1`` is the configuration with the half-wave plate inserted
    (m = 2q+1); ``hwp_sign=-1`` is the configuration without it (m = 2q-1).
    q must be a non-negative integer or half-integer and the result must be
    a positive integer.
    """
    if hwp_sign not in (1, -1):
        raise ValueError(f"hwp_sign must be +1 or -1, got {hwp_sign!r}")
    if q < 0:
        raise ValueError(f"topological charge must be non-negative, got {q}")
    twice_q = 2.0 * q
    if abs(twice_q - round(twice_q)) > 1e-9:
        raise ValueError(f"q must be an integer or half-integer, got {q}")
    m = int(round(twice_q)) + hwp_sign
    if m < 1:
        raise ValueError(f"gear ratio 2q{hwp_sign:+d} = {m} is below 1")
    return m


@dataclass(frozen=True)
class ProbeSpec:
    """Strategy selector plus all physical parameters of a probe.

    Parameters that are irrelevant to the selected strategy are ignored and
    never validated (a classical-polarization spec may carry any ``q``).

    visibility mixes the ideal law of the single-photon gear and of the
    entangled pair with a flat background; transmissivity is the overall
    survival probability per photon, detection included.
    """

    strategy: Strategy
    q: float = 0.0
    hwp_sign: int = 1
    xi: float = 0.0
    visibility: float = 1.0
    transmissivity: float = 1.0
    n_photons: int = 1
    mean_photons: float = 1.0
    bell_state: BellState = BellState.PSI_MINUS
    q_a: float = 0.0
    q_b: float = 0.0
    hwp_sign_a: int = 1
    hwp_sign_b: int = 1

    def __post_init__(self):
        if not isinstance(self.strategy, Strategy):
            object.__setattr__(self, "strategy", Strategy(self.strategy))
        if not isinstance(self.bell_state, BellState):
            object.__setattr__(self, "bell_state", BellState(self.bell_state))
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility must lie in [0, 1], got {self.visibility}")
        if not 0.0 < self.transmissivity <= 1.0:
            raise ValueError(
                f"transmissivity must lie in (0, 1], got {self.transmissivity}"
            )
        s = self.strategy
        if s in (Strategy.GEAR_SINGLE_PHOTON, Strategy.GEAR_NOON, Strategy.COHERENT_GEAR):
            gear_ratio(self.q, self.hwp_sign)
        if s in (Strategy.NOON_POLARIZATION, Strategy.GEAR_NOON):
            if self.n_photons < 1:
                raise ValueError("n_photons must be a positive integer")
        if s is Strategy.COHERENT_GEAR and self.mean_photons < 0:
            raise ValueError("mean_photons must be non-negative")
        if s is Strategy.ENTANGLED_PAIR:
            gear_ratio(self.q_a, self.hwp_sign_a)
            gear_ratio(self.q_b, self.hwp_sign_b)

    @property
    def m(self) -> int:
        return gear_ratio(self.q, self.hwp_sign)

    @property
    def m_a(self) -> int:
        return gear_ratio(self.q_a, self.hwp_sign_a)

    @property
    def m_b(self) -> int:
        return gear_ratio(self.q_b, self.hwp_sign_b)

    @property
    def fringe_frequency(self) -> int:
        """Oscillation frequency of the H-fringe: p(H) = cos^2(f*theta + xi)."""
        s = self.strategy
        if s is Strategy.CLASSICAL_POLARIZATION:
            return 1
        if s is Strategy.GEAR_SINGLE_PHOTON or s is Strategy.COHERENT_GEAR:
            return self.m
        if s is Strategy.NOON_POLARIZATION:
            return self.n_photons
        if s is Strategy.GEAR_NOON:
            return self.m * self.n_photons
        raise ValueError(f"{s.value} has no single fringe frequency")

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = v.value if isinstance(v, enum.Enum) else v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProbeSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown ProbeSpec fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class ImperfectionModel:
    """Conversion efficiencies of the two q-plate stages plus photon losses."""

    eps_1: float
    eps_2: float
    eta: float = 1.0

    def __post_init__(self):
        for name in ("eps_1", "eps_2"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")


def visibility_from_efficiencies(model: ImperfectionModel) -> float:
    """Fringe visibility induced by imperfect q-plate conversion.

    With conversion efficiencies eps_1, eps_2, the analyzed state is a
    mixture of the ideal rotated state (weight eps_1*eps_2), a flat
    polarization background (weight eps_1(1-eps_2) + (1-eps_1)eps_2), and a
    doubly-unconverted term that is negligible for realistic efficiencies
    and is dropped here. The visibility is the weight of the ideal term
    renormalized over the retained ones, which keeps V inside [0, 1].
    """
    e1, e2 = model.eps_1, model.eps_2
    pure = e1 * e2
    background = e1 * (1.0 - e2) + (1.0 - e1) * e2
    return pure / (pure + background)


def _conditional_h_probability(spec: ProbeSpec, theta):
    """p(H | photon arrived), as a function of theta (scalar or ndarray)."""
    theta = np.asarray(theta, dtype=float)
    phase = spec.fringe_frequency * theta + spec.xi
    ideal = np.cos(phase) ** 2
    if spec.strategy is Strategy.GEAR_SINGLE_PHOTON:
        v = spec.visibility
        return v * ideal + (1.0 - v) / 2.0
    return ideal


def detection_probability(spec: ProbeSpec, outcome: str, theta):
    """Probability of a single-mode detection outcome at rotation theta.

    The outcome space is ``H``, ``V``, ``Lost``: a photon is lost with
    probability 1 - transmissivity independently of theta, otherwise it is
    analyzed as H or V. ``theta`` may be a scalar or an ndarray; the return
    matches.
    """
    if spec.strategy not in SINGLE_MODE_STRATEGIES:
        raise ValueError(
            f"detection_probability applies to single-mode strategies, "
            f"not {spec.strategy.value}"
        )
    if outcome not in SINGLE_PHOTON_LABELS:
        raise ValueError(f"unknown outcome {outcome!r}; expected one of "
                         f"{SINGLE_PHOTON_LABELS}")
    theta_arr = np.asarray(theta, dtype=float)
    eta = spec.transmissivity
    if outcome == "Lost":
        out = np.full(theta_arr.shape, 1.0 - eta)
    else:
        p_h = _conditional_h_probability(spec, theta_arr)
        out = eta * p_h if outcome == "H" else eta * (1.0 - p_h)
    return float(out) if np.isscalar(theta) or theta_arr.ndim == 0 else out


def coherent_count_probability(spec: ProbeSpec, theta: float, n_h: int, n_v: int) -> float:
    """Joint probability of photocounts (n_H, n_V) for a coherent gear pulse.

    The two output polarization modes carry independent Poisson statistics
    with means cos^2(m*theta + xi)*|alpha|^2 and sin^2(m*theta + xi)*|alpha|^2.
    Evaluated in the log domain so large counts do not overflow.
    """
    if spec.strategy is not Strategy.COHERENT_GEAR:
        raise ValueError("coherent_count_probability requires a coherent-gear spec")
    if n_h < 0 or n_v < 0:
        raise ValueError("photocounts must be non-negative")
    mu = spec.mean_photons
    phase = spec.m * theta + spec.xi
    mean_h = mu * math.cos(phase) ** 2
    mean_v = mu * math.sin(phase) ** 2
    log_p = -mu
    for n, mean in ((n_h, mean_h), (n_v, mean_v)):
        if n > 0:
            if mean == 0.0:
                return 0.0
            log_p += n * math.log(mean) - float(gammaln(n + 1))
    return math.exp(log_p)


def entangled_joint_probability(spec: ProbeSpec, theta_a, theta_b, pair_label: str):
    """Joint outcome probability for a polarization-entangled photon pair.

    Both analyzers project onto H/V in their own rotated frames. With
    Delta = m_A*theta_A - m_B*theta_B and Sigma = m_A*theta_A + m_B*theta_B,
    the psi-minus pair correlates as p(HH) = p(VV) = sin^2(Delta)/2 and the
    phi-minus pair as sin^2(Sigma)/2; HV/VH carry the complementary cos^2
    terms. Visibility mixes the ideal four-outcome law with the flat 1/4
    background. Each photon survives with probability eta independently, so
    coincidences carry a factor eta^2 and the loss labels absorb the rest.
    """
    if spec.strategy is not Strategy.ENTANGLED_PAIR:
        raise ValueError("entangled_joint_probability requires an entangled-pair spec")
    if pair_label not in PAIR_LABELS:
        raise ValueError(f"unknown pair label {pair_label!r}; expected one of "
                         f"{PAIR_LABELS}")
    ta = np.asarray(theta_a, dtype=float)
    tb = np.asarray(theta_b, dtype=float)
    eta = spec.transmissivity
    scalar = ta.ndim == 0 and tb.ndim == 0
    if pair_label == "LossA":
        out = np.broadcast_to(np.asarray((1.0 - eta) * eta), np.broadcast_shapes(ta.shape, tb.shape))
        return float(out) if scalar else np.array(out)
    if pair_label == "LossB":
        out = np.broadcast_to(np.asarray(eta * (1.0 - eta)), np.broadcast_shapes(ta.shape, tb.shape))
        return float(out) if scalar else np.array(out)
    if pair_label == "LossBoth":
        out = np.broadcast_to(np.asarray((1.0 - eta) ** 2), np.broadcast_shapes(ta.shape, tb.shape))
        return float(out) if scalar else np.array(out)
    if spec.bell_state is BellState.PSI_MINUS:
        u = spec.m_a * ta - spec.m_b * tb
    else:
        u = spec.m_a * ta + spec.m_b * tb
    sin_half = 0.5 * np.sin(u) ** 2
    cos_half = 0.5 * np.cos(u) ** 2
    ideal = sin_half if pair_label in ("HH", "VV") else cos_half
    v = spec.visibility
    out = eta * eta * (v * ideal + (1.0 - v) / 4.0)
    return float(out) if scalar else out
