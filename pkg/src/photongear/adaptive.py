"""Three-step concatenated adaptive estimation over the full circle.

Step 1 runs the plain polarization probe (m = 1) on Omega_1 = [0, pi/2);
its estimate is four-fold degenerate over [0, 2*pi). Each later step j
raises the gear ratio, adapts the input phase so the running estimate sits
at a point of maximal fringe sensitivity, re-estimates on a bijectivity
interval of length T_j = pi/(2 m_j) centered on the running estimate, and
prunes the degenerate candidates by their likelihood under the new data.

Polarization fringes are invariant under a half-turn of the stage
(cos^2 is pi-periodic and every gear ratio is an integer), so candidates
that differ by exactly pi stay exactly tied at every step. The protocol
reports such residual twins through the candidate set and the ``ambiguous``
flag instead of silently picking one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bayes import EstimationResult, estimate, posterior, uncertainty
from .probes import ProbeSpec, Strategy
from .sampling import Dataset, sample_single_photons, subseed

TWO_PI = 2.0 * math.pi

#: Gear ratios of the available q-plate devices (detuned plate gives m = 1).
DEVICE_CHARGES = (1, 2, 5, 7, 9, 11, 21, 31, 51, 101)

#: Default width of the log-likelihood window used to prune candidates.
PRUNE_WINDOW_NATS = 10.0


class ResolutionConstraintError(RuntimeError):
    """A step's bijectivity interval is narrower than the running precision."""


@dataclass(frozen=True)
class StepPlan:
    step_index: int
    m: int
    budget: int
    xi: float
    omega: tuple[float, float]

    @property
    def interval_length(self) -> float:
        return math.pi / (2.0 * self.m)


@dataclass(frozen=True)
class StepResult:
    plan: StepPlan
    estimation: EstimationResult
    candidates_after: tuple[float, ...]
    fallback_fired: bool
    lost_records: int


@dataclass(frozen=True)
class ProtocolConfig:
    budgets: tuple[int, int, int]
    available_m: tuple[int, ...] = DEVICE_CHARGES
    visibility: float = 1.0
    transmissivity: float = 1.0
    grid_size: int = 1024
    prune_window: float = PRUNE_WINDOW_NATS
    charges: tuple[int, int, int] | None = None  # explicit override of the planner


@dataclass(frozen=True)
class ProtocolResult:
    charges: tuple[int, int, int]
    steps: tuple[StepResult, ...]
    theta_hat: float
    delta_theta: float
    candidates: tuple[float, ...]
    ambiguous: bool
    photons_consumed: int


def plan_charges(
    m_1_budget: int, m_2_budget: int, available_m
) -> tuple[int, int, int]:
    """Pick the three gear ratios from the available device set.

    The first step always runs at m = 1 (detuned plate). The ideal next
    charge is floor(m_prev * pi * sqrt(budget_prev)); the planner takes the
    largest available ratio not exceeding it, and the sequence must be
    strictly increasing.
    """
    available = sorted(set(int(m) for m in available_m))
    if 1 not in available:
        raise ValueError("the available charge set must contain m = 1")
    if m_1_budget < 1 or m_2_budget < 1:
        raise ValueError("step budgets must be positive")
    charges = [1]
    for budget in (m_1_budget, m_2_budget):
        prev = charges[-1]
        ideal = math.floor(prev * math.pi * math.sqrt(budget))
        feasible = [m for m in available if prev < m <= ideal]
        if not feasible:
            raise ValueError(
                f"no available gear ratio in ({prev}, {ideal}]; "
                "increase the budget or extend the device set"
            )
        charges.append(max(feasible))
    return tuple(charges)


def adapt_phase(m_j: int, theta_prev: float) -> float:
    """Input phase placing ``theta_prev`` at a point of maximal sensitivity.

    xi_j = pi/4 - m_j * theta_prev, reduced modulo pi (the fringe phase is
    only defined modulo a half turn). Step 1 has no previous estimate and
    uses xi = 0.
    """
    return (math.pi / 4.0 - m_j * theta_prev) % math.pi


def candidates_step1(theta_bar_1: float) -> tuple[float, ...]:
    """The four angles on [0, 2*pi) consistent with a step-1 estimate."""
    if not 0.0 <= theta_bar_1 < math.pi / 2.0:
        raise ValueError("the step-1 estimate must lie in [0, pi/2)")
    raw = (
        theta_bar_1,
        math.pi - theta_bar_1,
        math.pi + theta_bar_1,
        TWO_PI - theta_bar_1,
    )
    out: list[float] = []
    for c in raw:
        c = c % TWO_PI
        if not any(abs(c - o) < 1e-12 for o in out):
            out.append(c)
    return tuple(sorted(out))


def step_log_likelihood(dataset: Dataset, spec: ProbeSpec, theta: float) -> float:
    """Total log-likelihood of a step's H/V counts at a candidate angle."""
    phase = spec.fringe_frequency * theta + spec.xi
    p_h = spec.visibility * math.cos(phase) ** 2 + (1.0 - spec.visibility) / 2.0
    n_h = dataset.label_count("H")
    n_v = dataset.label_count("V")
    total = 0.0
    for n, p in ((n_h, p_h), (n_v, 1.0 - p_h)):
        if n:
            if p <= 0.0:
                return -math.inf
            total += n * math.log(p)
    return total


def prune_candidates(
    candidates,
    step_dataset: Dataset,
    spec_j: ProbeSpec,
    window: float = PRUNE_WINDOW_NATS,
) -> tuple[float, ...]:
    """Retain the candidates whose likelihood is within ``window`` of the best.

    Exact ties (half-turn twins, or a fully symmetric phase choice) are all
    retained; disambiguation is the caller's concern.
    """
    cands = tuple(candidates)
    if not cands:
        raise ValueError("the candidate set must not be empty")
    scores = [step_log_likelihood(step_dataset, spec_j, c) for c in cands]
    best = max(scores)
    if not math.isfinite(best):
        return cands
    kept = [c for c, s in zip(cands, scores) if s >= best - window]
    return tuple(kept)


def symmetry_fallback(xi_planned: float, theta_prev: float, interval_length: float) -> float:
    """Break the reflection symmetry left by an unlucky running estimate.

    When ``theta_prev`` sits within interval_length/20 of a multiple of
    interval_length/2, the adapted phase leaves all degenerate candidates
    with identical fringe values. The fallback offsets the phase by a
    quarter of the forbidden period (m_j * T_j / 4 = pi/8), trading some
    per-probe resolution for a broken symmetry. Otherwise the planned
    phase is returned unchanged.
    """
    half = interval_length / 2.0
    distance = abs(theta_prev) % half
    distance = min(distance, half - distance)
    if distance < interval_length / 20.0:
        return (xi_planned + math.pi / 8.0) % math.pi
    return xi_planned


def check_resolution_constraint(interval_length: float, delta_prev: float) -> bool:
    """True when the step's bijectivity interval covers the running precision."""
    return interval_length >= delta_prev


def _gear_spec(m: int, xi: float, visibility: float, eta: float) -> ProbeSpec:
    # hwp_sign = +1 gives m = 2q+1, so q = (m-1)/2 (half-integers allowed).
    return ProbeSpec(
        strategy=Strategy.GEAR_SINGLE_PHOTON,
        q=(m - 1) / 2.0,
        hwp_sign=1,
        xi=xi,
        visibility=visibility,
        transmissivity=eta,
    )


def _bijectivity_cell(m: int, xi: float, angle: float) -> tuple[float, float]:
    """The fringe bijectivity cell containing ``angle``.

    cos^2(m*theta + xi) is invertible between consecutive extrema, i.e. on
    intervals where the argument spans [k*pi/2, (k+1)*pi/2].
    """
    cell = math.floor((m * angle + xi) / (math.pi / 2.0))
    lo = (cell * math.pi / 2.0 - xi) / m
    return lo, lo + math.pi / (2.0 * m)


def _refine_candidate(dataset, spec, candidate, grid_size):
    """Re-estimate a candidate on its own bijectivity cell.

    The adapted phase centers the tracked candidate in its cell, but mirror
    candidates generally sit off-center; estimating on the cell that
    contains them keeps the likelihood single-valued there.
    """
    grid = posterior(
        dataset, _bijectivity_cell(spec.m, spec.xi, candidate), grid_size
    )
    theta_bar = estimate(grid)
    return theta_bar, uncertainty(grid, theta_bar)


def run_protocol(true_theta: float, config: ProtocolConfig, seed: int) -> ProtocolResult:
    """Execute the three concatenated estimation steps.

    Step datasets draw their seeds from ``SeedSequence(seed, spawn_key=(j,))``.
    Surviving candidates are re-estimated on their own bijectivity
    intervals after each step, so the running estimate follows whichever
    candidate the data favor. An unresolved candidate set (in particular
    the always-tied half-turn twin) is flagged, never silently dropped.
    """
    m_1_budget, m_2_budget, m_3_budget = config.budgets
    if min(config.budgets) < 1:
        raise ValueError("all step budgets must be positive")
    if config.charges is not None:
        charges = tuple(config.charges)
        if list(charges) != sorted(set(charges)) or charges[0] != 1:
            raise ValueError("explicit charges must be strictly increasing from m = 1")
    else:
        charges = plan_charges(m_1_budget, m_2_budget, config.available_m)
    if not (
        m_1_budget <= 10.0 * math.sqrt(m_2_budget)
        and math.sqrt(m_2_budget) <= 10.0 * m_3_budget**0.25
    ):
        warnings.warn(
            "step budgets stray far from M1 ~ sqrt(M2) ~ M3**(1/4); asymptotic "
            "saturation of the final bound may be slow",
            stacklevel=2,
        )

    steps: list[StepResult] = []
    candidates: tuple[float, ...] = ()
    cand_scores: list[float] = []
    theta_prev = 0.0
    delta_prev = math.inf
    total_detected = 0

    for j, (m_j, budget) in enumerate(zip(charges, config.budgets), start=1):
        length = math.pi / (2.0 * m_j)
        fallback = False
        if j == 1:
            xi_j = 0.0
            omega = (0.0, math.pi / 2.0)
        else:
            if not check_resolution_constraint(length, delta_prev):
                raise ResolutionConstraintError(
                    f"step {j}: bijectivity interval {length:.3g} rad is narrower "
                    f"than the running uncertainty {delta_prev:.3g} rad; raise the "
                    f"step-{j - 1} budget or choose a smaller gear ratio"
                )
            planned = adapt_phase(m_j, theta_prev)
            xi_j = symmetry_fallback(planned, theta_prev, length)
            fallback = xi_j != planned
            omega = (theta_prev - length / 2.0, theta_prev + length / 2.0)
        spec_j = _gear_spec(m_j, xi_j, config.visibility, config.transmissivity)
        dataset = sample_single_photons(spec_j, true_theta, budget, subseed(seed, j))
        detected = dataset.label_count("H") + dataset.label_count("V")
        total_detected += detected

        grid = posterior(dataset, omega, config.grid_size)
        theta_bar = estimate(grid)
        delta = uncertainty(grid, theta_bar)
        result = EstimationResult(
            theta_bar=theta_bar,
            delta_theta=delta,
            m_used=m_j,
            xi_used=xi_j,
            photons_consumed=detected,
            interval=omega,
        )

        if j == 1:
            candidates = candidates_step1(theta_bar % (math.pi / 2.0))
            cand_scores = [0.0] * len(candidates)
        else:
            survivors = prune_candidates(
                candidates, dataset, spec_j, config.prune_window
            )
            refined: list[float] = []
            scores: list[float] = []
            for c in survivors:
                tb, _ = _refine_candidate(dataset, spec_j, c, config.grid_size)
                refined.append(tb)
                scores.append(step_log_likelihood(dataset, spec_j, tb))
            order = sorted(range(len(refined)), key=lambda i: refined[i] % TWO_PI)
            candidates = tuple(refined[i] % TWO_PI for i in order)
            cand_scores = [scores[i] for i in order]

        steps.append(
            StepResult(
                plan=StepPlan(j, m_j, budget, xi_j, omega),
                estimation=result,
                candidates_after=candidates,
                fallback_fired=fallback,
                lost_records=budget - detected,
            )
        )
        # Track the candidate the data favor; ties resolve to the smallest
        # angle so reruns are reproducible.
        best = max(range(len(candidates)), key=lambda i: (cand_scores[i], -candidates[i]))
        theta_prev = candidates[best]
        delta_prev = delta

    return ProtocolResult(
        charges=charges,
        steps=tuple(steps),
        theta_hat=theta_prev % TWO_PI,
        delta_theta=steps[-1].estimation.delta_theta,
        candidates=candidates,
        ambiguous=len(candidates) > 1,
        photons_consumed=total_detected,
    )


def circular_error(theta_hat: float, theta_true: float) -> float:
    """Angular distance on [0, 2*pi) accounting for wrap-around."""
    d = abs(theta_hat - theta_true) % TWO_PI
    return min(d, TWO_PI - d)


def format_report(result: ProtocolResult) -> str:
    """Human-readable multi-step report block."""
    lines = [
        "# photongear-protocol v1",
        f"charges: {result.charges[0]},{result.charges[1]},{result.charges[2]}",
    ]
    for step in result.steps:
        p = step.plan
        e = step.estimation
        cands = ";".join(repr(c) for c in step.candidates_after)
        lines.append(
            f"step {p.step_index}: m={p.m} M={p.budget} xi={p.xi!r} "
            f"omega=[{p.omega[0]!r},{p.omega[1]!r}) theta_bar={e.theta_bar!r} "
            f"delta={e.delta_theta!r} lost={step.lost_records} "
            f"fallback={'yes' if step.fallback_fired else 'no'} "
            f"candidates={cands}"
        )
    lines.append(
        f"final: theta_hat={result.theta_hat!r} delta={result.delta_theta!r} "
        f"candidates={len(result.candidates)} "
        f"ambiguous={'yes' if result.ambiguous else 'no'} "
        f"photons={result.photons_consumed}"
    )
    return "\n".join(lines) + "\n"


SUMMARY_CSV_HEADER = (
    "m1,m2,m3,theta_hat,delta_theta,n_candidates,ambiguous,photons_consumed"
)


def summary_csv_row(result: ProtocolResult) -> str:
    return ",".join(
        [
            str(result.charges[0]),
            str(result.charges[1]),
            str(result.charges[2]),
            repr(result.theta_hat),
            repr(result.delta_theta),
            str(len(result.candidates)),
            "1" if result.ambiguous else "0",
            str(result.photons_consumed),
        ]
    )
