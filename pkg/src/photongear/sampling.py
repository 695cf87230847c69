"""Seeded synthetic measurement records for every probe strategy.

All randomness comes from NumPy's PCG64 generator seeded through
``numpy.random.SeedSequence``, so a (spec, angle, size, seed) tuple pins
the record stream bit for bit across runs and platforms. Records are drawn
sequentially in index order; distinct datasets may be generated
concurrently since nothing is shared.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .probes import (
    PAIR_LABELS,
    SINGLE_MODE_STRATEGIES,
    SINGLE_PHOTON_LABELS,
    ProbeSpec,
    Strategy,
    _conditional_h_probability,
    entangled_joint_probability,
)

KIND_SINGLE = "single"
KIND_COHERENT = "coherent"
KIND_PAIRS = "pairs"


@dataclass
class Dataset:
    """A synthetic measurement record with its generating parameters.

    ``records`` holds label codes (single photons and pairs, uint8 indices
    into ``labels``) or an (n, 2) array of per-pulse photocounts (coherent).
    ``true_theta`` is carried for bookkeeping only; estimators must not
    read it.
    """

    spec: ProbeSpec
    kind: str
    true_theta: float
    seed: int
    records: np.ndarray
    labels: tuple[str, ...]
    counts_summary: dict[str, int]
    true_theta_b: float | None = None

    def __len__(self) -> int:
        return int(self.records.shape[0])

    def label_count(self, label: str) -> int:
        return self.counts_summary.get(label, 0)

    def to_text(self, path) -> None:
        """Columnar text dump: '# key=value' header block, one record per line."""
        lines = [
            "# photongear-dataset v1",
            f"# kind={self.kind}",
            f"# seed={self.seed}",
            f"# true_theta={self.true_theta!r}",
        ]
        if self.true_theta_b is not None:
            lines.append(f"# true_theta_b={self.true_theta_b!r}")
        lines.append(f"# spec={json.dumps(self.spec.to_dict(), sort_keys=True)}")
        lines.append(f"# labels={','.join(self.labels)}")
        counts = ",".join(f"{k}:{v}" for k, v in sorted(self.counts_summary.items()))
        lines.append(f"# counts={counts}")
        if self.kind == KIND_COHERENT:
            lines.append("index,n_H,n_V")
            for i, (nh, nv) in enumerate(self.records):
                lines.append(f"{i},{int(nh)},{int(nv)}")
        else:
            lines.append("index,label")
            for i, code in enumerate(self.records):
                lines.append(f"{i},{self.labels[int(code)]}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_text(cls, path) -> "Dataset":
        meta: dict[str, str] = {}
        body: list[str] = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line.startswith("# ") and "=" in line:
                    key, value = line[2:].split("=", 1)
                    meta[key] = value
                elif line and not line.startswith("#"):
                    body.append(line)
        kind = meta["kind"]
        spec = ProbeSpec.from_dict(json.loads(meta["spec"]))
        labels = tuple(x for x in meta["labels"].split(",") if x)
        counts = {}
        if meta.get("counts"):
            for item in meta["counts"].split(","):
                k, v = item.split(":")
                counts[k] = int(v)
        rows = body[1:]  # first body line is the column header
        if kind == KIND_COHERENT:
            records = np.array(
                [[int(c) for c in row.split(",")[1:]] for row in rows], dtype=np.int64
            ).reshape(len(rows), 2)
        else:
            index = {lab: i for i, lab in enumerate(labels)}
            records = np.array(
                [index[row.split(",")[1]] for row in rows], dtype=np.uint8
            )
        return cls(
            spec=spec,
            kind=kind,
            true_theta=float(meta["true_theta"]),
            true_theta_b=float(meta["true_theta_b"]) if "true_theta_b" in meta else None,
            seed=int(meta["seed"]),
            records=records,
            labels=labels,
            counts_summary=counts,
        )


def _summary(records: np.ndarray, labels: tuple[str, ...]) -> dict[str, int]:
    counts = np.bincount(records, minlength=len(labels))
    return {lab: int(counts[i]) for i, lab in enumerate(labels)}


def sample_single_photons(
    spec: ProbeSpec, true_theta: float, m_records: int, seed: int
) -> Dataset:
    """Draw ``m_records`` independent single-photon outcomes at the true angle.

    Each photon is lost with probability 1 - eta; survivors are analyzed as
    H with the conditional fringe probability and V otherwise. One uniform
    draw per record keeps the stream reproducible.
    """
    if m_records < 1:
        raise ValueError("the record count must be at least 1")
    if spec.strategy not in SINGLE_MODE_STRATEGIES:
        raise ValueError("sample_single_photons requires a single-mode strategy")
    eta = spec.transmissivity
    p_h = eta * float(_conditional_h_probability(spec, true_theta))
    rng = np.random.default_rng(seed)
    u = rng.random(m_records)
    codes = np.where(u < p_h, 0, np.where(u < eta, 1, 2)).astype(np.uint8)
    return Dataset(
        spec=spec,
        kind=KIND_SINGLE,
        true_theta=float(true_theta),
        seed=int(seed),
        records=codes,
        labels=SINGLE_PHOTON_LABELS,
        counts_summary=_summary(codes, SINGLE_PHOTON_LABELS),
    )


def coherent_channel_means(
    spec: ProbeSpec,
    theta: float,
    channel_visibilities: tuple[float, float] | None = None,
) -> tuple[float, float]:
    """Mean detected photocounts (H, V) per coherent pulse at ``theta``.

    Channel visibilities mix the ideal cos^2/sin^2 fringes with a flat
    background; the default uses the spec visibility for both channels, so
    a V = 1 spec reproduces the ideal Poisson means eta*|alpha|^2*cos^2 and
    eta*|alpha|^2*sin^2.
    """
    if spec.strategy is not Strategy.COHERENT_GEAR:
        raise ValueError("coherent means require a coherent-gear spec")
    v_h, v_v = channel_visibilities or (spec.visibility, spec.visibility)
    phase = spec.m * theta + spec.xi
    c2 = float(np.cos(phase) ** 2)
    base = spec.transmissivity * spec.mean_photons
    mean_h = base * (v_h * c2 + (1.0 - v_h) / 2.0)
    mean_v = base * (v_v * (1.0 - c2) + (1.0 - v_v) / 2.0)
    return mean_h, mean_v


def sample_coherent(
    spec: ProbeSpec,
    true_theta: float,
    pulses: int,
    seed: int,
    channel_visibilities: tuple[float, float] | None = None,
) -> Dataset:
    """Draw per-pulse photocount pairs (n_H, n_V) for a coherent gear probe.

    Counts in the two channels are independent Poisson variables with the
    means of :func:`coherent_channel_means`.
    """
    if pulses < 1:
        raise ValueError("the pulse count must be at least 1")
    mean_h, mean_v = coherent_channel_means(spec, true_theta, channel_visibilities)
    rng = np.random.default_rng(seed)
    n_h = rng.poisson(mean_h, size=pulses)
    n_v = rng.poisson(mean_v, size=pulses)
    records = np.column_stack([n_h, n_v]).astype(np.int64)
    summary = {
        "pulses": pulses,
        "n_H_total": int(n_h.sum()),
        "n_V_total": int(n_v.sum()),
    }
    return Dataset(
        spec=spec,
        kind=KIND_COHERENT,
        true_theta=float(true_theta),
        seed=int(seed),
        records=records,
        labels=(),
        counts_summary=summary,
    )


def sample_entangled(
    spec: ProbeSpec, theta_a: float, theta_b: float, pairs: int, seed: int
) -> Dataset:
    """Draw coincidence labels for ``pairs`` entangled photon pairs.

    A multinomial draw over the four coincidence outcomes scaled by the
    pair survival probability eta^2, with single- and double-loss events
    recorded under their own labels.
    """
    if pairs < 1:
        raise ValueError("the pair count must be at least 1")
    probs = np.array(
        [
            entangled_joint_probability(spec, theta_a, theta_b, lab)
            for lab in PAIR_LABELS
        ]
    )
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0  # guard against rounding in the last bin
    rng = np.random.default_rng(seed)
    u = rng.random(pairs)
    codes = np.searchsorted(cdf, u, side="right").astype(np.uint8)
    return Dataset(
        spec=spec,
        kind=KIND_PAIRS,
        true_theta=float(theta_a),
        true_theta_b=float(theta_b),
        seed=int(seed),
        records=codes,
        labels=PAIR_LABELS,
        counts_summary=_summary(codes, PAIR_LABELS),
    )


def subseed(seed: int, *key: int) -> int:
    """Derive a child seed for point ``key`` of a sweep.

    Uses ``SeedSequence(seed, spawn_key=key)``, so per-point streams are
    independent of each other and of how many workers consume them.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
