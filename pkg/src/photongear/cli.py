"""Command-line harness wiring the toolkit into reproducible experiments.

Each run is fully determined by a JSON config file plus a seed: sweeps
derive one sub-seed per point (``SeedSequence(seed, spawn_key=(i,))``), so
outputs are byte-identical across reruns and independent of the worker
count. Commands emit plot-ready CSV (comma separator, '.' decimal, header
row) behind a version comment line; no plotting happens here.

    photongear fringe --config fringe.json [--seed N] [--out PATH] [--threads N]

Subcommands: fringe | estimate | adaptive | bounds | entangled | coherent.
Environment overrides: PHOTONGEAR_SEED, PHOTONGEAR_OUTDIR (flags win over
the environment, which wins over the config). Exit codes: 0 success,
2 config error, 1 runtime failure; errors print one machine-readable JSON
line to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import adaptive as ad
from . import bayes, fisher, fringes
from .probes import ProbeSpec, Strategy
from .sampling import sample_coherent, sample_entangled, sample_single_photons, subseed

CSV_VERSION = "photongear-csv v1"
KINDS = ("fringe", "estimate", "adaptive", "bounds", "entangled", "coherent")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


@dataclass
class ExperimentConfig:
    """One experiment per file; see the README for per-kind fields."""

    kind: str
    probe: ProbeSpec
    seed: int
    out: str
    sweep: tuple[float, float, int] | None = None
    theta_star: float | None = None
    budgets: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "version": 1,
            "kind": self.kind,
            "probe": self.probe.to_dict(),
            "seed": self.seed,
            "out": self.out,
            "budgets": dict(self.budgets),
            "options": dict(self.options),
        }
        if self.sweep is not None:
            d["sweep"] = {
                "start": self.sweep[0],
                "stop": self.sweep[1],
                "points": self.sweep[2],
            }
        if self.theta_star is not None:
            d["theta_star"] = self.theta_star
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict, source: str = "<config>") -> "ExperimentConfig":
        def fail(path: str, message: str):
            raise ConfigError(f"{source}: {path}: {message}")

        if not isinstance(d, dict):
            fail("$", "config must be a JSON object")
        kind = d.get("kind")
        if kind not in KINDS:
            fail("kind", f"must be one of {'|'.join(KINDS)}, got {kind!r}")
        if "probe" not in d or not isinstance(d["probe"], dict):
            fail("probe", "a probe block is required")
        try:
            probe = ProbeSpec.from_dict(d["probe"])
        except (ValueError, TypeError) as exc:
            fail("probe", str(exc))
        seed = d.get("seed")
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            fail("seed", "a non-negative integer seed is required")
        out = d.get("out")
        if not isinstance(out, str) or not out:
            fail("out", "an output path is required")
        sweep = None
        if d.get("sweep") is not None:
            s = d["sweep"]
            for key in ("start", "stop", "points"):
                if key not in s:
                    fail(f"sweep.{key}", "missing")
            if s["points"] < 2:
                fail("sweep.points", "need at least 2 points")
            if not s["stop"] > s["start"]:
                fail("sweep.stop", "must exceed sweep.start")
            sweep = (float(s["start"]), float(s["stop"]), int(s["points"]))
        theta_star = d.get("theta_star")
        if theta_star is not None:
            theta_star = float(theta_star)
        budgets = d.get("budgets", {})
        options = d.get("options", {})
        cfg = cls(
            kind=kind,
            probe=probe,
            seed=seed,
            out=out,
            sweep=sweep,
            theta_star=theta_star,
            budgets=dict(budgets),
            options=dict(options),
        )
        cfg._validate_kind(fail)
        return cfg

    def _validate_kind(self, fail) -> None:
        need_sweep = self.kind in ("fringe", "entangled", "coherent")
        if need_sweep and self.sweep is None:
            fail("sweep", f"the {self.kind} experiment needs an angle sweep")
        if self.kind in ("estimate", "adaptive") and self.theta_star is None:
            fail("theta_star", f"the {self.kind} experiment needs a true angle")
        required = {
            "fringe": ("samples_per_point",),
            "estimate": ("nu",),
            "adaptive": ("M1", "M2", "M3"),
            "bounds": ("nu",),
            "entangled": ("pairs_per_point",),
            "coherent": ("pulses_per_point",),
        }[self.kind]
        for key in required:
            value = self.budgets.get(key)
            if not isinstance(value, int) or value < 1:
                fail(f"budgets.{key}", "a positive integer is required")

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"{path}: config file not found")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})")
        return cls.from_dict(data, source=str(path))


def _write_csv(path, kind: str, seed: int, header: str, rows) -> None:
    lines = [f"# {CSV_VERSION} command={kind} seed={seed}", header]
    lines.extend(rows)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _map_points(fn, n_points: int, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in range(n_points)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_points)))


def _sweep_angles(sweep: tuple[float, float, int]) -> np.ndarray:
    start, stop, points = sweep
    return np.linspace(start, stop, points)


def _fit_path(out: str) -> str:
    p = Path(out)
    return str(p.with_name(p.stem + ".fit.csv"))


def _fit_rows(result: fringes.FringeFitResult, prefix: str = "") -> list[str]:
    rows = [
        f"{prefix}frequency,{result.frequency},0",
        f"{prefix}visibility,{_fmt(result.visibility)},{_fmt(result.visibility_err)}",
        f"{prefix}phase,{_fmt(result.phase)},{_fmt(result.phase_err)}",
        f"{prefix}offset,{_fmt(result.offset)},{_fmt(result.offset_err)}",
        f"{prefix}chi_squared,{_fmt(result.chi_squared)},",
        f"{prefix}ndof,{result.ndof},",
    ]
    return rows


def cmd_fringe(cfg: ExperimentConfig, threads: int) -> int:
    angles = _sweep_angles(cfg.sweep)
    per_point = cfg.budgets["samples_per_point"]
    m = cfg.probe.fringe_frequency
    span = float(angles[-1] - angles[0])
    needed = math.ceil(8.0 * span / (math.pi / (2.0 * m)))
    if angles.size < needed:
        raise ConfigError(
            f"sweep.points: {angles.size} points undersample the m = {m} fringe "
            f"over {span:.4g} rad; at least {needed} are required"
        )

    def one(i: int):
        ds = sample_single_photons(cfg.probe, float(angles[i]), per_point,
                                   subseed(cfg.seed, i))
        n_h, n_v = ds.label_count("H"), ds.label_count("V")
        detected = n_h + n_v
        p_hat = n_h / detected if detected else 0.5
        stderr = (
            math.sqrt(max(p_hat * (1.0 - p_hat), 1.0 / detected) / detected)
            if detected
            else 0.5
        )
        return n_h, n_v, ds.label_count("Lost"), p_hat, stderr

    samples = _map_points(one, angles.size, threads)
    rows = [
        f"{_fmt(float(t))},{_fmt(p)},{_fmt(se)},{nh},{nv},{nl}"
        for t, (nh, nv, nl, p, se) in zip(angles, samples)
    ]
    _write_csv(cfg.out, "fringe", cfg.seed, "theta,p_hat,stderr,n_h,n_v,n_lost", rows)

    scan = fringes.FringeScan(
        angles=angles, counts=np.array([s[0] for s in samples], dtype=float)
    )
    candidates = cfg.options.get("m_candidates")
    fit = fringes.fit_fringe(
        scan,
        m_fixed=None if candidates else m,
        m_candidates=candidates,
    )
    _write_csv(_fit_path(cfg.out), "fringe-fit", cfg.seed,
               "parameter,value,stderr", _fit_rows(fit))
    return 0


def cmd_estimate(cfg: ExperimentConfig, threads: int) -> int:
    del threads  # a single record stream is inherently sequential
    nu = cfg.budgets["nu"]
    theta_star = float(cfg.theta_star)
    spec = cfg.probe
    m = spec.fringe_frequency
    length = math.pi / (2.0 * m)
    omega = cfg.options.get("omega")
    if omega is None:
        # Default support: the bijectivity cell [0, T) translated so that
        # theta_star lies inside it.
        k = math.floor((theta_star + spec.xi / m) / length)
        lo = k * length - spec.xi / m
        omega = (lo, lo + length)
    omega = (float(omega[0]), float(omega[1]))
    grid_size = int(cfg.options.get("grid_size", 1024))
    every = int(cfg.options.get("record_every", 1))

    ds = sample_single_photons(spec, theta_star, nu, subseed(cfg.seed, 0))
    is_h = (ds.records == 0).astype(np.int64)
    is_v = (ds.records == 1).astype(np.int64)
    cum_h = np.cumsum(is_h)
    cum_v = np.cumsum(is_v)

    checkpoints = list(range(every, nu + 1, every))
    if checkpoints[-1] != nu:
        checkpoints.append(nu)
    rows = []
    final_grid = None
    for n in checkpoints:
        grid = bayes.posterior_from_counts(
            int(cum_h[n - 1]), int(cum_v[n - 1]), spec, omega, grid_size
        )
        theta_bar = bayes.estimate(grid)
        delta = bayes.uncertainty(grid, theta_bar)
        detected = int(cum_h[n - 1] + cum_v[n - 1])
        # The bound counts sent photons; its sqrt(eta) factor accounts for
        # the lost fraction.
        bound = fisher.crb(spec, n).crb
        rows.append(
            f"{n},{_fmt(theta_bar)},{_fmt(delta)},{_fmt(bound)},{_fmt(delta / bound)}"
        )
        final_grid = (grid, theta_bar, delta, detected)
    _write_csv(cfg.out, "estimate", cfg.seed,
               "nu,theta_bar,delta_theta,delta_min,ratio", rows)
    grid, theta_bar, delta, detected = final_grid
    grid.to_csv(_posterior_path(cfg.out))
    result = bayes.EstimationResult(
        theta_bar=theta_bar,
        delta_theta=delta,
        m_used=m,
        xi_used=spec.xi,
        photons_consumed=detected,
        interval=omega,
    )
    print(json.dumps({
        "theta_bar": result.theta_bar,
        "delta_theta": result.delta_theta,
        "m": result.m_used,
        "xi": result.xi_used,
        "photons_consumed": result.photons_consumed,
        "omega": list(result.interval),
    }, sort_keys=True))
    return 0


def _posterior_path(out: str) -> str:
    p = Path(out)
    return str(p.with_name(p.stem + ".posterior.csv"))


def cmd_adaptive(cfg: ExperimentConfig, threads: int) -> int:
    del threads  # the protocol steps are sequential by construction
    budgets = (cfg.budgets["M1"], cfg.budgets["M2"], cfg.budgets["M3"])
    options = cfg.options
    pconfig = ad.ProtocolConfig(
        budgets=budgets,
        available_m=tuple(options.get("available_m", ad.DEVICE_CHARGES)),
        visibility=cfg.probe.visibility,
        transmissivity=cfg.probe.transmissivity,
        grid_size=int(options.get("grid_size", 1024)),
        charges=tuple(options["charges"]) if "charges" in options else None,
    )
    result = ad.run_protocol(float(cfg.theta_star), pconfig, cfg.seed)
    Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
    with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(ad.format_report(result))
    summary = str(Path(cfg.out).with_name(Path(cfg.out).stem + ".summary.csv"))
    _write_csv(summary, "adaptive", cfg.seed, ad.SUMMARY_CSV_HEADER,
               [ad.summary_csv_row(result)])
    print(json.dumps({
        "theta_hat": result.theta_hat,
        "delta_theta": result.delta_theta,
        "candidates": list(result.candidates),
        "ambiguous": result.ambiguous,
        "photons_consumed": result.photons_consumed,
    }, sort_keys=True))
    return 0


def cmd_bounds(cfg: ExperimentConfig, threads: int) -> int:
    del threads
    nu = cfg.budgets["nu"]
    charges = cfg.options.get("charges", list(ad.DEVICE_CHARGES))
    model = fisher.HeuristicVisibilityModel(
        v0=float(cfg.options.get("v0", 1.0)),
        eta0=float(cfg.options.get("eta0", 1.0)),
        gamma=float(cfg.options.get("gamma", fisher.FITTED_FALLOFF.gamma)),
        delta=float(cfg.options.get("delta", fisher.FITTED_FALLOFF.delta)),
    )
    theta = cfg.theta_star
    rows = []
    for m in charges:
        m = int(m)
        spec = ProbeSpec(
            strategy=Strategy.GEAR_SINGLE_PHOTON,
            q=(m - 1) / 2.0,
            hwp_sign=1,
            xi=cfg.probe.xi,
            visibility=cfg.probe.visibility,
            transmissivity=cfg.probe.transmissivity,
            n_photons=cfg.probe.n_photons,
        )
        report = fisher.crb(spec, nu, theta)
        rows.append(report.csv_row() + "," + _fmt(fisher.enhancement_ratio(m, model)))
    _write_csv(cfg.out, "bounds", cfg.seed,
               fisher.BoundReport.CSV_HEADER + ",enhancement", rows)
    return 0


def cmd_entangled(cfg: ExperimentConfig, threads: int) -> int:
    pairs = cfg.budgets["pairs_per_point"]
    angles = _sweep_angles(cfg.sweep)
    corotate = bool(cfg.options.get("corotate", True))
    theta_b_fixed = float(cfg.options.get("theta_b", 0.0))

    def one(i: int):
        ta = float(angles[i])
        tb = ta if corotate else theta_b_fixed
        ds = sample_entangled(cfg.probe, ta, tb, pairs, subseed(cfg.seed, i))
        counts = [ds.label_count(lab) for lab in
                  ("HH", "HV", "VH", "VV", "LossA", "LossB", "LossBoth")]
        return tb, counts

    samples = _map_points(one, angles.size, threads)
    rows = []
    hh_counts = []
    for ta, (tb, counts) in zip(angles, samples):
        coincidences = sum(counts[:4])
        f_hh = counts[0] / coincidences if coincidences else 0.0
        stderr = (
            math.sqrt(max(f_hh * (1.0 - f_hh), 1.0 / coincidences) / coincidences)
            if coincidences
            else 0.0
        )
        hh_counts.append(counts[0])
        rows.append(
            f"{_fmt(float(ta))},{_fmt(tb)},"
            + ",".join(str(c) for c in counts)
            + f",{_fmt(f_hh)},{_fmt(stderr)}"
        )
    _write_csv(
        cfg.out, "entangled", cfg.seed,
        "theta_a,theta_b,n_hh,n_hv,n_vh,n_vv,n_loss_a,n_loss_b,n_loss_both,"
        "f_hh,stderr",
        rows,
    )
    if corotate:
        scan = fringes.FringeScan(angles=angles, counts=np.array(hh_counts, dtype=float))
        candidates = cfg.options.get("m_candidates")
        m_default = cfg.probe.m_a + cfg.probe.m_b
        fit = fringes.fit_fringe(
            scan,
            m_fixed=None if candidates else m_default,
            m_candidates=candidates,
        )
        _write_csv(_fit_path(cfg.out), "entangled-fit", cfg.seed,
                   "parameter,value,stderr", _fit_rows(fit))
    return 0


def cmd_coherent(cfg: ExperimentConfig, threads: int) -> int:
    pulses = cfg.budgets["pulses_per_point"]
    angles = _sweep_angles(cfg.sweep)
    v_pair = cfg.options.get("channel_visibilities")
    if v_pair is not None:
        v_pair = (float(v_pair[0]), float(v_pair[1]))

    def one(i: int):
        ds = sample_coherent(cfg.probe, float(angles[i]), pulses,
                             subseed(cfg.seed, i), channel_visibilities=v_pair)
        return ds.counts_summary["n_H_total"], ds.counts_summary["n_V_total"]

    samples = _map_points(one, angles.size, threads)
    scale = cfg.probe.transmissivity * cfg.probe.mean_photons * pulses
    rows = []
    for t, (nh, nv) in zip(angles, samples):
        i_h = nh / scale if scale else 0.0
        i_v = nv / scale if scale else 0.0
        rows.append(
            f"{_fmt(float(t))},{pulses},{nh},{nv},{_fmt(i_h)},{_fmt(i_v)}"
        )
    _write_csv(cfg.out, "coherent", cfg.seed,
               "theta,pulses,total_n_h,total_n_v,i_h,i_v", rows)
    if scale:
        fit_rows = []
        for name, counts in (
            ("H", np.array([s[0] for s in samples], dtype=float)),
            ("V", np.array([s[1] for s in samples], dtype=float)),
        ):
            scan = fringes.FringeScan(angles=angles, counts=counts)
            fit = fringes.fit_fringe(scan, m_fixed=cfg.probe.m)
            fit_rows.extend(_fit_rows(fit, prefix=f"{name}_"))
        _write_csv(_fit_path(cfg.out), "coherent-fit", cfg.seed,
                   "parameter,value,stderr", fit_rows)
    return 0


_COMMANDS = {
    "fringe": cmd_fringe,
    "estimate": cmd_estimate,
    "adaptive": cmd_adaptive,
    "bounds": cmd_bounds,
    "entangled": cmd_entangled,
    "coherent": cmd_coherent,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photongear",
        description="Reproducible gear-metrology experiments from JSON configs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="override the output path")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for sweep points")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.from_json_file(args.config)
        if cfg.kind != args.command:
            raise ConfigError(
                f"{args.config}: kind: config declares {cfg.kind!r} but the "
                f"{args.command!r} command was invoked"
            )
        env_seed = os.environ.get("PHOTONGEAR_SEED")
        if env_seed is not None:
            try:
                cfg.seed = int(env_seed)
            except ValueError:
                raise ConfigError(f"PHOTONGEAR_SEED: not an integer: {env_seed!r}")
        if args.seed is not None:
            cfg.seed = args.seed
        out_dir = os.environ.get("PHOTONGEAR_OUTDIR")
        if out_dir:
            cfg.out = str(Path(out_dir) / Path(cfg.out).name)
        if args.out is not None:
            cfg.out = args.out
        return _COMMANDS[cfg.kind](cfg, max(1, args.threads))
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive catch-all
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
