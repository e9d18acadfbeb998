"""Command-line experiment runner: ``qspeed {table2,fig3,tomo,decompose}``.

Every command resolves one :class:`ExperimentConfig` from defaults, an
optional TOML file, a JSON override object and individual flags, in that
order. JSON reports embed the resolved config and the library version. Output
files contain no timestamps, so equal configs give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import bisect

from qspeed import __version__
from qspeed.dynamics import SpinAxis, spin_hamiltonian
from qspeed.fisher import sldf
from qspeed.fixtures import (
    BSM_OUTCOMES,
    PUBLISHED_BSM_FIDELITY,
    PUBLISHED_STATE_FIDELITY,
    STATE_NAMES,
    fixture_copy_states,
    fixture_state,
    load_fixture,
)
from qspeed.qcore import DensityMatrix, ValidationError, bell_mixture, bell_state, fidelity_pure, trace_distance
from qspeed.speed import DEFAULT_TAU, entanglement_witness, squared_speed_tau
from qspeed.swapnet import NoiseModel, PROJECTOR_SOURCES, fixture_bsm, ideal_bsm, run_protocol_point
from qspeed.tomography import (
    ProbeSet,
    detector_probabilities,
    mle_detector,
    mle_state,
    operator_fidelity,
    pauli_settings,
    state_probabilities,
)
from qspeed.waveplate import (
    CONVENTIONS,
    DEFAULT_CONVENTION,
    EulerAngles,
    compose,
    decompose,
    equal_up_to_phase,
    euler_unitary,
    gate_angle_report,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

N_SITES = 2
THRESHOLD = N_SITES / 4
DEFAULT_P_GRID = tuple(round(0.1 * k, 10) for k in range(11))
BISECT_XTOL = 1e-6
SCAN_POINTS = 101


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    p_grid: tuple[float, ...] = DEFAULT_P_GRID
    axis: str = "x"
    tau: float = DEFAULT_TAU
    shots: int | str = 10**6
    visibility: float = 1.0
    projector_source: str = "ideal"
    partial_bsm: bool = False
    seed: int = 0
    mc_samples: int = 1000
    output_dir: str = "qspeed-out"
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "p_grid", tuple(float(p) for p in self.p_grid))
        object.__setattr__(self, "axis", SpinAxis.parse(self.axis).value)
        if not self.p_grid:
            raise ValidationError("p_grid must not be empty")
        if any(not 0.0 <= p <= 1.0 for p in self.p_grid):
            raise ValidationError(f"p_grid values must lie in [0, 1], got {list(self.p_grid)}")
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValidationError(f"tau must be positive, got {self.tau}")
        if self.shots != "exact" and (isinstance(self.shots, bool) or not isinstance(self.shots, int) or self.shots < 1):
            raise ValidationError(f"shots must be a positive integer or 'exact', got {self.shots!r}")
        if not isinstance(self.mc_samples, int) or self.mc_samples < 1:
            raise ValidationError(f"mc_samples must be an integer >= 1, got {self.mc_samples!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError(f"seed must be a non-negative integer, got {self.seed!r}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ValidationError(f"workers must be an integer >= 1, got {self.workers!r}")
        if self.projector_source not in PROJECTOR_SOURCES:
            raise ValidationError(f"projector_source must be one of {PROJECTOR_SOURCES}")
        self.noise()  # validates visibility

    @classmethod
    def from_mapping(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        noise = doc.pop("noise", None)
        if noise is not None:
            if not isinstance(noise, dict):
                raise ValidationError("'noise' must be a table")
            doc.update(noise)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {unknown}")
        return cls(**doc)

    def merged(self, doc: dict) -> "ExperimentConfig":
        base = asdict(self)
        flat = dict(doc)
        flat.update(flat.pop("noise", None) or {})
        base.update(flat)
        return ExperimentConfig.from_mapping(base)

    def noise(self) -> NoiseModel:
        return NoiseModel(self.visibility, self.projector_source, self.partial_bsm)

    @property
    def exact(self) -> bool:
        return self.shots == "exact"

    def to_json(self) -> dict:
        d = asdict(self)
        d["p_grid"] = list(self.p_grid)
        d["noise"] = {k: d.pop(k) for k in ("visibility", "projector_source", "partial_bsm")}
        return d


@dataclass
class ReportRow:
    p: float
    S_exact: float
    S_estimated: float | None
    error_bar: float | None
    I_F: float
    witness_verdict: bool
    threshold_crossings: str
    S_fixture: float | None = None
    clipped: bool | None = None


# --------------------------------------------------------------------------
# closed-form pipeline and threshold crossings


@lru_cache(maxsize=4096)
def exact_curves(p: float, axis: str, tau: float) -> tuple[float, float]:
    """(I_F, S_tau) of the Bell mixture rho_p under the two-site half-spin Hamiltonian."""
    rho = bell_mixture(p)
    H = spin_hamiltonian(axis, N_SITES)
    return sldf(rho, H), squared_speed_tau(rho, H, tau).squared_speed


def find_crossings(g: Callable[[float], float], lo: float = 0.0, hi: float = 1.0) -> list[float]:
    """Roots of ``g`` on [lo, hi]: scan for sign changes, then bisect each bracket."""
    xs = np.linspace(lo, hi, SCAN_POINTS)
    vals = [g(float(x)) for x in xs]
    roots = []
    for a, b, ga, gb in zip(xs, xs[1:], vals, vals[1:]):
        if ga == 0.0:
            roots.append(float(a))
        elif ga * gb < 0:
            roots.append(float(bisect(g, a, b, xtol=BISECT_XTOL)))
    if vals[-1] == 0.0:
        roots.append(float(xs[-1]))
    return roots


def _region(g: Callable[[float], float], roots: Sequence[float]) -> str:
    """Human description of where g > 0 on [0, 1], e.g. ``"p<0.1297 or p>0.8703"``."""
    edges = [0.0, *roots, 1.0]
    parts = []
    for a, b in zip(edges, edges[1:]):
        if b - a < 1e-9 or g(0.5 * (a + b)) <= 0:
            continue
        if a == 0.0 and b == 1.0:
            parts.append("all p")
        elif a == 0.0:
            parts.append(f"p<{b:.4f}")
        elif b == 1.0:
            parts.append(f"p>{a:.4f}")
        else:
            parts.append(f"{a:.4f}<p<{b:.4f}")
    return " or ".join(parts) if parts else "none"


def threshold_crossings(axis: str, tau: float) -> dict:
    gS = lambda p: exact_curves(p, axis, tau)[1] - THRESHOLD  # noqa: E731
    gI = lambda p: exact_curves(p, axis, tau)[0] - THRESHOLD  # noqa: E731
    rs, ri = find_crossings(gS), find_crossings(gI)
    return {
        "threshold": THRESHOLD,
        "S": rs,
        "I_F": ri,
        "S_region": _region(gS, rs),
        "I_F_region": _region(gI, ri),
    }


def _crossing_text(c: dict) -> str:
    fmt = lambda xs: "/".join(f"{x:.4f}" for x in xs) or "none"  # noqa: E731
    return f"S:{fmt(c['S'])};I_F:{fmt(c['I_F'])}"


# --------------------------------------------------------------------------
# commands


def cmd_table2(config: ExperimentConfig) -> dict:
    crossings = threshold_crossings(config.axis, config.tau)
    text = _crossing_text(crossings)
    rows = []
    for p in config.p_grid:
        i_f, s = exact_curves(p, config.axis, config.tau)
        rows.append(ReportRow(p, s, None, None, i_f, entanglement_witness(s, N_SITES).entangled_useful, text))
    return _report("table2", config, rows, {"crossings": crossings})


def _point_seed(seed: int, axis: str, index: int) -> int:
    ss = np.random.SeedSequence([seed, "xyz".index(axis), index])
    return int(ss.generate_state(1, np.uint32)[0])


def fixture_curve(p: float, axis: str, tau: float, directory=None) -> float:
    """S_tau of p phi+_1 + (1-p) phi-_1 built from the reconstructed copy-1 states."""
    states = fixture_copy_states(1, directory)
    mix = DensityMatrix(p * states[0].mat + (1 - p) * states[90].mat)
    return squared_speed_tau(mix, spin_hamiltonian(axis, N_SITES), tau).squared_speed


def cmd_fig3(config: ExperimentConfig, fixtures_dir=None) -> dict:
    crossings = threshold_crossings(config.axis, config.tau)
    text = _crossing_text(crossings)
    noise = config.noise()
    shots = None if config.exact else int(config.shots)

    def point(item):
        k, p = item
        return run_protocol_point(
            p,
            config.axis,
            config.tau,
            shots=shots,
            noise=noise,
            seed=_point_seed(config.seed, config.axis, k),
            mc_samples=config.mc_samples,
        )

    items = list(enumerate(config.p_grid))
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            points = list(pool.map(point, items))
    else:
        points = [point(it) for it in items]

    rows = []
    for p, pt in zip(config.p_grid, points):
        i_f, s = exact_curves(p, config.axis, config.tau)
        rows.append(
            ReportRow(
                p,
                s,
                pt.s_estimate,
                pt.error_bar,
                i_f,
                entanglement_witness(pt.s_estimate, N_SITES).entangled_useful,
                text,
                fixture_curve(p, config.axis, config.tau, fixtures_dir),
                pt.clipped,
            )
        )
    return _report("fig3", config, rows, {"crossings": crossings, "witness_threshold_line": THRESHOLD})


def cmd_tomo(config: ExperimentConfig, fixtures_dir=None) -> dict:
    ideal_proj = dict(zip(ideal_bsm().labels, ideal_bsm().effects))
    states = {
        name: {
            "fidelity": _fidelity_to_bell(name, fixtures_dir),
            "published": PUBLISHED_STATE_FIDELITY[name],
        }
        for name in STATE_NAMES
    }
    bsms = {}
    effect_sets = {k: fixture_bsm(k, fixtures_dir) for k in (1, 2)}
    for k, es in effect_sets.items():
        per = {lab: operator_fidelity(es[lab], ideal_proj[lab]) for lab in BSM_OUTCOMES}
        bsms[f"bsm{k}"] = {
            "per_outcome": per,
            "mean": float(np.mean(list(per.values()))),
            "published": PUBLISHED_BSM_FIDELITY[k],
            "convention": "Uhlmann fidelity of trace-normalized operators",
        }

    settings = pauli_settings(2)
    probes = ProbeSet.products(2)

    def state_job(name):
        rho = fixture_state(name, fixtures_dir)
        res = mle_state(state_probabilities(rho.mat, settings), settings)
        return name, {
            "trace_distance": trace_distance(res.estimate, rho.mat),
            "iterations": res.iterations,
            "converged": res.converged,
            "monotone": res.monotone,
        }

    def detector_job(k):
        es = effect_sets[k]
        results = mle_detector(detector_probabilities(es.effects, probes, es.labels), es.labels, probes)
        dists = {lab: trace_distance(r.estimate, e) for lab, r, e in zip(es.labels, results, es.effects)}
        return f"bsm{k}", {
            "trace_distance": dists,
            "max_trace_distance": max(dists.values()),
            "iterations": results[0].iterations,
            "converged": results[0].converged,
            "monotone": results[0].monotone,
        }

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        state_mle = dict(pool.map(state_job, STATE_NAMES))
        detector_mle = dict(pool.map(detector_job, (1, 2)))
    extra = {
        "state_fidelity": states,
        "bsm_fidelity": bsms,
        "mle_self_consistency": {"states": state_mle, "detectors": detector_mle},
    }
    return _report("tomo", config, [], extra)


def _fidelity_to_bell(name: str, directory=None) -> float:
    # the raw transcribed matrix, not the repaired state: the quoted values refer to it
    label = "phi+" if "plus" in name else "phi-"
    return fidelity_pure(bell_state(label), load_fixture(name, directory))


def cmd_decompose(xi: float, eta: float, zeta: float, convention: str = DEFAULT_CONVENTION) -> dict:
    e = EulerAngles(xi, eta, zeta)
    seq = decompose(e)
    ok = equal_up_to_phase(compose(seq, convention), euler_unitary(e), 1e-9)
    return {
        "version": __version__,
        "euler": {"xi": xi, "eta": eta, "zeta": zeta},
        "convention": convention,
        "radians": [seq.theta1, seq.theta2, seq.theta3],
        "degrees": list(seq.degrees()),
        "round_trip": ok,
        "reference_gates": [asdict(r) for r in gate_angle_report()],
    }


# --------------------------------------------------------------------------
# output


def _report(command: str, config: ExperimentConfig, rows: list[ReportRow], extra: dict) -> dict:
    return {
        "command": command,
        "version": __version__,
        "config": config.to_json(),
        "rows": [asdict(r) for r in rows],
        **extra,
    }


def rows_to_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: "" if v is None else repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_outputs(report: dict, output_dir, stem: str) -> list[Path]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    jpath = out / f"{stem}.json"
    jpath.write_text(dumps_report(report), encoding="utf-8")
    written.append(jpath)
    if report.get("rows"):
        cpath = out / f"{stem}.csv"
        cpath.write_text(rows_to_csv(report["rows"]), encoding="utf-8")
        written.append(cpath)
    return written


def _print_rows(report: dict) -> None:
    for r in report["rows"]:
        est = "" if r["S_estimated"] is None else f"  S_est={r['S_estimated']:.5f} +- {r['error_bar']:.5f}"
        fix = "" if r.get("S_fixture") is None else f"  S_fix={r['S_fixture']:.5f}"
        print(f"p={r['p']:.2f}  I_F={r['I_F']:.5f}  S={r['S_exact']:.5f}{est}{fix}  witness={r['witness_verdict']}")


# --------------------------------------------------------------------------
# argument parsing


def _resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        try:
            doc = tomllib.loads(Path(args.config).read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"{args.config}: invalid TOML: {exc}") from None
        cfg = cfg.merged(doc)
    if getattr(args, "override", None):
        try:
            doc = json.loads(args.override)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"--override is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ValidationError("--override must be a JSON object")
        cfg = cfg.merged(doc)
    flags = {}
    for name in ("axis", "tau", "seed", "mc_samples", "output_dir", "workers", "visibility", "projector_source"):
        v = getattr(args, name, None)
        if v is not None:
            flags[name] = v
    if getattr(args, "shots", None) is not None:
        flags["shots"] = "exact" if args.shots == "exact" else _parse_int(args.shots, "--shots")
    if getattr(args, "p_grid", None):
        flags["p_grid"] = [float(x) for x in args.p_grid.split(",")]
    if getattr(args, "partial_bsm", False):
        flags["partial_bsm"] = True
    return replace(cfg, **flags) if flags else cfg


def _parse_int(text: str, what: str) -> int:
    try:
        return int(float(text)) if "e" in text.lower() else int(text)
    except ValueError:
        raise ValidationError(f"{what} expects an integer or 'exact', got {text!r}") from None


def _common(sp: argparse.ArgumentParser, sampling: bool) -> None:
    sp.add_argument("--config", help="TOML file with ExperimentConfig keys")
    sp.add_argument("--override", help="JSON object merged over the config file")
    sp.add_argument("--output-dir", dest="output_dir")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--p-grid", dest="p_grid", help="comma-separated mixing parameters")
    sp.add_argument("--axis", choices=["x", "y", "z"])
    sp.add_argument("--no-write", action="store_true", help="print only, write no files")
    if sampling:
        sp.add_argument("--seed", type=int)
        sp.add_argument("--shots", help="shots per run, or 'exact'")
        sp.add_argument("--mc-samples", dest="mc_samples", type=int)
        sp.add_argument("--visibility", type=float)
        sp.add_argument("--projector-source", dest="projector_source", choices=list(PROJECTOR_SOURCES))
        sp.add_argument("--partial-bsm", dest="partial_bsm", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qspeed", description="Speed-of-evolution witnesses and their simulation.")
    ap.add_argument("--version", action="version", version=f"qspeed {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("table2", help="exact I_F and S_tau of rho_p with threshold crossings")
    _common(sp, sampling=False)

    sp = sub.add_parser("fig3", help="sampled two-copy protocol vs the exact speed curve")
    _common(sp, sampling=True)
    sp.add_argument("--fixtures", help="directory holding the matrix-JSON fixtures")

    sp = sub.add_parser("tomo", help="fixture fidelities and MLE self-consistency")
    _common(sp, sampling=False)
    sp.add_argument("--fixtures", help="directory holding the matrix-JSON fixtures")

    sp = sub.add_parser("decompose", help="waveplate angles for an Euler triple")
    sp.add_argument("--xi", type=float, required=True)
    sp.add_argument("--eta", type=float, required=True)
    sp.add_argument("--zeta", type=float, required=True)
    sp.add_argument("--convention", choices=sorted(CONVENTIONS), default=DEFAULT_CONVENTION)
    sp.add_argument("--json", action="store_true", help="print the full JSON report")
    return ap


def _run(args) -> int:
    if args.command == "decompose":
        rep = cmd_decompose(args.xi, args.eta, args.zeta, args.convention)
        if args.json:
            sys.stdout.write(dumps_report(rep))
            return 0
        print(f"convention: {rep['convention']}")
        print("radians: " + "  ".join(f"theta{i + 1}={t:.10f}" for i, t in enumerate(rep["radians"])))
        print("degrees: " + "  ".join(f"theta{i + 1}={t:.6f}" for i, t in enumerate(rep["degrees"])))
        print(f"round trip Q(theta3) H(theta2) Q(theta1) = u(xi, eta, zeta): {rep['round_trip']}")
        return 0

    cfg = _resolve_config(args)
    fixtures_dir = getattr(args, "fixtures", None)
    if fixtures_dir is not None and not Path(fixtures_dir).is_dir():
        raise FileNotFoundError(f"fixture directory not found: {fixtures_dir}")
    if args.command == "table2":
        rep = cmd_table2(cfg)
        stem = f"table2_{cfg.axis}"
        _print_rows(rep)
        c = rep["crossings"]
        print(f"witness S > {THRESHOLD}: {c['S_region']}   I_F > {THRESHOLD}: {c['I_F_region']}")
    elif args.command == "fig3":
        rep = cmd_fig3(cfg, fixtures_dir)
        stem = f"fig3_{cfg.axis}"
        _print_rows(rep)
    else:
        rep = cmd_tomo(cfg, fixtures_dir)
        stem = "tomo"
        for name, v in rep["state_fidelity"].items():
            print(f"{name}: fidelity {v['fidelity']:.4f} (published {v['published']})")
        for name, v in rep["bsm_fidelity"].items():
            print(f"{name}: mean projector fidelity {v['mean']:.4f} (published {v['published']})")
        mle = rep["mle_self_consistency"]
        worst_state = max(v["trace_distance"] for v in mle["states"].values())
        worst_det = max(v["max_trace_distance"] for v in mle["detectors"].values())
        print(f"MLE self-consistency: states {worst_state:.2e}, detectors {worst_det:.2e} (trace distance)")
    if not args.no_write:
        for path in write_outputs(rep, cfg.output_dir, stem):
            print(f"wrote {path}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ValidationError as exc:
        print(f"qspeed: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"qspeed: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
