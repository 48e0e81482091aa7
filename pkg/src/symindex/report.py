"""Scenario pipeline and report emitters.

``run_scenario`` composes every stage (orbit checks, integration, Maslov
indices, Galerkin spectral indices, splitting, stability, parity ledger)
and returns an :class:`IndexReport` plus plot series.  Reports serialise to
the ``report_v1`` JSON schema, a flat CSV row, or a text summary.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from ._kernels import numba_active
from .errors import (
    MissingTprime,
    NotNonNull,
    ScenarioError,
    SplitResidualTooLarge,
    StageError,
    SymIndexError,
)
from .index_form import analytic_s0_bound, build_basis, check_relation_geo_spec, difference_decomposition
from .index_form import eigen_trajectories, spectral_indices
from .maslov import clm_graph_index
from .orbit_io import load_orbit
from .orbit_model import NullClass, OrbitData, estimate_tprime, fundamental_solution, geometrical_index
from .orbit_model import kappa_classify
from .presets import PRESETS, build_preset
from .stability import (
    CriterionOutcome,
    StabilityTag,
    clm_parity_instability,
    instability_criterion,
    multiplier_clusters,
    parity_audit,
    splitting_reduce,
    stability_classify,
)
from .symplectic_core import SymplecticPath, numerical_rank

__all__ = [
    "SCHEMA",
    "Scenario",
    "IndexReport",
    "PlotData",
    "run_scenario",
    "resolve_orbit",
    "report_to_dict",
    "report_from_dict",
    "reports_to_json",
    "reports_from_json",
    "reports_to_csv",
    "report_to_text",
    "plot_rows",
    "plot_to_csv",
]

SCHEMA = "report_v1"
DEFAULT_STEPS = 2000
DEFAULT_N = 32


@dataclass
class Scenario:
    """A preset id or orbit file plus numeric overrides."""

    name: str
    options: dict[str, Any] = field(default_factory=dict)
    steps: int = DEFAULT_STEPS
    galerkin_n: int = DEFAULT_N
    integrator: str = "gauss4"
    split_tol: float = 1e-6
    stability_tol: float = 1e-8
    s0: float | None = None


@dataclass
class IndexReport:
    scenario: str
    orbit: str
    n: int
    ispec_free: int
    ispec_fixed: int
    igeo: int
    iclm_gamma1: int | None
    iclm_gamma2: int | None
    dim_ker_A_minus_I: int
    orientation: int
    null_class: str
    kappa_sign: int
    kappa_min: float
    kappa_max: float
    tprime_h: float
    tprime_source: str
    gamma1_slope: float | None
    symplecticity_residual: float
    symplecticity_residual_half: float
    integration_error: float
    split_residual: float | None
    splitting_available: bool
    difference: dict[str, Any]
    relation_geo_spec: dict[str, Any]
    stability: dict[str, Any]
    criterion: dict[str, Any]
    parity_ledger: dict[str, Any]
    provenance: dict[str, Any]


@dataclass
class PlotData:
    times: np.ndarray
    kappa: np.ndarray
    monodromy_multipliers: np.ndarray
    px_multipliers: np.ndarray
    sweep_s: np.ndarray
    sweep_free: np.ndarray
    sweep_fixed: np.ndarray


def resolve_orbit(scenario: Scenario) -> OrbitData:
    if scenario.name in PRESETS:
        return build_preset(scenario.name, **scenario.options)
    path = Path(scenario.name)
    if path.is_file():
        return load_orbit(path)
    raise ScenarioError(f"{scenario.name!r} is neither a preset ({', '.join(PRESETS)}) nor an orbit file")


def _stage(name: str):
    class _Guard:
        def __enter__(self):
            return self

        def __exit__(self, kind, err, tb):
            if isinstance(err, SymIndexError) and not isinstance(err, StageError):
                raise StageError(name, err) from err
            return False

    return _Guard()


def _tprime(orbit: OrbitData) -> tuple[OrbitData, str]:
    if orbit.tprime_h is not None:
        return orbit, "given"
    if orbit.period_fn is None and orbit.family is None:
        raise MissingTprime(f"orbit {orbit.name!r} carries no T'(h) and no energy family")
    return orbit.with_tprime(estimate_tprime(orbit, orbit.h)), "estimated"


def _shear_path(slope: float) -> SymplecticPath:
    ts = np.linspace(0.0, 1.0, 33)
    return SymplecticPath(ts, np.array([[[1.0, 0.0], [slope * t, 1.0]] for t in ts]))


def _multipliers(clusters) -> list[dict[str, Any]]:
    return [{"re": float(c.value.real), "im": float(c.value.imag), "algebraic": c.algebraic,
             "geometric": c.geometric} for c in clusters]


def run_scenario(scenario: Scenario) -> tuple[IndexReport, PlotData]:
    """Run the full pipeline; upstream errors are wrapped in StageError with the stage name.

    A failed cylinder splitting does not abort the run: the report carries
    the unreduced indices with ``splitting_available`` false.
    """
    with _stage("scenario"):
        orbit = resolve_orbit(scenario)
    with _stage("orbit"):
        kappa, cls = kappa_classify(orbit)
        if cls is NullClass.NOT_NON_NULL:
            raise NotNonNull(f"orbit {orbit.name!r} is not non-null: kappa ranges over "
                             f"[{float(np.min(kappa)):.3g}, {float(np.max(kappa)):.3g}]")
        orbit, tsource = _tprime(orbit)
    with _stage("integration"):
        psi = fundamental_solution(orbit, scenario.steps, scenario.integrator)
    with _stage("geometric_index"):
        igeo, mono = geometrical_index(orbit, psi)
    with _stage("spectral_index"):
        basis = build_basis(orbit, scenario.galerkin_n)
        spec = spectral_indices(orbit, basis, s0=scenario.s0)
        diff = difference_decomposition(orbit, basis, spec)
        rel_ok, _, rel_rhs = check_relation_geo_spec(orbit, basis, psi, spec.ispec_fixed)
        s0_bound = analytic_s0_bound(orbit)
        sweep_s, sweep_free = eigen_trajectories(spec.free, spec.s0)
        _, sweep_fixed = eigen_trajectories(spec.fixed, spec.s0)

    split = None
    split_error = None
    with _stage("splitting"):
        try:
            split = splitting_reduce(orbit, psi, scenario.split_tol)
        except SplitResidualTooLarge as err:
            split_error = err
    ksign = 1 if cls is NullClass.L_POSITIVE else -1
    dim_ker = orbit.n - numerical_rank(orbit.A - np.eye(orbit.n), 1e-8)
    with _stage("stability"):
        if split is not None:
            g1 = clm_graph_index(_shear_path(split.gamma1_slope))
            g2 = clm_graph_index(split.px_path) if split.px_path.n else 0
            px1 = split.px1.entries
            verdict = stability_classify(px1, scenario.stability_tol)
            lemma = clm_parity_instability(split.px_path, g2)
        else:
            g1 = g2 = None
            px1 = np.zeros((0, 0))
            verdict = None
            lemma = None
        theorem = instability_criterion(cls, orbit.orientation, spec.ispec_free, orbit.n, orbit.tprime_h)
        sound = True
        if verdict is not None and CriterionOutcome.CERTIFIED_UNSTABLE in (theorem, lemma):
            sound = verdict.tag is not StabilityTag.LINEARLY_STABLE

    report = IndexReport(
        scenario=scenario.name,
        orbit=orbit.name,
        n=orbit.n,
        ispec_free=spec.ispec_free,
        ispec_fixed=spec.ispec_fixed,
        igeo=igeo,
        iclm_gamma1=g1,
        iclm_gamma2=g2,
        dim_ker_A_minus_I=dim_ker,
        orientation=orbit.orientation,
        null_class=str(cls),
        kappa_sign=ksign,
        kappa_min=float(np.min(kappa)),
        kappa_max=float(np.max(kappa)),
        tprime_h=float(orbit.tprime_h),
        tprime_source=tsource,
        gamma1_slope=None if split is None else float(split.gamma1_slope),
        symplecticity_residual=float(psi.meta["residual"]),
        symplecticity_residual_half=float(psi.meta["residual_half"]),
        integration_error=float(psi.meta["error_estimate"]),
        split_residual=None if split is None else float(split.residual),
        splitting_available=split is not None,
        difference={
            "value": diff.difference, "leg_0": diff.leg_0, "leg_s0": diff.leg_s0,
            "table_total": diff.table_total, "table_leg_0": diff.table_leg_0,
            "table_leg_s0": diff.table_leg_s0, "matches_table": diff.matches_table,
        },
        relation_geo_spec={"holds": bool(rel_ok), "igeo": igeo, "rhs": int(rel_rhs)},
        stability={
            "verdict": None if verdict is None else str(verdict.tag),
            "px_multipliers": [] if verdict is None else _multipliers(verdict.multipliers),
            "monodromy_multipliers": _multipliers(multiplier_clusters(mono.entries)),
        },
        criterion={
            "theorem": str(theorem),
            "clm_parity": None if lemma is None else str(lemma),
            "soundness_ok": sound,
        },
        parity_ledger={},
        provenance={
            "version": __version__,
            "backend": "numba" if numba_active() else "numpy",
            "N": scenario.galerkin_n,
            "basis_size": basis.size,
            "steps": scenario.steps,
            "integrator": scenario.integrator,
            "s0": spec.s0,
            "s0_analytic_bound": s0_bound,
            "gap": spec.gap,
            "quadrature_panels": spec.free.quadrature.get("panels"),
            "split_error": None if split_error is None else str(split_error),
            "tolerances": {
                "split_tol": scenario.split_tol,
                "stability_tol": scenario.stability_tol,
                "kappa_null_rel": 1e-9,
                "bc_tol": orbit.bc_tol,
            },
            "options": {k: scenario.options[k] for k in sorted(scenario.options)},
        },
    )
    if split is not None:
        with _stage("parity_audit"):
            ledger = parity_audit(report)
        report.parity_ledger = {"terms": list(ledger.terms), "checks": dict(ledger.checks), "lines": ledger.lines()}

    plot = PlotData(
        times=orbit.grid,
        kappa=kappa,
        monodromy_multipliers=np.linalg.eigvals(mono.entries),
        px_multipliers=np.linalg.eigvals(px1) if px1.size else np.zeros(0, dtype=complex),
        sweep_s=sweep_s,
        sweep_free=sweep_free,
        sweep_fixed=sweep_fixed,
    )
    return report, plot


# ---------------------------------------------------------------- serialisation


def _clean(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def report_to_dict(report: IndexReport) -> dict[str, Any]:
    return _clean(asdict(report))


_FIELDS = tuple(IndexReport.__dataclass_fields__)


def report_from_dict(doc: dict[str, Any]) -> IndexReport:
    missing = [f for f in _FIELDS if f not in doc]
    extra = [k for k in doc if k not in _FIELDS]
    if missing or extra:
        raise ValueError(f"report does not match {SCHEMA}: missing {missing}, unexpected {extra}")
    return IndexReport(**{f: doc[f] for f in _FIELDS})


def reports_to_json(reports: list[IndexReport]) -> str:
    doc = {"schema": SCHEMA, "generator": f"symindex {__version__}",
           "reports": [report_to_dict(r) for r in reports]}
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def reports_from_json(text: str) -> list[IndexReport]:
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"expected schema {SCHEMA}, found {doc.get('schema')!r}")
    return [report_from_dict(r) for r in doc["reports"]]


CSV_COLUMNS = (
    "scenario", "orbit", "n", "ispec_free", "ispec_fixed", "igeo", "iclm_gamma1", "iclm_gamma2",
    "dim_ker_A_minus_I", "orientation", "null_class", "kappa_min", "kappa_max", "tprime_h",
    "gamma1_slope", "difference", "difference_table", "symplecticity_residual", "split_residual",
    "splitting_available", "stability", "criterion", "clm_parity", "parity_ledger_ok", "N", "steps", "s0",
)


def _csv_row(r: IndexReport) -> dict[str, Any]:
    checks = r.parity_ledger.get("checks", {})
    return {
        "scenario": r.scenario, "orbit": r.orbit, "n": r.n, "ispec_free": r.ispec_free,
        "ispec_fixed": r.ispec_fixed, "igeo": r.igeo, "iclm_gamma1": r.iclm_gamma1,
        "iclm_gamma2": r.iclm_gamma2, "dim_ker_A_minus_I": r.dim_ker_A_minus_I,
        "orientation": r.orientation, "null_class": r.null_class, "kappa_min": repr(r.kappa_min),
        "kappa_max": repr(r.kappa_max), "tprime_h": repr(r.tprime_h), "gamma1_slope": r.gamma1_slope,
        "difference": r.difference["value"], "difference_table": r.difference["table_total"],
        "symplecticity_residual": repr(r.symplecticity_residual), "split_residual": r.split_residual,
        "splitting_available": r.splitting_available, "stability": r.stability["verdict"],
        "criterion": r.criterion["theorem"], "clm_parity": r.criterion["clm_parity"],
        "parity_ledger_ok": bool(checks) and all(checks.values()), "N": r.provenance["N"],
        "steps": r.provenance["steps"], "s0": r.provenance["s0"],
    }


def reports_to_csv(reports: list[IndexReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow({k: ("" if v is None else v) for k, v in _csv_row(r).items()})
    return buf.getvalue()


def report_to_text(r: IndexReport) -> str:
    d = r.difference
    lines = [
        f"scenario {r.scenario} (orbit {r.orbit}, n={r.n}, {r.null_class}, "
        f"{'orientation preserving' if r.orientation > 0 else 'orientation reversing'})",
        f"  kappa in [{r.kappa_min:.6g}, {r.kappa_max:.6g}]   T'(h) = {r.tprime_h:.10g} ({r.tprime_source})",
        f"  ispec_free = {r.ispec_free}   ispec_fixed = {r.ispec_fixed}   igeo = {r.igeo}",
        f"  difference = {d['value']} (legs {d['leg_0']} + {d['leg_s0']}; table {d['table_total']} = "
        f"{d['table_leg_0']} + {d['table_leg_s0']}; {'match' if d['matches_table'] else 'MISMATCH'})",
        f"  igeo = ispec_fixed + dim ker(A-I): {r.relation_geo_spec['igeo']} vs {r.relation_geo_spec['rhs']}"
        f" ({'holds' if r.relation_geo_spec['holds'] else 'FAILS'})",
    ]
    if r.splitting_available:
        lines.append(f"  splitting: slope {r.gamma1_slope:.10g}, iclm(gamma1) = {r.iclm_gamma1}, "
                     f"iclm(gamma2) = {r.iclm_gamma2}, residual {r.split_residual:.2e}")
        lines.append(f"  P_x(1): {r.stability['verdict']}")
    else:
        lines.append(f"  splitting unavailable: {r.provenance['split_error']}")
    lemma = r.criterion["clm_parity"] or "unavailable"
    lines.append(f"  criterion: {r.criterion['theorem']}   odd-index lemma: {lemma}")
    if r.parity_ledger:
        lines.append("  parity ledger:")
        lines += ["    " + s for s in r.parity_ledger["lines"]]
    lines.append(f"  symplecticity residual {r.symplecticity_residual:.2e} "
                 f"(half step {r.symplecticity_residual_half:.2e}), N={r.provenance['N']}, "
                 f"steps={r.provenance['steps']}, s0={r.provenance['s0']:g}")
    return "\n".join(lines) + "\n"


def plot_rows(scenario: str, plot: PlotData) -> list[tuple]:
    """Long-format rows (scenario, series, x, index, value, imag)."""
    rows: list[tuple] = []
    for t, k in zip(plot.times, plot.kappa):
        rows.append((scenario, "kappa", repr(float(t)), 0, repr(float(k)), ""))
    for name, vals in (("monodromy_multiplier", plot.monodromy_multipliers), ("px_multiplier", plot.px_multipliers)):
        order = np.lexsort((np.round(vals.imag, 12), np.round(vals.real, 12)))
        for i, lam in enumerate(vals[order]):
            rows.append((scenario, name, "", i, repr(float(lam.real)), repr(float(lam.imag))))
    for name, data in (("sweep_free", plot.sweep_free), ("sweep_fixed", plot.sweep_fixed)):
        for s, row in zip(plot.sweep_s, data):
            for i, v in enumerate(row):
                rows.append((scenario, name, repr(float(s)), i, repr(float(v)), ""))
    return rows


def plot_to_csv(items: list[tuple[str, PlotData]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("scenario", "series", "x", "index", "value", "imag"))
    for scenario, plot in items:
        writer.writerows(plot_rows(scenario, plot))
    return buf.getvalue()
