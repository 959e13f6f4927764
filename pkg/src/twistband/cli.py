"""Command-line front end: validated JSON config in, CSV/SVG/JSON report out.

Every scenario writes its tables as CSV (fixed column order, ``%.12e``
floats, one grid tag and the config hash on every row), its rate plots as
self-contained SVG, and a single ``summary.json`` holding the fitted rates,
recorded residuals, and one verdict per gate.  All files are assembled in a
temporary directory and renamed into place, so an interrupted run leaves no
partial files behind.  Outputs are deterministic for a fixed config and
seed: no timestamps are written, the SVG id salt is pinned to the config
hash, and parallel cells are always reduced in a fixed order.

Exit codes: 0 when every gate passes, 2 when at least one gate fails,
1 on configuration or execution errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import numpy as np
from jsonschema import Draft202012Validator
from matplotlib.figure import Figure

from . import __version__
from .convergence import (
    EPS_DEFAULT,
    ErrorTable,
    GridPolicy,
    OverlapCase,
    WindowCase,
    bounded_ratio,
    default_test_family,
    discretization_guard,
    fit_rate,
    run_case,
    window_test_family,
)
from .effective import (
    FREE_LINE,
    apply_effective_resolvent,
    dirichlet_at_pm_l,
    green_kernel,
    twisted_at_zero,
    twisted_explicit_solution,
)
from .geometry import TRANSVERSE_THRESHOLD, LineFunction
from .spectral import CountingGridSpec, find_critical_length
from .threshold import (
    CRITICALITY_GATE,
    ThresholdGridSpec,
    aux_min_singular_value,
    solve_aux_problem,
    solve_virtual_level,
    threshold_identity_residuals,
    twisted_min_singular_value,
)

__all__ = [
    "SCENARIOS",
    "ConfigError",
    "ReportBundle",
    "RunConfig",
    "main",
    "parse_config",
    "run_scenario",
]

SCENARIOS = (
    "critical_lengths",
    "virtual_level",
    "threshold_identities",
    "aux_problem",
    "rates_overlap",
    "rates_window",
    "all",
)

#: gate used by the certificate scenario: per-step drift of the normalized
#: junction certificate across the fixed window ladder
CERT_WINDOWS = (40.0, 44.0, 48.0)

#: mu sample for the channel-coefficient stability gate (inside the
#: aux solver's validity disc |mu| <= 0.3, Re mu >= 0)
MU_SAMPLE = (0.05, 0.08 + 0.04j, 0.10, 0.12 - 0.04j, 0.15)

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scenario": {"enum": list(SCENARIOS)},
        "ell": {"type": "number", "exclusiveMinimum": 0},
        "ell_critical_seed": {"type": "number", "exclusiveMinimum": 0},
        "window_half_length": {"type": "number", "exclusiveMinimum": 0},
        "lam_re": {"type": "number"},
        "lam_im": {"type": "number"},
        "eps_list": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.3},
            "minItems": 4,
        },
        "n2": {"type": "integer", "minimum": 5},
        "target_h1": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.25},
        "truncation": {"type": "number", "minimum": 10},
        "window_margin": {"type": "number", "minimum": 10},
        "count_truncation": {"type": "number", "minimum": 20},
        "count_target_h1": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.25},
        "bracket_tol": {"type": "number", "exclusiveMinimum": 0},
        "out_dir": {"type": "string", "minLength": 1},
        "threads": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
}

_DEFAULTS: dict[str, Any] = {
    "ell": 0.14,
    "ell_critical_seed": 0.2834,
    "window_half_length": 1.0,
    "lam_re": 0.0,
    "lam_im": 1.0,
    "eps_list": list(EPS_DEFAULT),
    "n2": 17,
    "target_h1": 0.05,
    "truncation": 20.0,
    "window_margin": 14.0,
    "count_truncation": 60.0,
    "count_target_h1": 0.035,
    "bracket_tol": 1e-3,
    "out_dir": "report",
    "threads": 1,
    "seed": 0,
}

#: keys that describe where/how to run rather than what to compute; they are
#: excluded from the config hash and from the summary's config echo so that
#: identical experiments hash and serialize identically
_EXECUTION_KEYS = ("out_dir", "threads")


class ConfigError(ValueError):
    """Configuration rejected: message names the offending key."""


@dataclass(frozen=True)
class RunConfig:
    """Validated scenario configuration with all defaults filled."""

    scenario: str
    ell: float
    ell_critical_seed: float
    window_half_length: float
    lam: complex
    eps_list: tuple[float, ...]
    n2: int
    target_h1: float
    truncation: float
    window_margin: float
    count_truncation: float
    count_target_h1: float
    bracket_tol: float
    out_dir: Path
    threads: int
    seed: int

    def science_dict(self) -> dict[str, Any]:
        """The experiment description: everything except execution details."""
        d = {
            "scenario": self.scenario,
            "ell": self.ell,
            "ell_critical_seed": self.ell_critical_seed,
            "window_half_length": self.window_half_length,
            "lam_re": self.lam.real,
            "lam_im": self.lam.imag,
            "eps_list": list(self.eps_list),
            "n2": self.n2,
            "target_h1": self.target_h1,
            "truncation": self.truncation,
            "window_margin": self.window_margin,
            "count_truncation": self.count_truncation,
            "count_target_h1": self.count_target_h1,
            "bracket_tol": self.bracket_tol,
            "seed": self.seed,
        }
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.science_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def grid_tag(self) -> str:
        return f"n2={self.n2};h1={self.target_h1:g};X={self.truncation:g}"

    def policy(self) -> GridPolicy:
        return GridPolicy(
            n2=self.n2,
            target_h1=self.target_h1,
            overlap_truncation=self.truncation,
            window_margin=self.window_margin,
        )

    def threshold_spec(self, truncation: float | None = None) -> ThresholdGridSpec:
        return ThresholdGridSpec(
            truncation=self.truncation if truncation is None else truncation,
            n2=self.n2,
            target_h1=self.target_h1,
        )


def parse_config(source: str | Path, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Load, merge, and validate a run configuration.

    `source` is a path to a JSON file or an inline JSON object string.
    `overrides` (from CLI flags) are merged on top before validation, so a
    flag can both supply a missing key and replace a file value.
    """
    text: str
    if isinstance(source, Path) or not str(source).lstrip().startswith("{"):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    else:
        text = str(source)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    merged = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    validator = Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(merged), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        key = ".".join(str(p) for p in e.absolute_path) or "config"
        raise ConfigError(f"{key}: {e.message}")
    if "scenario" not in merged:
        raise ConfigError("scenario: required (set it in the config or via --scenario)")

    filled = {**_DEFAULTS, **merged}
    lam = complex(filled["lam_re"], filled["lam_im"])
    if lam.imag == 0:
        raise ConfigError("lam_im: must be nonzero (the comparison lives in the resolvent set)")
    eps = tuple(float(e) for e in filled["eps_list"])
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("eps_list: values must be strictly decreasing")
    return RunConfig(
        scenario=filled["scenario"],
        ell=float(filled["ell"]),
        ell_critical_seed=float(filled["ell_critical_seed"]),
        window_half_length=float(filled["window_half_length"]),
        lam=lam,
        eps_list=eps,
        n2=int(filled["n2"]),
        target_h1=float(filled["target_h1"]),
        truncation=float(filled["truncation"]),
        window_margin=float(filled["window_margin"]),
        count_truncation=float(filled["count_truncation"]),
        count_target_h1=float(filled["count_target_h1"]),
        bracket_tol=float(filled["bracket_tol"]),
        out_dir=Path(filled["out_dir"]),
        threads=int(filled["threads"]),
        seed=int(filled["seed"]),
    )


# ---------------------------------------------------------------------------
# scenario runners
# ---------------------------------------------------------------------------

Row = tuple[Any, ...]
Table = tuple[tuple[str, ...], list[Row]]


@dataclass
class _ScenarioResult:
    tables: dict[str, Table] = field(default_factory=dict)
    figures: dict[str, Figure] = field(default_factory=dict)
    gates: dict[str, bool] = field(default_factory=dict)
    info: dict[str, Any] = field(default_factory=dict)

    def merge(self, other: "_ScenarioResult") -> None:
        for name, attr in (("tables", other.tables), ("figures", other.figures)):
            dup = set(getattr(self, name)) & set(attr)
            if dup:
                raise RuntimeError(f"duplicate report {name}: {sorted(dup)}")
            getattr(self, name).update(attr)
        dup = set(self.gates) & set(other.gates)
        if dup:
            raise RuntimeError(f"duplicate gates: {sorted(dup)}")
        self.gates.update(other.gates)
        self.info.update(other.info)


def _scenario_critical_lengths(cfg: RunConfig, rng: np.random.Generator) -> _ScenarioResult:
    spec = CountingGridSpec(
        truncation=cfg.count_truncation, n2=cfg.n2, target_h1=cfg.count_target_h1
    )
    res = _ScenarioResult()
    rows: list[Row] = []
    values: dict[int, float] = {}
    worst_dev = 0.0
    for n in (1, 2):
        base = find_critical_length(n, tol=cfg.bracket_tol, spec=spec)
        halved = find_critical_length(n, tol=cfg.bracket_tol, spec=spec.refined())
        widened = find_critical_length(n, tol=cfg.bracket_tol, spec=spec.widened(5.0))
        dev = max(abs(halved.value - base.value), abs(widened.value - base.value))
        worst_dev = max(worst_dev, dev)
        values[n] = base.value
        rows.append((n, base.value, base.width, spec.target_h1, dev))
    res.tables["critical_lengths"] = (
        ("n", "ell_n", "bracket", "grid_h", "agreement"),
        rows,
    )
    res.gates["critical_bracket_width"] = all(r[2] <= cfg.bracket_tol for r in rows)
    res.gates["critical_order"] = values[1] < values[2]
    res.gates["critical_grid_stability"] = worst_dev <= 3e-3
    res.info["critical_lengths"] = {str(n): v for n, v in values.items()}
    res.info["critical_length_worst_deviation"] = worst_dev
    return res


def _virtual_levels(cfg: RunConfig) -> dict[int, Any]:
    spec = cfg.threshold_spec()
    seeds = {1: cfg.ell_critical_seed, 2: 1.2275}
    return {n: solve_virtual_level(seeds[n], n, spec) for n in (1, 2)}


def _scenario_virtual_level(cfg: RunConfig, rng: np.random.Generator) -> _ScenarioResult:
    res = _ScenarioResult()
    decay_gate = 0.9 * math.sqrt(2.0) * math.pi
    rows: list[Row] = []
    vls = _virtual_levels(cfg)
    for n, vl in vls.items():
        rows.append(
            (
                n,
                vl.ell,
                vl.residual,
                vl.parity_sign,
                vl.parity_residual,
                vl.decay_rate,
                vl.is_certified,
            )
        )
    res.tables["virtual_levels"] = (
        ("n", "ell", "residual", "parity_sign", "parity_residual", "decay_rate", "certified"),
        rows,
    )
    res.gates["virtual_residuals_certified"] = all(vl.is_certified for vl in vls.values())
    res.gates["virtual_parity_signs"] = (
        vls[1].parity_sign == 1
        and vls[2].parity_sign == -1
        and all(vl.parity_residual <= 1e-3 for vl in vls.values())
    )
    res.gates["virtual_decay_rate"] = all(vl.decay_rate >= decay_gate for vl in vls.values())
    res.info["virtual_levels"] = {
        str(n): {"ell": vl.ell, "residual": vl.residual, "decay_rate": vl.decay_rate}
        for n, vl in vls.items()
    }
    return res


def _scenario_threshold_identities(cfg: RunConfig, rng: np.random.Generator) -> _ScenarioResult:
    res = _ScenarioResult()
    rows: list[Row] = []
    all_base_ok = True
    all_refined_ok = True
    values_ok = True
    for n in (1, 2):
        base_vl = solve_virtual_level(
            cfg.ell_critical_seed if n == 1 else 1.2275, n, cfg.threshold_spec()
        )
        fine_vl = solve_virtual_level(base_vl.ell, n, cfg.threshold_spec().refined())
        base = threshold_identity_residuals(base_vl)
        fine = threshold_identity_residuals(fine_vl)
        for k in range(6):
            rb, rf = float(base.residuals[k]), float(fine.residuals[k])
            rows.append((n, k + 1, rb, rf, rb / rf if rf > 0 else math.inf))
        all_base_ok &= bool(np.all(base.residuals <= 5e-2))
        all_refined_ok &= bool(np.all(fine.residuals <= base.residuals / 1.5 + 1e-12))
        sign = base.parity_sign
        values_ok &= abs(base.value_plus - 0.5) <= 5e-2
        values_ok &= abs(base.value_minus - sign * 0.5) <= 5e-2
    res.tables["threshold_identities"] = (
        ("n", "identity", "residual_baseline", "residual_refined", "reduction"),
        rows,
    )
    res.gates["identity_residuals_baseline"] = all_base_ok
    res.gates["identity_residuals_refined"] = all_refined_ok
    res.gates["identity_values"] = values_ok

    # seeded spot checks of the line kernels backing the effective models
    pts = rng.uniform(-6.0, 6.0, size=(1000, 2))
    lam = cfg.lam
    mu = complex(np.sqrt(complex(-lam)))  # kernel decay root, Re mu > 0
    worst_conj = 0.0
    for x, t in pts:
        tw = green_kernel(twisted_at_zero(-1), mu, x, t)
        sx = 1.0 if x > 0 else -1.0
        st = 1.0 if t > 0 else -1.0
        free = green_kernel(FREE_LINE, mu, x, t)
        worst_conj = max(worst_conj, abs(tw - sx * free * st))
    grid_x = np.linspace(-10.0, 10.0, 2001)
    bump = np.exp(-grid_x**2).astype(complex)
    g = LineFunction(x=grid_x, values=bump)
    direct = twisted_explicit_solution(g, 0.1, lam, 2)
    quad = apply_effective_resolvent(twisted_at_zero(-1), lam, g)
    rel = float(
        np.abs(direct.values - quad.values).max() / np.abs(quad.values).max()
    )
    res.gates["kernel_conjugation"] = worst_conj <= 1e-12
    res.gates["kernel_dual_path"] = rel <= 1e-6
    res.info["kernel_checks"] = {"conjugation_max": worst_conj, "dual_path_rel": rel}
    res.tables["kernel_checks"] = (
        ("check", "points", "max_error"),
        [("conjugation", len(pts), worst_conj), ("dual_path", grid_x.size, rel)],
    )
    return res


def _scenario_aux_problem(cfg: RunConfig, rng: np.random.Generator) -> _ScenarioResult:
    res = _ScenarioResult()
    cert_rows: list[Row] = []
    ladder: list[float] = []
    for X in CERT_WINDOWS:
        s = aux_min_singular_value(TRANSVERSE_THRESHOLD, 0.0, cfg.threshold_spec(X))
        ladder.append(s)
        cert_rows.append((X, s))
    steps = [abs(b - a) / a for a, b in zip(ladder, ladder[1:])]
    vl = solve_virtual_level(cfg.ell_critical_seed, 1, cfg.threshold_spec(CERT_WINDOWS[0]))
    control = twisted_min_singular_value(
        vl.ell, cfg.threshold_spec(CERT_WINDOWS[0]), vl.junction_cells
    )
    res.tables["junction_certificate"] = (("window", "sigma_min"), cert_rows)
    res.gates["certificate_stability"] = max(steps) <= 0.20
    res.gates["certificate_margin"] = ladder[0] >= 100.0 * control
    res.info["certificate"] = {
        "ladder": ladder,
        "worst_step": max(steps),
        "critical_control": control,
    }

    coeff_rows: list[Row] = []
    coeff_ok = True
    spec = cfg.threshold_spec()
    for energy in (0.0, TRANSVERSE_THRESHOLD):
        qs = []
        for mu in MU_SAMPLE:
            sol = solve_aux_problem(None, mu, energy, spec)
            qs.append(sol.bound_quotient)
            coeff_rows.append((energy, complex(mu).real, complex(mu).imag, sol.bound_quotient))
        qs_arr = np.asarray(qs)
        coeff_ok &= float(np.abs(qs_arr - qs_arr.mean()).max() / qs_arr.mean()) <= 0.25
    res.tables["channel_coefficients"] = (
        ("energy", "mu_re", "mu_im", "coefficient"),
        coeff_rows,
    )
    res.gates["coefficient_stability"] = coeff_ok
    return res


def _rate_figure(tables: Mapping[str, ErrorTable], title: str, salt: str) -> Figure:
    """Log-log error plot with half- and three-halves-power reference lines."""
    matplotlib.rcParams["svg.hashsalt"] = salt
    fig = Figure(figsize=(6.4, 4.8))
    ax = fig.subplots()
    eps_all: list[float] = []
    for case_label, table in tables.items():
        for fid in table.f_ids:
            eps, err = table.errors(fid, "l2")
            eps_all.extend(eps)
            ax.loglog(eps, err, marker="o", label=f"{case_label}:{fid}")
    lo, hi = min(eps_all), max(eps_all)
    ref = np.array([lo, hi])
    for p, style in ((0.5, "--"), (1.5, ":")):
        ax.loglog(ref, 0.5 * (ref / hi) ** p, style, color="gray", label=f"slope {p}")
    ax.set_xlabel("strip height eps")
    ax.set_ylabel("relative error (strip L2)")
    ax.set_title(title)
    ax.legend(fontsize=7)
    ax.grid(True, which="both", alpha=0.3)
    return fig


def _sweep_table(table: ErrorTable) -> list[Row]:
    return [
        (r.eps, r.f_id, r.err_l2, r.err_h1, r.f_norm, r.h1, r.n2, r.truncation, r.junction)
        for r in table.rows
    ]


_SWEEP_COLUMNS = (
    "eps",
    "f_id",
    "err_l2",
    "err_h1",
    "f_norm",
    "h1",
    "n2",
    "truncation",
    "junction",
)


def _fit_rows(table: ErrorTable, case_label: str) -> list[Row]:
    rows: list[Row] = []
    for fid in table.f_ids:
        for norm in ("l2", "h1"):
            fit = fit_rate(table, fid, norm)
            rows.append((case_label, fid, norm, fit.slope, fit.intercept, fit.r_squared))
    return rows


def _scenario_rates_overlap(cfg: RunConfig, rng: np.random.Generator) -> _ScenarioResult:
    res = _ScenarioResult()
    policy = cfg.policy()
    noncrit = run_case(
        OverlapCase(cfg.ell), cfg.lam, None, cfg.eps_list, policy, threads=cfg.threads
    )
    crit = run_case(
        OverlapCase(cfg.ell_critical_seed, critical_index=1),
        cfg.lam,
        None,
        cfg.eps_list,
        policy,
        threads=cfg.threads,
    )
    res.tables["rates_overlap_noncritical"] = (_SWEEP_COLUMNS, _sweep_table(noncrit))
    res.tables["rates_overlap_critical"] = (_SWEEP_COLUMNS, _sweep_table(crit))
    fit_rows = _fit_rows(noncrit, "noncritical") + _fit_rows(crit, "critical")
    res.tables["rates_overlap_fits"] = (
        ("case", "f_id", "norm", "slope", "intercept", "r_squared"),
        fit_rows,
    )
    res.figures["rates_overlap"] = _rate_figure(
        {"noncritical": noncrit, "critical": crit},
        f"junction rates, ell={cfg.ell:g} and first critical length",
        cfg.config_hash,
    )

    mode1 = [s.label for s in default_test_family() if 1 in s.modes]
    nc_l2 = {f: fit_rate(noncrit, f, "l2") for f in mode1}
    res.gates["overlap_noncritical_slope"] = all(f.slope >= 1.35 for f in nc_l2.values())
    res.gates["overlap_noncritical_fit_quality"] = all(
        f.r_squared >= 0.98 for f in nc_l2.values()
    )
    res.gates["overlap_noncritical_ratio"] = all(
        bounded_ratio(noncrit, f, 1.5, "l2") <= 3.0 for f in mode1
    )
    res.gates["overlap_h1_ratio"] = all(
        bounded_ratio(noncrit, f, 0.5, "h1") <= 3.0 for f in mode1
    )
    res.gates["critical_ratio"] = all(
        bounded_ratio(crit, f, 0.5, "l2") <= 3.0 for f in mode1
    )
    worst_nc = min(f.slope for f in nc_l2.values())
    worst_crit = max(fit_rate(crit, f, "l2").slope for f in mode1)
    res.gates["critical_slope_below_noncritical"] = worst_crit < worst_nc
    guard = discretization_guard(
        OverlapCase(cfg.ell), cfg.lam, None, cfg.eps_list[-1], policy
    )
    res.gates["overlap_guard"] = guard <= 0.1
    res.info["rates_overlap"] = {
        "noncritical_l2_slopes": {f: nc_l2[f].slope for f in mode1},
        "critical_l2_slope_max": worst_crit,
        "guard": guard,
    }
    return res


def _scenario_rates_window(cfg: RunConfig, rng: np.random.Generator) -> _ScenarioResult:
    res = _ScenarioResult()
    policy = cfg.policy()
    L = cfg.window_half_length
    cases = {
        "inside": WindowCase(L, 0.0),
        "outside": WindowCase(L, TRANSVERSE_THRESHOLD),
    }
    tables: dict[str, ErrorTable] = {}
    fit_rows: list[Row] = []
    slopes_ok = True
    quality_ok = True
    h1_ok = True
    for label, case in cases.items():
        table = run_case(case, cfg.lam, None, cfg.eps_list, policy, threads=cfg.threads)
        tables[label] = table
        res.tables[f"rates_window_{label}"] = (_SWEEP_COLUMNS, _sweep_table(table))
        fit_rows += _fit_rows(table, label)
        for fid in table.f_ids:
            fit = fit_rate(table, fid, "l2")
            slopes_ok &= fit.slope >= 1.35
            quality_ok &= fit.r_squared >= 0.98
            h1_ok &= bounded_ratio(table, fid, 0.5, "h1") <= 3.0
    res.tables["rates_window_fits"] = (
        ("case", "f_id", "norm", "slope", "intercept", "r_squared"),
        fit_rows,
    )
    res.figures["rates_window"] = _rate_figure(
        tables, f"window rates, L={L:g}", cfg.config_hash
    )
    res.gates["window_slopes"] = slopes_ok
    res.gates["window_fit_quality"] = quality_ok
    res.gates["window_h1_ratio"] = h1_ok

    # region masks: the effective resolvent must vanish identically off its
    # own region, checked on a line grid matching the smallest sweep window
    x = np.linspace(-(L + 4.0), L + 4.0, 4001)
    g = LineFunction(x=x, values=np.exp(-(x**2)).astype(complex))
    inside = apply_effective_resolvent(dirichlet_at_pm_l(L, "inside"), cfg.lam, g)
    outside = apply_effective_resolvent(dirichlet_at_pm_l(L, "outside"), cfg.lam, g)
    mask_ok = bool(
        np.all(inside.values[np.abs(x) > L] == 0)
        and np.all(outside.values[np.abs(x) < L] == 0)
    )
    res.gates["window_mask_zero"] = mask_ok
    guard = discretization_guard(
        cases["inside"], cfg.lam, None, cfg.eps_list[-1], policy
    )
    res.gates["window_guard"] = guard <= 0.1
    res.info["rates_window"] = {"guard": guard}
    return res


_RUNNERS: dict[str, Callable[[RunConfig, np.random.Generator], _ScenarioResult]] = {
    "critical_lengths": _scenario_critical_lengths,
    "virtual_level": _scenario_virtual_level,
    "threshold_identities": _scenario_threshold_identities,
    "aux_problem": _scenario_aux_problem,
    "rates_overlap": _scenario_rates_overlap,
    "rates_window": _scenario_rates_window,
}


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReportBundle:
    """Paths and verdicts of one completed run."""

    out_dir: Path
    csv_paths: tuple[Path, ...]
    svg_paths: tuple[Path, ...]
    summary_path: Path
    gates: dict[str, bool]

    @property
    def all_passed(self) -> bool:
        return all(self.gates.values())


def _format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.12e" % float(value)
    return str(value)


def _write_csv(path: Path, table: Table, grid_tag: str, config_hash: str) -> None:
    columns, rows = table
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(columns) + ["grid_tag", "config_hash"])
        for row in rows:
            writer.writerow([_format_cell(v) for v in row] + [grid_tag, config_hash])


def run_scenario(cfg: RunConfig) -> ReportBundle:
    """Execute the configured scenario and write its report atomically."""
    rng = np.random.default_rng(cfg.seed)
    result = _ScenarioResult()
    names = (
        [s for s in SCENARIOS if s != "all"] if cfg.scenario == "all" else [cfg.scenario]
    )
    for name in names:
        try:
            result.merge(_RUNNERS[name](cfg, rng))
        except (ValueError, RuntimeError) as exc:
            raise RuntimeError(f"scenario {name}: {exc}") from exc

    out_dir = cfg.out_dir
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".twistband-", dir=out_dir.parent))
    try:
        csv_names: list[str] = []
        svg_names: list[str] = []
        for name, table in sorted(result.tables.items()):
            _write_csv(tmp / f"{name}.csv", table, cfg.grid_tag, cfg.config_hash)
            csv_names.append(f"{name}.csv")
        for name, fig in sorted(result.figures.items()):
            fig.savefig(tmp / f"{name}.svg", format="svg", metadata={"Date": None})
            svg_names.append(f"{name}.svg")
        summary = {
            "config": cfg.science_dict(),
            "config_hash": cfg.config_hash,
            "gates": dict(sorted(result.gates.items())),
            "results": result.info,
            "version": __version__,
        }
        with open(tmp / "summary.json", "w") as fh:
            json.dump(summary, fh, sort_keys=True, indent=2)
            fh.write("\n")
        out_dir.mkdir(exist_ok=True)
        for name in csv_names + svg_names + ["summary.json"]:
            os.replace(tmp / name, out_dir / name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return ReportBundle(
        out_dir=out_dir,
        csv_paths=tuple(out_dir / n for n in csv_names),
        svg_paths=tuple(out_dir / n for n in svg_names),
        summary_path=out_dir / "summary.json",
        gates=dict(sorted(result.gates.items())),
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="twistband",
        description="Strip-waveguide junction studies: thresholds, certificates, and rate sweeps.",
    )
    parser.add_argument("--config", required=True, help="path to a JSON config file")
    parser.add_argument("--scenario", choices=SCENARIOS, help="override the config's scenario")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--threads", type=int, help="worker threads for sweep cells")
    parser.add_argument("--seed", type=int, help="seed for randomized spot checks")
    args = parser.parse_args(argv)
    overrides = {
        "scenario": args.scenario,
        "out_dir": args.out,
        "threads": args.threads,
        "seed": args.seed,
    }
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        bundle = run_scenario(cfg)
    except Exception as exc:  # noqa: BLE001 - surfaced with context, coded exit
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    for gate, ok in bundle.gates.items():
        print(f"{'PASS' if ok else 'FAIL'}  {gate}")
    print(f"report written to {bundle.out_dir}")
    return 0 if bundle.all_passed else 2


if __name__ == "__main__":
    sys.exit(main())
