"""Experiment runners and tabular result persistence.

Every runner maps a validated :class:`~plumesense.scenario.ScenarioConfig` to
a :class:`ResultTable` without mutating the config; given the same config and
seed the output file is byte-identical across runs.  CSV files carry
``#``-prefixed metadata lines (tool version, config hash, seed), one
``name [unit]`` header row, and values in scientific notation with 9
significant digits.  The JSON format stores the same table as one structured
record at full float precision.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional, Tuple

import numpy as np

from . import __version__
from .channel import (
    ChannelParams,
    breath_response,
    diffusion_scale,
    frequency_response,
    multi_user_response,
    steady_state_concentration,
    steady_field,
)
from .errors import DomainError, ScenarioError
from .oracles import (
    BUDGETS,
    MarchGrid,
    TransientGrid,
    empirical_pmd,
    march_steady_plume,
    march_transient_jet,
    mc_receiver_exposure,
    sampled_transfer_function,
    spectrum_oracle_report,
    steady_oracle_report,
    step_convolution,
    transient_oracle_report,
)
from .receiver import pmd_conservative, pmd_exact, q_function, receiver_exposure
from .scenario import ScenarioConfig

__all__ = [
    "ResultTable",
    "write_results",
    "read_results",
    "run_concentration_vs_distance",
    "run_delay_to_fraction",
    "run_pmd_vs_distance",
    "run_field_grid",
    "run_timeseries",
    "run_frequency_sweep",
    "run_mc_pmd",
    "run_validate_oracles",
    "RUNNERS",
]

_FILE_METADATA_KEYS = ("version", "config_hash", "seed")


# ---------------------------------------------------------------------------
# result tables
# ---------------------------------------------------------------------------


@dataclass
class ResultTable:
    """Rectangular numeric table; every column carries a unit annotation.

    ``metadata`` holds strings; only version, config_hash and seed are
    persisted (anything volatile like timestamps stays in memory so files
    are bit-stable for a fixed config and seed).
    """

    columns: Tuple[str, ...]
    units: Tuple[str, ...]
    rows: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.units = tuple(self.units)
        if len(self.columns) != len(self.units):
            raise DomainError("each column needs a unit annotation")
        self.rows = [tuple(float(v) for v in row) for row in self.rows]
        for row in self.rows:
            if len(row) != len(self.columns):
                raise DomainError("table must be rectangular")
        self.metadata = {str(k): str(v) for k, v in self.metadata.items()}

    def column(self, name: str) -> np.ndarray:
        try:
            idx = self.columns.index(name)
        except ValueError:
            raise DomainError(f"no column named {name!r}") from None
        return np.array([row[idx] for row in self.rows])

    def to_csv_text(self) -> str:
        lines = []
        for key in _FILE_METADATA_KEYS:
            if key in self.metadata:
                lines.append(f"# {key}: {self.metadata[key]}")
        lines.append(",".join(f"{c} [{u}]" for c, u in zip(self.columns, self.units)))
        for row in self.rows:
            lines.append(",".join(f"{v:.8e}" for v in row))
        return "\n".join(lines) + "\n"

    def to_json_text(self) -> str:
        record = {
            "metadata": {k: self.metadata[k] for k in _FILE_METADATA_KEYS
                         if k in self.metadata},
            "columns": list(self.columns),
            "units": list(self.units),
            "rows": [list(row) for row in self.rows],
        }
        return json.dumps(record, indent=1) + "\n"


def write_results(table: ResultTable, path, fmt: str = "csv"):
    """Persist the table; bit-stable for identical config and seed."""
    if fmt not in ("csv", "json"):
        raise DomainError(f"unknown output format {fmt!r}")
    text = table.to_csv_text() if fmt == "csv" else table.to_json_text()
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def read_results(path) -> ResultTable:
    """Read back a persisted table (either format, sniffed from content)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read results from {path}: {exc}") from exc
    stripped = text.lstrip()
    if stripped.startswith("{"):
        record = json.loads(text)
        return ResultTable(
            columns=tuple(record["columns"]),
            units=tuple(record["units"]),
            rows=[tuple(row) for row in record["rows"]],
            metadata=record.get("metadata", {}),
        )
    metadata = {}
    header = None
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            metadata[key.strip()] = value.strip()
        elif header is None:
            header = line.split(",")
        else:
            rows.append(tuple(float(v) for v in line.split(",")))
    if header is None:
        raise DomainError(f"no header row in {path}")
    columns, units = [], []
    for cell in header:
        name, _, unit = cell.partition(" [")
        columns.append(name)
        units.append(unit.rstrip("]"))
    return ResultTable(columns=tuple(columns), units=tuple(units), rows=rows,
                       metadata=metadata)


# ---------------------------------------------------------------------------
# shared runner helpers
# ---------------------------------------------------------------------------


def _metadata(config: ScenarioConfig) -> dict:
    # created_utc stays in memory only; persisted files carry just the
    # deterministic keys so identical config+seed gives identical bytes
    return {
        "version": __version__,
        "config_hash": config.config_hash,
        "seed": "none" if config.seed is None else str(config.seed),
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }


def _require_seed(config: ScenarioConfig) -> int:
    if config.seed is None:
        raise ScenarioError("seed", "stochastic experiments need a seed")
    return config.seed


def _ordered_map(fn, items, jobs: int = 1):
    """Map preserving input order; optionally fan out across threads."""
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _primary_rate(config: ScenarioConfig) -> float:
    """Breath rate of the first emitting user (the paper's single-emitter
    experiments); falls back to 1.0 so ratios stay well defined."""
    for user in config.users():
        if user.breath_rate > 0.0:
            return user.breath_rate
    return 1.0


def _linspace(rng: dict) -> np.ndarray:
    return np.linspace(rng["start"], rng["stop"], rng["num"])


# ---------------------------------------------------------------------------
# experiment runners
# ---------------------------------------------------------------------------


def run_concentration_vs_distance(config: ScenarioConfig, jobs: int = 1) -> ResultTable:
    """Steady received-concentration ratio versus downwind distance.

    Mode "center" reports the plume value at the receiver center per unit
    emission rate; mode "collected" reports the normalized sphere-and-window
    integral per unit rate, which is the quantity that actually drops when
    the wind speeds up (the on-axis point value is wind-invariant because
    the crosswind spread shrinks in exact proportion).
    """
    exp = config.experiment
    height = config.source_height
    rate = _primary_rate(config)
    mode = exp["mode"]
    orders = tuple(exp["quadrature_orders"])

    def one(case):
        u, d = case
        params = config.channel_params(wind_speed=u)
        if mode == "center":
            value = steady_state_concentration(rate, (d, 0.0, height), params, height)
        else:
            recv = config.receiver_spec(distance=d)
            value = receiver_exposure(
                recv, steady_field(rate, params, height), orders=orders, normalized=True
            )
        return (u, d, value / rate)

    cases = [(u, d) for u in exp["wind_speeds"] for d in exp["distances"]]
    rows = _ordered_map(one, cases, jobs)
    return ResultTable(
        columns=("wind_speed", "distance", "ratio"),
        units=("cm/s", "cm", "1/cm^3 per unit/s"),
        rows=rows,
        metadata=_metadata(config),
    )


def _delay_to_fraction(params: ChannelParams, height: float, distance: float,
                       fraction: float, rel_tol: float) -> float:
    """First time the breath response reaches ``fraction`` of its steady value
    at the in-line receiver point, by bisection on the monotone rise."""
    point = (distance, 0.0, height)
    steady = steady_state_concentration(1.0, point, params, height)
    target = fraction * steady

    def reached(t):
        return breath_response(1.0, 0.0, (distance, 0.0, height, t), params, height) >= target

    lo = 0.0
    hi = distance / params.wind_speed
    for _ in range(200):
        if reached(hi):
            break
        lo, hi = hi, hi * 2.0
    else:
        return math.inf
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if reached(mid):
            hi = mid
        else:
            lo = mid
    return hi


def run_delay_to_fraction(config: ScenarioConfig, jobs: int = 1,
                          fraction: Optional[float] = None) -> ResultTable:
    """Propagation delay until the breath response reaches a fraction of its
    steady value, for each wind speed and distance.  ``fraction`` overrides
    the configured target when given."""
    exp = config.experiment
    height = config.source_height
    fraction = exp["fraction"] if fraction is None else float(fraction)
    if not (0.0 < fraction < 1.0):
        raise ScenarioError("experiment.fraction", "must lie in (0, 1)")
    rel_tol = exp["rel_tol"]

    def one(case):
        u, d = case
        params = config.channel_params(wind_speed=u)
        return (u, d, _delay_to_fraction(params, height, d, fraction, rel_tol))

    cases = [(u, d) for u in exp["wind_speeds"] for d in exp["distances"]]
    rows = _ordered_map(one, cases, jobs)
    return ResultTable(
        columns=("wind_speed", "distance", "delay"),
        units=("cm/s", "cm", "s"),
        rows=rows,
        metadata=_metadata(config),
    )


_PMD_VARIANTS = (
    (0, 1.0, 1.0),  # base rate, base volume
    (1, 0.5, 1.0),  # half rate
    (2, 1.0, 0.5),  # half volume
)


def run_pmd_vs_distance(config: ScenarioConfig, jobs: int = 1) -> ResultTable:
    """Analytic missed-detection probability versus distance for the three
    variants (base, half emission rate, half receiver volume).

    The noise level is solved once from the calibration constant at the base
    rate, then shared by all variants.  Optional Monte Carlo columns validate
    the threshold-consistent probability at the largest distances (NaN
    elsewhere).
    """
    exp = config.experiment
    height = config.source_height
    params = config.channel_params()
    base_rate = _primary_rate(config)
    sigma = config.noise_sigma(base_rate)
    orders = tuple(exp["quadrature_orders"])
    trials = exp["empirical_trials"]
    recv0 = config.receiver_spec()
    gain_args = (recv0.sampler_efficiency, recv0.binding_fraction)

    distances = exp["distances"]
    sampled = set()
    if trials > 0:
        sampled = set(distances[-exp["empirical_count"]:])
        seed = _require_seed(config)

    def one(case):
        d, (variant, rate_factor, volume_factor) = case
        rate = base_rate * rate_factor
        recv = config.receiver_spec(distance=d, volume_factor=volume_factor)
        exposure = receiver_exposure(
            recv, steady_field(rate, params, height), orders=orders
        )
        row = [
            d,
            float(variant),
            pmd_conservative(exposure, *gain_args, sigma),
            pmd_exact(exposure, *gain_args, sigma),
        ]
        if trials > 0:
            if d in sampled:
                est = empirical_pmd(
                    exposure, *gain_args, sigma, trials,
                    np.random.SeedSequence(entropy=seed, spawn_key=(variant, distances.index(d))),
                )
                row += [est.estimate, est.lower, est.upper]
            else:
                row += [math.nan, math.nan, math.nan]
        return tuple(row)

    cases = [(d, variant) for d in distances for variant in _PMD_VARIANTS]
    rows = _ordered_map(one, cases, jobs)
    columns = ["distance", "variant", "pmd_conservative", "pmd_exact"]
    units = ["cm", "0=base;1=half-rate;2=half-volume", "1", "1"]
    if trials > 0:
        columns += ["pmd_empirical", "pmd_ci_lower", "pmd_ci_upper"]
        units += ["1", "1", "1"]
    return ResultTable(columns=tuple(columns), units=tuple(units), rows=rows,
                       metadata=_metadata(config))


def run_field_grid(config: ScenarioConfig, jobs: int = 1) -> ResultTable:
    """Steady plume samples (x, y, z, concentration) for contour plotting,
    superposing every user's breath plume."""
    exp = config.experiment
    params = config.channel_params()
    users = [u for u in config.users() if u.breath_rate > 0.0]
    if not users:
        raise ScenarioError("sources.users", "field experiment needs a breathing user")
    xs = _linspace(exp["x"])
    ys = _linspace(exp["y"])
    zs = _linspace(exp["z"])
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    total = np.zeros(X.shape)
    for user in users:
        total += np.asarray(
            steady_state_concentration(
                user.breath_rate, (X - user.x, Y - user.y, Z), params, user.height
            )
        )
    rows = list(zip(X.ravel(), Y.ravel(), Z.ravel(), total.ravel()))
    return ResultTable(
        columns=("x", "y", "z", "concentration"),
        units=("cm", "cm", "cm", "1/cm^3"),
        rows=rows,
        metadata=_metadata(config),
    )


def run_timeseries(config: ScenarioConfig, jobs: int = 1) -> ResultTable:
    """Concentration versus time at a fixed observation point (receiver
    center unless the experiment names one)."""
    exp = config.experiment
    scenario = config.multi_user_scenario()
    params = config.channel_params()
    point = exp["point"] if exp["point"] is not None else list(config.receiver_spec().center)
    times = _linspace(exp["times"])
    values = np.asarray(
        multi_user_response(scenario, (point[0], point[1], point[2], times), params)
    )
    rows = list(zip(times, values))
    return ResultTable(
        columns=("time", "concentration"),
        units=("s", "1/cm^3"),
        rows=rows,
        metadata=_metadata(config),
    )


def run_frequency_sweep(config: ScenarioConfig, jobs: int = 1) -> ResultTable:
    """Closed-form transfer function (magnitude, phase) between the first
    user's position and the receiver center."""
    exp = config.experiment
    params = config.channel_params()
    user = config.users()[0]
    center = config.receiver_spec().center
    point = (center[0] - user.x, center[1] - user.y, center[2])
    omegas = _linspace(exp["omega"])
    response = frequency_response(point, omegas, params, user.height,
                                  unwrap_phase=exp["unwrap"])
    rows = list(zip(omegas, np.asarray(response.magnitude), np.asarray(response.phase)))
    return ResultTable(
        columns=("omega", "magnitude", "phase"),
        units=("rad/s", "s/cm^3", "rad"),
        rows=rows,
        metadata=_metadata(config),
    )


def run_mc_pmd(config: ScenarioConfig, jobs: int = 1) -> ResultTable:
    """Monte Carlo missed-detection estimates against the analytic value at
    configured detection arguments gain*exposure/(2*sigma)."""
    exp = config.experiment
    seed = _require_seed(config)
    recv = config.receiver_spec()
    sigma = config.noise_sigma(_primary_rate(config))
    gain = recv.capture_gain
    trials = exp["trials"]

    def one(case):
        index, argument = case
        exposure = 2.0 * sigma * argument / gain
        est = empirical_pmd(
            exposure, recv.sampler_efficiency, recv.binding_fraction, sigma, trials,
            np.random.SeedSequence(entropy=seed, spawn_key=(index,)),
        )
        return (argument, q_function(argument), est.estimate, est.lower, est.upper,
                float(trials))

    rows = _ordered_map(one, list(enumerate(exp["snr_arguments"])), jobs)
    return ResultTable(
        columns=("argument", "pmd_analytic", "pmd_empirical", "ci_lower", "ci_upper",
                 "trials"),
        units=("1", "1", "1", "1", "1", "count"),
        rows=rows,
        metadata=_metadata(config),
    )


# ---------------------------------------------------------------------------
# oracle validation runner
# ---------------------------------------------------------------------------

_ORACLE_CHECKS = (
    "steady_l2",
    "steady_crosswind",
    "steady_refinement_factor",
    "transient_probe",
    "transient_mass",
    "convolution",
    "spectrum_magnitude",
    "spectrum_phase_slope",
    "spectrum_constant_variation",
    "pmd_within_ci",
    "mc_exposure_sigmas",
)


def run_validate_oracles(config: ScenarioConfig, jobs: int = 1) -> ResultTable:
    """Run the full oracle suite at desk scale and report value-vs-budget per
    check.  Rows: (check id, value, budget, passed); the id legend travels in
    the metadata.  A failed row means an oracle disagreed beyond budget."""
    params = config.channel_params()
    height = config.source_height
    exp = config.experiment
    seed = _require_seed(config)
    rows = []

    def add(check, value, budget, ok):
        rows.append((float(_ORACLE_CHECKS.index(check)), float(value), float(budget),
                     1.0 if ok else 0.0))

    # steady-plume march against the closed form, plus refinement gain
    scale_lo = diffusion_scale(50.0, params)
    scale_hi = diffusion_scale(250.0, params)
    grid = MarchGrid.for_plume(height, scale_lo, scale_hi, exp["steady_resolution"])
    coarse = steady_oracle_report(march_steady_plume(params, height, grid), params, height)
    fine = steady_oracle_report(
        march_steady_plume(params, height, grid.refined()), params, height
    )
    factor = (coarse.l2_rel_error / fine.l2_rel_error) if fine.l2_rel_error else math.inf
    add("steady_l2", fine.l2_rel_error, BUDGETS["steady_l2"], fine.passed)
    add("steady_crosswind", fine.extras["crosswind_max_rel_dev"],
        BUDGETS["steady_crosswind"],
        fine.extras["crosswind_max_rel_dev"] < BUDGETS["steady_crosswind"])
    add("steady_refinement_factor", factor, BUDGETS["steady_refinement_factor"],
        factor >= BUDGETS["steady_refinement_factor"])

    # transient jet march at a mid-field probe
    if exp["transient"]:
        tgrid = TransientGrid(
            x_span=(4.0, 60.0), y_half=2.4, z_span=(height - 2.4, height + 2.4),
            step_x=0.08, step_y=0.08, step_z=0.08, t_start=0.10, t_end=0.35,
        )
        tres = march_transient_jet(params, height, tgrid, probes=[(30.0, 0.0, height)])
        trep = transient_oracle_report(tres, params, height)
        add("transient_probe", trep.max_rel_error, BUDGETS["transient_probe"],
            trep.max_rel_error <= BUDGETS["transient_probe"])
        add("transient_mass", trep.extras["mass_max_rel_dev"], BUDGETS["transient_mass"],
            trep.extras["mass_max_rel_dev"] <= BUDGETS["transient_mass"])

    # breath response against the numeric step convolution
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        x = rng.uniform(20.0, 300.0)
        y = rng.uniform(-1.5, 1.5)
        z = height + rng.uniform(-1.5, 1.5)
        t = x / params.wind_speed * rng.uniform(0.9, 3.0) + rng.uniform(0.0, 5.0)
        reference = breath_response(1.0, 0.0, (x, y, z, t), params, height)
        if reference <= 0.0:
            continue
        worst = max(worst, abs(step_convolution((x, y, z, t), params, height) - reference)
                    / reference)
    add("convolution", worst, BUDGETS["convolution"], worst <= BUDGETS["convolution"])

    # frequency-domain shape against the DFT of the sampled pulse
    spectrum = sampled_transfer_function(
        (100.0, 0.0, height), params, height, sample_interval=5e-4, n_samples=4096
    )
    srep = spectrum_oracle_report(spectrum, params, height)
    add("spectrum_magnitude", srep.max_rel_error, BUDGETS["spectrum_magnitude"],
        srep.max_rel_error <= BUDGETS["spectrum_magnitude"])
    add("spectrum_phase_slope", srep.extras["phase_slope_rel_err"],
        BUDGETS["spectrum_phase_slope"],
        srep.extras["phase_slope_rel_err"] <= BUDGETS["spectrum_phase_slope"])
    add("spectrum_constant_variation", srep.extras["constant_ratio_variation"],
        BUDGETS["spectrum_constant_variation"],
        srep.extras["constant_ratio_variation"] <= BUDGETS["spectrum_constant_variation"])

    # detection statistics against the closed form
    recv = config.receiver_spec()
    sigma = config.noise_sigma(_primary_rate(config))
    hits = 0
    checks = 0
    for i, argument in enumerate((0.5, 1.0, 2.0)):
        exposure = 2.0 * sigma * argument / recv.capture_gain
        est = empirical_pmd(
            exposure, recv.sampler_efficiency, recv.binding_fraction, sigma,
            exp["trials"], np.random.SeedSequence(entropy=seed, spawn_key=(100 + i,)),
        )
        checks += 1
        hits += est.contains(q_function(argument))
    add("pmd_within_ci", hits, checks, hits == checks)

    # receiver integral: Monte Carlo against Gauss-Legendre
    fld = steady_field(_primary_rate(config), params, height)
    mc = mc_receiver_exposure(recv, fld, exp["mc_samples"], seed + 1)
    gl = receiver_exposure(recv, fld, orders=(32, 32, 32, 4))
    sigmas = abs(mc.value - gl) / mc.standard_error if mc.standard_error else 0.0
    add("mc_exposure_sigmas", sigmas, BUDGETS["mc_exposure_sigmas"],
        sigmas <= BUDGETS["mc_exposure_sigmas"])

    metadata = _metadata(config)
    metadata["checks"] = ";".join(
        f"{i}={name}" for i, name in enumerate(_ORACLE_CHECKS)
    )
    return ResultTable(
        columns=("check", "value", "budget", "passed"),
        units=("id", "1", "1", "bool"),
        rows=rows,
        metadata=metadata,
    )


RUNNERS = {
    "field": run_field_grid,
    "timeseries": run_timeseries,
    "freq": run_frequency_sweep,
    "delay": run_delay_to_fraction,
    "conc_vs_distance": run_concentration_vs_distance,
    "pmd": run_pmd_vs_distance,
    "mc_pmd": run_mc_pmd,
    "validate_oracles": run_validate_oracles,
}
