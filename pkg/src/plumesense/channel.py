"""Closed-form responses of a wind-aligned aerosol dispersion channel.

Units are CGS throughout: lengths in cm, times in s, wind speed in cm/s,
diffusivity in cm^2/s.  Emission rates are abstract units/s and jet masses
abstract units, so concentrations come out in 1/cm^3 scaled by the emission
unit.

The mean wind carries particles downwind (+x) while turbulent eddies spread
them in the crosswind (y, z) plane; the ground z = 0 reflects particles via
an image source.  All closed forms share one transformed coordinate,

    diffusion_scale(x) = (1/u) * integral_0^x K(s) ds          [cm^2]

which plays the role of elapsed diffusion "time": every crosswind section is
Gaussian with variance ``2 * diffusion_scale(x)``.  The closed forms are
singular as x -> 0, so evaluation is only permitted at x >= x_min; points at
or upwind of the source (x <= 0) contribute zero concentration because
advection dominates diffusion along the wind axis.

All operations are pure functions of their arguments and safe to call
concurrently; the parameter and source objects are immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import erfc

from .errors import DomainError, EvaluationDomainError, ScenarioError

__all__ = [
    "DiffusivityProfile",
    "ChannelParams",
    "SpaceTimePoint",
    "JetRelease",
    "SourceSpec",
    "StochasticGrid",
    "MultiUserScenario",
    "ComplexResponse",
    "diffusion_scale",
    "distance_for_scale",
    "impulse_response",
    "jet_concentration",
    "breath_response",
    "person_response",
    "multi_user_response",
    "stochastic_expected_response",
    "steady_state_concentration",
    "frequency_response",
    "steady_field",
    "person_field",
    "multi_user_field",
]

ArrayLike = Union[float, Sequence[float], np.ndarray]


# ---------------------------------------------------------------------------
# parameter and source types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiffusivityProfile:
    """Eddy diffusivity K(x) in cm^2/s, constant or a function of downwind x.

    Must evaluate to a strictly positive finite value for every x > 0.
    """

    kind: str
    k0: Optional[float] = None
    func: Optional[Callable[[float], float]] = None

    @staticmethod
    def constant(value: float) -> "DiffusivityProfile":
        value = float(value)
        if not math.isfinite(value) or value <= 0.0:
            raise DomainError("diffusivity must be a positive finite value")
        return DiffusivityProfile(kind="constant", k0=value)

    @staticmethod
    def from_function(func: Callable[[float], float]) -> "DiffusivityProfile":
        return DiffusivityProfile(kind="function", func=func)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, x: ArrayLike):
        arr = np.asarray(x, dtype=float)
        if self.is_constant:
            out = np.full(arr.shape, self.k0)
        else:
            try:
                out = np.asarray(self.func(arr), dtype=float)
                if out.shape != arr.shape:
                    out = np.broadcast_to(out, arr.shape).copy()
            except (TypeError, ValueError):
                out = np.asarray(
                    [self.func(float(v)) for v in np.atleast_1d(arr)], dtype=float
                ).reshape(arr.shape)
        if not np.all(np.isfinite(out) & (out > 0.0)):
            raise DomainError("diffusivity must evaluate positive and finite")
        return float(out) if arr.ndim == 0 else out


@dataclass(frozen=True)
class ChannelParams:
    """Advection-dominated channel parameters.

    ``x_min`` is the smallest downwind distance (cm) at which the closed
    forms may be evaluated; they are singular as x -> 0.
    """

    wind_speed: float
    diffusivity: DiffusivityProfile
    x_min: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.wind_speed) and self.wind_speed > 0.0):
            raise DomainError("wind_speed must be positive (advection-dominated model)")
        if not (math.isfinite(self.x_min) and self.x_min > 0.0):
            raise DomainError("x_min must be positive; closed forms are singular at x = 0")

    @staticmethod
    def with_constant(wind_speed: float, diffusivity: float, x_min: float = 1.0) -> "ChannelParams":
        return ChannelParams(float(wind_speed), DiffusivityProfile.constant(diffusivity), float(x_min))


@dataclass(frozen=True)
class SpaceTimePoint:
    """Observation coordinates in cm and s; the ground is at z = 0."""

    x: float
    y: float
    z: float
    t: float

    def __post_init__(self):
        if self.z < 0.0:
            raise DomainError("z must be >= 0 (particles do not penetrate the ground)")


@dataclass(frozen=True)
class JetRelease:
    """One impulsive release (cough/sneeze): release time in s, mass in units."""

    time: float
    mass: float

    def __post_init__(self):
        if not (self.mass > 0.0):
            raise DomainError("jet mass must be positive")


@dataclass(frozen=True)
class SourceSpec:
    """A single emitting person: continuous breath plus optional jet releases.

    ``location`` is (x0, y0, height); the mouth sits at z = height above the
    ground shared by all sources.
    """

    location: Tuple[float, float, float]
    breath_rate: float = 0.0
    jets: Tuple[JetRelease, ...] = ()
    entry_time: float = 0.0

    def __post_init__(self):
        loc = tuple(float(c) for c in self.location)
        if len(loc) != 3:
            raise DomainError("location must be (x0, y0, height)")
        if not (loc[2] > 0.0):
            raise DomainError("source height must be positive")
        object.__setattr__(self, "location", loc)
        if self.breath_rate < 0.0:
            raise DomainError("breath_rate must be nonnegative")
        jets = tuple(
            j if isinstance(j, JetRelease) else JetRelease(float(j[0]), float(j[1]))
            for j in self.jets
        )
        for j in jets:
            if j.time < self.entry_time:
                raise DomainError("jet release times must not precede entry_time")
        object.__setattr__(self, "jets", jets)

    @property
    def x(self) -> float:
        return self.location[0]

    @property
    def y(self) -> float:
        return self.location[1]

    @property
    def height(self) -> float:
        return self.location[2]


@dataclass(frozen=True)
class StochasticGrid:
    """Discretized release schedule: probabilities p[i][j] that user j emits a
    jet in interval i, with the release pinned to the interval start i*interval."""

    interval: float
    horizon: float
    probabilities: Tuple[Tuple[float, ...], ...]
    jet_masses: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if not (self.interval > 0.0):
            raise DomainError("stochastic interval must be positive")
        if not (self.horizon > 0.0):
            raise DomainError("stochastic horizon must be positive")
        rows = tuple(tuple(float(p) for p in row) for row in self.probabilities)
        if len(rows) != self.num_intervals:
            raise DomainError(
                f"expected ceil(horizon/interval) = {self.num_intervals} probability rows, "
                f"got {len(rows)}"
            )
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise DomainError("probability rows must all have the same length")
        for row in rows:
            for p in row:
                if not (0.0 <= p <= 1.0):
                    raise DomainError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "probabilities", rows)
        if self.jet_masses is not None:
            masses = tuple(float(m) for m in self.jet_masses)
            if any(m <= 0.0 for m in masses):
                raise DomainError("jet masses must be positive")
            object.__setattr__(self, "jet_masses", masses)

    @property
    def num_intervals(self) -> int:
        return int(math.ceil(self.horizon / self.interval))

    @property
    def num_users(self) -> int:
        return len(self.probabilities[0]) if self.probabilities else 0

    def release_times(self):
        return tuple(i * self.interval for i in range(self.num_intervals))


@dataclass(frozen=True)
class MultiUserScenario:
    """Several emitting people, optionally with a stochastic release grid."""

    users: Tuple[SourceSpec, ...]
    stochastic: Optional[StochasticGrid] = None

    def __post_init__(self):
        users = tuple(self.users)
        if not users:
            raise DomainError("scenario needs at least one user")
        object.__setattr__(self, "users", users)
        grid = self.stochastic
        if grid is not None:
            if grid.num_users != len(users):
                raise DomainError(
                    f"probability rows have {grid.num_users} entries for {len(users)} users"
                )
            if grid.jet_masses is not None and len(grid.jet_masses) != len(users):
                raise DomainError("jet_masses must list one mass per user")
            if grid.jet_masses is None:
                for i, u in enumerate(users):
                    if not u.jets:
                        raise DomainError(
                            f"user {i} has no jets; supply stochastic jet_masses instead"
                        )

    def stochastic_jet_mass(self, user_index: int) -> float:
        grid = self.stochastic
        if grid is not None and grid.jet_masses is not None:
            return grid.jet_masses[user_index]
        return self.users[user_index].jets[0].mass


@dataclass(frozen=True)
class ComplexResponse:
    """Polar form of the channel transfer function: magnitude in
    concentration*s, phase in radians.

    The phase convention is the principal value in (-pi, pi]; construct with
    ``frequency_response(..., unwrap_phase=True)`` for the raw linear phase.
    """

    magnitude: ArrayLike
    phase: ArrayLike

    def __post_init__(self):
        if np.any(np.asarray(self.magnitude) < 0.0):
            raise DomainError("magnitude must be nonnegative")

    @property
    def value(self):
        return self.magnitude * np.exp(1j * np.asarray(self.phase))


# ---------------------------------------------------------------------------
# coordinate helpers
# ---------------------------------------------------------------------------


def _point4(point):
    if isinstance(point, SpaceTimePoint):
        coords = (point.x, point.y, point.z, point.t)
    else:
        coords = tuple(point)
        if len(coords) != 4:
            raise DomainError("expected a SpaceTimePoint or an (x, y, z, t) quadruple")
    return tuple(np.asarray(c, dtype=float) for c in coords)


def _point3(point):
    if isinstance(point, SpaceTimePoint):
        coords = (point.x, point.y, point.z)
    else:
        coords = tuple(point)
        if len(coords) == 4:
            coords = coords[:3]
        if len(coords) != 3:
            raise DomainError("expected an (x, y, z) triple")
    return tuple(np.asarray(c, dtype=float) for c in coords)


def _broadcast(*arrays):
    shape = np.broadcast(*arrays).shape
    flat = [np.broadcast_to(a, shape).reshape(-1) for a in arrays]
    return shape, flat


def _as_output(values, shape):
    out = np.asarray(values).reshape(shape)
    return float(out) if shape == () else out


def _check_vertical(z):
    if np.any(z < 0.0):
        raise DomainError("z must be >= 0 (particles do not penetrate the ground)")


def _check_height(source_height):
    if not (source_height > 0.0):
        raise DomainError("source height must be positive")


def _check_downwind_band(x_pos, params):
    if np.any(x_pos < params.x_min):
        raise EvaluationDomainError(
            f"downwind distance below x_min = {params.x_min} cm; the closed form "
            "is singular near the source"
        )


def _crosswind_factor(y, z, scale, source_height):
    return np.exp(-(y * y) / (4.0 * scale)) * (
        np.exp(-((z - source_height) ** 2) / (4.0 * scale))
        + np.exp(-((z + source_height) ** 2) / (4.0 * scale))
    )


# ---------------------------------------------------------------------------
# transformed coordinate
# ---------------------------------------------------------------------------


def diffusion_scale(x: ArrayLike, params: ChannelParams):
    """Transformed downwind coordinate (1/u) * integral_0^x K(s) ds, in cm^2.

    Exact for a constant profile; adaptive quadrature with relative tolerance
    1e-10 otherwise.  Monotone nondecreasing in x.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0):
        raise DomainError("downwind distance must be nonnegative")
    if params.diffusivity.is_constant:
        out = params.diffusivity.k0 * arr / params.wind_speed
        return float(out) if arr.ndim == 0 else out
    flat = arr.reshape(-1)
    vals = np.empty(flat.shape)
    for i, xi in enumerate(flat):
        if xi == 0.0:
            vals[i] = 0.0
        else:
            integral, _ = quad(
                lambda s: params.diffusivity(s), 0.0, xi, epsabs=0.0, epsrel=1e-10, limit=200
            )
            vals[i] = integral / params.wind_speed
    return _as_output(vals, arr.shape)


def distance_for_scale(scale: float, params: ChannelParams) -> float:
    """Inverse of :func:`diffusion_scale`: downwind distance reaching ``scale``."""
    if scale < 0.0:
        raise DomainError("scale must be nonnegative")
    if scale == 0.0:
        return 0.0
    if params.diffusivity.is_constant:
        return params.wind_speed * scale / params.diffusivity.k0
    hi = 1.0
    while diffusion_scale(hi, params) < scale:
        hi *= 2.0
        if hi > 1e12:
            raise DomainError("scale not reachable within 1e12 cm")
    return brentq(lambda x: diffusion_scale(x, params) - scale, 0.0, hi, rtol=1e-13)


# ---------------------------------------------------------------------------
# transient responses
# ---------------------------------------------------------------------------


def impulse_response(point, params: ChannelParams, source_height: float):
    """Concentration at ``point`` per unit jet mass released at the origin at t = 0.

    Points at or upwind of the source (x <= 0) return 0 (no upwind transport);
    0 < x < x_min raises :class:`EvaluationDomainError`.
    """
    x, y, z, t = _point4(point)
    _check_height(source_height)
    _check_vertical(z)
    if not np.all(np.isfinite(t)):
        raise DomainError("time must be finite")
    shape, (X, Y, Z, T) = _broadcast(x, y, z, t)
    out = np.zeros(X.shape)
    pos = X > 0.0
    if pos.any():
        _check_downwind_band(X[pos], params)
        s = np.asarray(diffusion_scale(X[pos], params))
        u = params.wind_speed
        out[pos] = (
            np.exp(-((X[pos] - u * T[pos]) ** 2) / (4.0 * s))
            / (8.0 * (np.pi * s) ** 1.5)
            * _crosswind_factor(Y[pos], Z[pos], s, source_height)
        )
    return _as_output(out, shape)


def jet_concentration(jet_mass: float, release_time: float, point, params: ChannelParams,
                      source_height: float):
    """Concentration from one jet of ``jet_mass`` units released at ``release_time``.

    Exactly zero before the release (causality), then the shifted impulse
    response scaled by the mass.
    """
    if jet_mass < 0.0:
        raise DomainError("jet mass must be nonnegative")
    x, y, z, t = _point4(point)
    h = np.asarray(impulse_response((x, y, z, t - release_time), params, source_height))
    gated = np.where(t >= release_time, jet_mass * h, 0.0)
    return _as_output(gated, np.broadcast(t, h).shape)


def breath_response(breath_rate: float, entry_time: float, point, params: ChannelParams,
                    source_height: float):
    """Concentration from continuous breathing started at ``entry_time``.

    The step response rises monotonically and converges to the steady plume;
    it is exactly zero until the person enters.
    """
    if breath_rate < 0.0:
        raise DomainError("breath rate must be nonnegative")
    x, y, z, t = _point4(point)
    _check_height(source_height)
    _check_vertical(z)
    if not np.all(np.isfinite(t)):
        raise DomainError("time must be finite")
    shape, (X, Y, Z, T) = _broadcast(x, y, z, t)
    out = np.zeros(X.shape)
    elapsed = T - entry_time
    pos = X > 0.0
    if pos.any():
        _check_downwind_band(X[pos], params)
    live = pos & (elapsed > 0.0)
    if live.any():
        s = np.asarray(diffusion_scale(X[live], params))
        u = params.wind_speed
        root = 2.0 * np.sqrt(s)
        # erfc is monotone, but the rounded difference can dip below zero
        step = np.maximum(erfc((X[live] - u * elapsed[live]) / root) - erfc(X[live] / root), 0.0)
        out[live] = (
            breath_rate
            / (8.0 * np.pi * s * u)
            * step
            * _crosswind_factor(Y[live], Z[live], s, source_height)
        )
    return _as_output(out, shape)


def person_response(source: SourceSpec, point, params: ChannelParams):
    """Total concentration from one person: breath plus all jet releases.

    Evaluated in source-centered horizontal coordinates; z stays absolute so
    the shared ground keeps reflecting.
    """
    x, y, z, t = _point4(point)
    local = (x - source.x, y - source.y, z, t)
    out = breath_response(source.breath_rate, source.entry_time, local, params, source.height)
    for jet in source.jets:
        out = out + jet_concentration(jet.mass, jet.time, local, params, source.height)
    return out


def multi_user_response(scenario: MultiUserScenario, point, params: ChannelParams):
    """Superposed responses of all users, gated downwind and by entry time."""
    x, y, z, t = _point4(point)
    shape, (X, Y, Z, T) = _broadcast(x, y, z, t)
    total = np.zeros(X.shape)
    for user in scenario.users:
        gate = (X >= user.x) & (T >= user.entry_time)
        if gate.any():
            contrib = np.broadcast_to(
                np.asarray(person_response(user, (X, Y, Z, T), params)), X.shape
            )
            total += np.where(gate, contrib, 0.0)
    return _as_output(total, shape)


def stochastic_expected_response(scenario: MultiUserScenario, point, params: ChannelParams):
    """Expected concentration under the probabilistic release grid.

    Sums p[i][j] times user j's jet response released at the start of
    interval i, with the same gating as the deterministic multi-user case.
    """
    grid = scenario.stochastic
    if grid is None:
        raise ScenarioError("sources.stochastic", "scenario has no stochastic grid")
    x, y, z, t = _point4(point)
    shape, (X, Y, Z, T) = _broadcast(x, y, z, t)
    total = np.zeros(X.shape)
    for i, t_release in enumerate(grid.release_times()):
        for j, user in enumerate(scenario.users):
            p = grid.probabilities[i][j]
            if p == 0.0:
                continue
            gate = X >= user.x
            if not gate.any():
                continue
            local = (X - user.x, Y - user.y, Z, T)
            contrib = jet_concentration(
                scenario.stochastic_jet_mass(j), t_release, local, params, user.height
            )
            total += np.where(gate, p * np.asarray(contrib), 0.0)
    return _as_output(total, shape)


# ---------------------------------------------------------------------------
# steady state and frequency domain
# ---------------------------------------------------------------------------


def steady_state_concentration(rate: float, point, params: ChannelParams,
                               source_height: float):
    """Steady plume of a continuous source emitting ``rate`` units/s at the origin.

    Crosswind sections are Gaussian with variance 2*diffusion_scale(x); the
    crosswind-plane integral equals rate/u at every downwind distance.
    """
    if rate < 0.0:
        raise DomainError("emission rate must be nonnegative")
    x, y, z = _point3(point)
    _check_height(source_height)
    _check_vertical(z)
    shape, (X, Y, Z) = _broadcast(x, y, z)
    out = np.zeros(X.shape)
    pos = X > 0.0
    if pos.any():
        _check_downwind_band(X[pos], params)
        s = np.asarray(diffusion_scale(X[pos], params))
        out[pos] = (
            rate
            / (4.0 * params.wind_speed * np.pi * s)
            * _crosswind_factor(Y[pos], Z[pos], s, source_height)
        )
    return _as_output(out, shape)


def _principal_phase(raw):
    wrapped = np.mod(np.asarray(raw) + np.pi, 2.0 * np.pi) - np.pi
    # land exact half-turns on +pi, keeping the (-pi, pi] convention
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def frequency_response(point, omega: ArrayLike, params: ChannelParams, source_height: float,
                       unwrap_phase: bool = False) -> ComplexResponse:
    """Channel transfer function at a fixed observation point.

    Magnitude decays as a Gaussian in omega and the phase is the pure
    transport delay -omega*x/u, wrapped to (-pi, pi] unless ``unwrap_phase``.
    """
    x, y, z = _point3(point)
    _check_height(source_height)
    _check_vertical(z)
    w = np.asarray(omega, dtype=float)
    shape, (X, Y, Z, W) = _broadcast(x, y, z, w)
    if np.any(X <= 0.0):
        raise EvaluationDomainError("frequency response requires x >= x_min downwind")
    _check_downwind_band(X, params)
    s = np.asarray(diffusion_scale(X, params))
    u = params.wind_speed
    magnitude = (
        _crosswind_factor(Y, Z, s, source_height)
        / (8.0 * u * s * np.sqrt(np.pi))
        * np.exp(-(W * W) * s / (u * u))
    )
    raw_phase = -W * X / u
    phase = raw_phase if unwrap_phase else _principal_phase(raw_phase)
    return ComplexResponse(
        magnitude=_as_output(magnitude, shape), phase=_as_output(phase, shape)
    )


# ---------------------------------------------------------------------------
# field factories (space-time callables consumed by the receiver integrals)
# ---------------------------------------------------------------------------


def steady_field(rate: float, params: ChannelParams, source_height: float):
    """Time-independent field f(x, y, z, t) for the steady plume."""

    def field(x, y, z, t):
        value = steady_state_concentration(rate, (x, y, z), params, source_height)
        return np.broadcast_to(value, np.broadcast(x, y, z, t).shape) if np.ndim(t) else value

    return field


def person_field(source: SourceSpec, params: ChannelParams):
    """Space-time field of a single person's breath-plus-jets response."""

    def field(x, y, z, t):
        return person_response(source, (x, y, z, t), params)

    return field


def multi_user_field(scenario: MultiUserScenario, params: ChannelParams):
    """Space-time field of the gated multi-user superposition."""

    def field(x, y, z, t):
        return multi_user_response(scenario, (x, y, z, t), params)

    return field
