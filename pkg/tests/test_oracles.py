"""Numerical oracles: grid validation, closed-form agreement within budgets,
determinism, and cross-oracle consistency."""

import numpy as np
import pytest

from plumesense.channel import (
    breath_response,
    diffusion_scale,
    jet_concentration,
    steady_field,
)
from plumesense.errors import DomainError, GridError
from plumesense.oracles import (
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
from plumesense.receiver import ReceiverSpec, q_function, receiver_exposure

from conftest import HEIGHT, RADIUS, WIND


@pytest.fixture(scope="module")
def coarse_steady(params):
    # 50..250 cm mapped into the transformed coordinate
    grid = MarchGrid.for_plume(
        HEIGHT, diffusion_scale(50.0, params), diffusion_scale(250.0, params),
        resolution=0.15,
    )
    return march_steady_plume(params, HEIGHT, grid)


class TestMarchGrid:
    def test_invalid_ranges_rejected(self):
        with pytest.raises(GridError):
            MarchGrid(0.0, 1.0, 5.0, 100.0, 0.1, 0.1, 0.001)
        with pytest.raises(GridError):
            MarchGrid(1.0, 0.5, 5.0, 100.0, 0.1, 0.1, 0.001)
        with pytest.raises(GridError):
            MarchGrid(0.1, 1.0, -5.0, 100.0, 0.1, 0.1, 0.001)

    def test_explicit_stability_enforced(self, params):
        grid = MarchGrid(
            scale_start=0.05, scale_end=0.4, y_half=4.0, z_max=HEIGHT + 4.0,
            step_y=0.1, step_z=0.1, step_scale=0.01,  # > 0.25 * 0.01
        )
        with pytest.raises(GridError):
            march_steady_plume(params, HEIGHT, grid)
        # the implicit scheme has no such bound
        march_steady_plume(params, HEIGHT, grid, scheme="implicit")

    def test_containment_enforced(self, params):
        grid = MarchGrid(
            scale_start=0.05, scale_end=0.4, y_half=1.0, z_max=HEIGHT + 4.0,
            step_y=0.1, step_z=0.1, step_scale=0.002,
        )
        with pytest.raises(GridError):
            march_steady_plume(params, HEIGHT, grid)
        tall = MarchGrid.for_plume(HEIGHT, 0.05, 0.4, resolution=0.1)
        with pytest.raises(GridError):
            march_steady_plume(params, 2.0 * HEIGHT + 10.0, tall)

    def test_refined_preserves_stability_rule(self):
        grid = MarchGrid.for_plume(HEIGHT, 0.05, 0.4, resolution=0.2)
        fine = grid.refined()
        assert fine.step_y == grid.step_y / 2
        assert fine.step_scale == grid.step_scale / 4
        assert fine.step_scale <= 0.25 * fine.step_y**2 * (1 + 1e-12)


class TestSteadyMarch:
    def test_matches_closed_form_within_budget(self, params, coarse_steady):
        report = steady_oracle_report(coarse_steady, params, HEIGHT)
        assert report.passed
        assert report.l2_rel_error < BUDGETS["steady_l2"]

    def test_crosswind_integrals_conserved(self, params, coarse_steady):
        flux = coarse_steady.rate / WIND
        dev = np.abs(coarse_steady.crosswind_integrals - flux) / flux
        assert dev.max() < BUDGETS["steady_crosswind"]

    def test_field_even_in_y(self, coarse_steady):
        field = coarse_steady.field
        assert np.allclose(field, field[:, ::-1], rtol=1e-12, atol=1e-300)

    def test_implicit_scheme_agrees(self, params):
        grid = MarchGrid.for_plume(
            HEIGHT, diffusion_scale(50.0, params), diffusion_scale(150.0, params),
            resolution=0.1,
        )
        explicit = march_steady_plume(params, HEIGHT, grid)
        implicit = march_steady_plume(params, HEIGHT, grid, scheme="implicit")
        # each scheme must satisfy the closed-form budget on its own; their
        # mutual gap is bounded by the sum of the two truncation errors
        assert steady_oracle_report(implicit, params, HEIGHT).passed
        assert steady_oracle_report(explicit, params, HEIGHT).passed
        peak = explicit.field.max()
        assert np.max(np.abs(explicit.field - implicit.field)) < 1e-2 * peak

    def test_under_resolved_start_warns(self, params):
        grid = MarchGrid.for_plume(HEIGHT, 0.005, 0.4, resolution=0.2)
        result = march_steady_plume(params, HEIGHT, grid)
        assert any("under 3 grid steps" in w for w in result.warnings)

    def test_refinement_reduces_error(self, params, coarse_steady):
        fine = march_steady_plume(params, HEIGHT, coarse_steady.grid.refined())
        coarse_report = steady_oracle_report(coarse_steady, params, HEIGHT)
        fine_report = steady_oracle_report(fine, params, HEIGHT)
        factor = coarse_report.l2_rel_error / fine_report.l2_rel_error
        assert factor >= BUDGETS["steady_refinement_factor"]

    def test_receiver_point_value_against_march(self, params):
        # the closed-form value at the standard receiver point, pinned by
        # marching the plume to exactly that downwind distance
        from plumesense.channel import steady_state_concentration

        grid = MarchGrid.for_plume(
            HEIGHT, diffusion_scale(50.0, params), diffusion_scale(100.0, params),
            resolution=0.1,
        )
        result = march_steady_plume(params, HEIGHT, grid)
        iy = int(np.argmin(np.abs(result.y)))
        iz = int(np.argmin(np.abs(result.z - HEIGHT)))
        marched = result.field[iz, iy]
        closed = steady_state_concentration(1.0, (100.0, 0.0, HEIGHT), params, HEIGHT)
        assert closed == pytest.approx(0.0032883252704937055, rel=1e-12)
        assert marched == pytest.approx(closed, rel=BUDGETS["steady_l2"])


@pytest.fixture(scope="module")
def transient_result(params):
    grid = TransientGrid(
        x_span=(4.0, 60.0), y_half=2.4, z_span=(HEIGHT - 2.4, HEIGHT + 2.4),
        step_x=0.08, step_y=0.08, step_z=0.08, t_start=0.10, t_end=0.35,
    )
    return march_transient_jet(params, HEIGHT, grid, jet_mass=2.0,
                               probes=[(30.0, 0.0, HEIGHT)])


class TestTransientMarch:
    def test_probes_match_closed_form_within_budget(self, params, transient_result):
        report = transient_oracle_report(transient_result, params, HEIGHT)
        assert report.passed
        assert report.max_rel_error <= BUDGETS["transient_probe"]

    def test_mass_conserved(self, transient_result):
        dev = np.abs(transient_result.mass - transient_result.jet_mass) / transient_result.jet_mass
        assert dev.max() <= BUDGETS["transient_mass"]

    def test_peak_arrives_at_advection_time(self, transient_result):
        series = transient_result.probe_values[0]
        t_peak = transient_result.times[int(np.argmax(series))]
        assert abs(t_peak - 30.0 / WIND) <= transient_result.dt

    def test_refinement_improves_probe_error(self, params, transient_result):
        coarse_grid = TransientGrid(
            x_span=(4.0, 60.0), y_half=2.4, z_span=(HEIGHT - 2.4, HEIGHT + 2.4),
            step_x=0.16, step_y=0.16, step_z=0.16, t_start=0.10, t_end=0.35,
        )
        coarse = march_transient_jet(params, HEIGHT, coarse_grid, jet_mass=2.0,
                                     probes=[(30.0, 0.0, HEIGHT)])
        coarse_report = transient_oracle_report(coarse, params, HEIGHT)
        fine_report = transient_oracle_report(transient_result, params, HEIGHT)
        assert fine_report.max_rel_error < coarse_report.max_rel_error

    def test_configuration_errors(self, params):
        grid = TransientGrid(
            x_span=(4.0, 30.0), y_half=2.0, z_span=(HEIGHT - 2.0, HEIGHT + 2.0),
            step_x=0.1, step_y=0.1, step_z=0.1, t_start=0.05, t_end=0.2,
            advection_cells=10**6,  # violates the diffusion stability bound
        )
        with pytest.raises(GridError):
            march_transient_jet(params, HEIGHT, grid)
        from plumesense.channel import ChannelParams, DiffusivityProfile

        varying = ChannelParams(WIND, DiffusivityProfile.from_function(lambda x: 0.2))
        ok = TransientGrid(
            x_span=(4.0, 30.0), y_half=2.0, z_span=(HEIGHT - 2.0, HEIGHT + 2.0),
            step_x=0.1, step_y=0.1, step_z=0.1, t_start=0.05, t_end=0.2,
        )
        with pytest.raises(DomainError):
            march_transient_jet(varying, HEIGHT, ok)
        with pytest.raises(GridError):
            march_transient_jet(params, HEIGHT, ok, probes=[(100.0, 0.0, HEIGHT)])


class TestStepConvolution:
    def test_matches_breath_response(self, params, rng):
        worst = 0.0
        for _ in range(20):
            x = rng.uniform(20.0, 300.0)
            y = rng.uniform(-1.5, 1.5)
            z = HEIGHT + rng.uniform(-1.5, 1.5)
            t = x / WIND * rng.uniform(0.9, 3.0) + rng.uniform(0.0, 5.0)
            reference = breath_response(1.0, 0.0, (x, y, z, t), params, HEIGHT)
            if reference == 0.0:
                continue
            numeric = step_convolution((x, y, z, t), params, HEIGHT)
            worst = max(worst, abs(numeric - reference) / reference)
        assert worst <= BUDGETS["convolution"]

    def test_zero_before_entry(self, params):
        assert step_convolution((100.0, 0.0, HEIGHT, 4.0), params, HEIGHT,
                                entry_time=5.0) == 0.0

    def test_linear_in_rate(self, params):
        point = (100.0, 0.0, HEIGHT, 2.0)
        single = step_convolution(point, params, HEIGHT, rate=1.0)
        double = step_convolution(point, params, HEIGHT, rate=2.0)
        assert double == pytest.approx(2.0 * single, rel=1e-12)


@pytest.fixture(scope="module")
def spectrum(params):
    return sampled_transfer_function((100.0, 0.0, HEIGHT), params, HEIGHT,
                                     sample_interval=5e-4, n_samples=4096)


class TestSampledSpectrum:
    def test_matches_closed_form_shape(self, params, spectrum):
        report = spectrum_oracle_report(spectrum, params, HEIGHT)
        assert report.passed
        assert report.max_rel_error <= BUDGETS["spectrum_magnitude"]
        assert report.extras["phase_slope_rel_err"] <= BUDGETS["spectrum_phase_slope"]
        assert (
            report.extras["constant_ratio_variation"]
            <= BUDGETS["spectrum_constant_variation"]
        )

    def test_shift_theorem(self, params, spectrum):
        # a later release multiplies the spectrum by a pure linear phase
        lag_samples = 200
        lag = lag_samples * spectrum.sample_interval
        times = spectrum.sample_interval * np.arange(spectrum.n_samples)
        shifted = np.asarray(
            jet_concentration(1.0, lag, (100.0, 0.0, HEIGHT, times), params, HEIGHT)
        )
        shifted_fft = np.fft.rfft(shifted) * spectrum.sample_interval
        keep = spectrum.magnitude > 1e-6 * spectrum.magnitude.max()
        ratio = shifted_fft[keep] / spectrum.values[keep]
        assert np.allclose(np.abs(ratio), 1.0, atol=1e-9)
        # ratio must equal exp(-i * omega * lag): dividing it out leaves phase 0
        assert np.allclose(
            np.angle(ratio * np.exp(1j * spectrum.omega[keep] * lag)), 0.0, atol=1e-9
        )

    def test_aliasing_guards(self, params):
        with pytest.raises(GridError):
            sampled_transfer_function((100.0, 0.0, HEIGHT), params, HEIGHT,
                                      sample_interval=5e-2, n_samples=4096)
        with pytest.raises(GridError):
            sampled_transfer_function((100.0, 0.0, HEIGHT), params, HEIGHT,
                                      sample_interval=5e-4, n_samples=64)


class TestEmpiricalPmd:
    def test_matches_closed_form_at_unit_argument(self):
        est = empirical_pmd(2.0, 1.0, 1.0, 1.0, trials=10**6, seed=42)
        assert est.contains(q_function(1.0))

    def test_noiseless_never_misses(self):
        est = empirical_pmd(2.0, 1.0, 1.0, 1e-150, trials=10**4, seed=0)
        assert est.estimate == 0.0

    def test_seed_determinism(self):
        a = empirical_pmd(2.0, 0.85, 0.5, 0.4, trials=10**5, seed=9)
        b = empirical_pmd(2.0, 0.85, 0.5, 0.4, trials=10**5, seed=9)
        assert a == b

    def test_seed_robustness(self):
        analytic = q_function(1.0)
        hits = sum(
            empirical_pmd(2.0, 1.0, 1.0, 1.0, trials=10**5, seed=s).contains(analytic)
            for s in range(10)
        )
        assert hits == 10

    def test_minimum_trials_enforced(self):
        with pytest.raises(DomainError):
            empirical_pmd(1.0, 0.85, 0.5, 1.0, trials=100, seed=0)


@pytest.fixture(scope="module")
def recv():
    return ReceiverSpec((100.0, 0.0, HEIGHT), RADIUS, 3.0, 0.85, 0.5)


class TestMcReceiverExposure:
    def test_uniform_field_is_exact(self, recv):
        c0 = 2.5
        uniform = lambda x, y, z, t: np.full(np.shape(x), c0)
        est = mc_receiver_exposure(recv, uniform, samples=10**5, seed=1)
        assert est.value == pytest.approx(c0 * recv.volume * recv.sampling_window,
                                          rel=1e-12)
        assert est.standard_error == 0.0

    def test_zero_field_is_exactly_zero(self, recv):
        zero = lambda x, y, z, t: np.zeros(np.shape(x))
        est = mc_receiver_exposure(recv, zero, samples=10**5, seed=1)
        assert est.value == 0.0

    def test_cross_oracle_agreement_on_steady_plume(self, params, recv):
        # 1e7-sample Monte Carlo against the tensor quadrature route
        field = steady_field(1.0, params, HEIGHT)
        est = mc_receiver_exposure(recv, field, samples=10**7, seed=123)
        quadrature = receiver_exposure(recv, field, orders=(48, 48, 48, 4))
        assert est.agrees_with(quadrature, sigmas=BUDGETS["mc_exposure_sigmas"])

    def test_seed_determinism(self, params, recv):
        field = steady_field(1.0, params, HEIGHT)
        a = mc_receiver_exposure(recv, field, samples=10**5, seed=7)
        b = mc_receiver_exposure(recv, field, samples=10**5, seed=7)
        assert a == b

    def test_minimum_samples_enforced(self, recv):
        uniform = lambda x, y, z, t: np.full(np.shape(x), 1.0)
        with pytest.raises(DomainError):
            mc_receiver_exposure(recv, uniform, samples=10**4, seed=0)
