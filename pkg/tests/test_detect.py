"""Detector objective/gradient oracles, the FBS iteration, baselines, counters."""

import math

import numpy as np
import pytest

from onebitmimo import airlink as al
from onebitmimo import detect as dt
from onebitmimo.airlink import SystemConfig, draw_channel, modulate, one_bit_quantize, random_payload_bits, transmit
from onebitmimo.detect import (
    DegenerateOutputError,
    DetectorParams,
    count_multiplications,
    default_sigma_floor,
    floating_params,
    gradient,
    hardware_params,
    normalize_symbols,
    objective,
    onebox_detect,
    zf_detect,
)
from onebitmimo.numerics import ClampedMillsTable, ConfigurationError, FixedPointFormat


def tiny_cfg(**kw):
    defaults = dict(antennas=4, users=2, subcarriers=8, used_subcarriers=8,
                    taps=2, cyclic_prefix=2, constellation="qpsk")
    defaults.update(kw)
    return SystemConfig(**defaults)


def random_instance(rng, antennas=4, users=2, subcarriers=8):
    channel = (rng.standard_normal((antennas, subcarriers, users))
               + 1j * rng.standard_normal((antennas, subcarriers, users))) / math.sqrt(2)
    received = one_bit_quantize(rng.standard_normal((antennas, subcarriers))
                                + 1j * rng.standard_normal((antennas, subcarriers)))
    symbols = 0.4 * (rng.standard_normal((subcarriers, users))
                     + 1j * rng.standard_normal((subcarriers, users)))
    return channel, received, symbols


def fd_gradient(symbols, channel, received, sigma, eps=1e-5):
    """Central finite differences of the objective, as a complex matrix."""
    out = np.zeros_like(symbols)
    for w in range(symbols.shape[0]):
        for u in range(symbols.shape[1]):
            for comp in (1.0, 1j):
                e = np.zeros_like(symbols)
                e[w, u] = comp * eps
                d = (objective(symbols + e, channel, received, sigma)
                     - objective(symbols - e, channel, received, sigma)) / (2 * eps)
                out[w, u] += comp * d
    return out


class TestObjective:
    def test_all_zero_symbols(self):
        rng = np.random.default_rng(0)
        channel, received, _ = random_instance(rng)
        f = objective(np.zeros((8, 2)), channel, received, sigma=1.0)
        assert f == pytest.approx(2 * 4 * 8 * math.log(2), rel=1e-12)

    def test_scalar_case_frozen(self):
        # B = W = U = 1, unit channel, sigma = sqrt(2): f = -2 log Phi(1),
        # frozen through the independent math.erf evaluation of Phi
        channel = np.ones((1, 1, 1), dtype=complex)
        received = np.array([[1.0 + 1.0j]])
        symbols = np.array([[1.0 + 1.0j]])
        phi1 = 0.5 * (1 + math.erf(1 / math.sqrt(2)))
        expected = -2.0 * math.log(phi1)
        assert expected == pytest.approx(0.3455075580468994, rel=1e-12)
        got = objective(symbols, channel, received, sigma=math.sqrt(2.0))
        assert got == pytest.approx(expected, rel=1e-12)

    def test_finite_under_extreme_arguments(self):
        channel = np.full((1, 1, 1), 100.0 + 0.0j)
        received = np.array([[-1.0 - 1.0j]])
        symbols = np.array([[1.0 + 1.0j]])
        f = objective(symbols, channel, received, sigma=0.01)
        assert math.isfinite(f) and f > 0

    def test_rejects_bad_sigma(self):
        channel, received, symbols = random_instance(np.random.default_rng(1))
        with pytest.raises(ValueError):
            objective(symbols, channel, received, sigma=0.0)


class TestGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        channel, received, symbols = random_instance(rng)
        sigma = 1.3
        g, pref = gradient(symbols, channel, received, sigma)
        fd = fd_gradient(symbols, channel, received, sigma)
        analytic = -2.0 * pref * g  # steepest-ascent convention of the objective
        err = np.abs(analytic - fd)
        scale = np.maximum(np.abs(analytic), np.abs(fd))
        assert (err / np.maximum(scale, 1e-8)).max() < 1e-6

    def test_prefactor_value(self):
        channel, received, symbols = random_instance(np.random.default_rng(3))
        _, pref = gradient(symbols, channel, received, sigma=2.0)
        assert pref == pytest.approx(math.sqrt(2) / 4.0)

    def test_zero_symbols_spectrum_structure(self):
        # with symbols at zero every Mills input is zero, so the refined rows
        # reduce to omega(0) times the transformed observations
        rng = np.random.default_rng(4)
        channel, received, _ = random_instance(rng)
        g, _ = gradient(np.zeros((8, 2)), channel, received, sigma=1.0)
        w0 = 2.0 / math.sqrt(2.0 * math.pi)
        spectrum = np.fft.fft(received * w0, axis=1, norm="ortho")
        expected = np.einsum("bwu,bw->wu", channel.conj(), spectrum)
        assert np.abs(g - expected).max() < 1e-12

    def test_descent_direction_reduces_objective(self):
        rng = np.random.default_rng(5)
        channel, received, symbols = random_instance(rng)
        sigma = 1.0
        f0 = objective(symbols, channel, received, sigma)
        g, pref = gradient(symbols, channel, received, sigma)
        f1 = objective(symbols + 1e-3 * pref * g, channel, received, sigma)
        assert f1 < f0


class TestOneboxDetect:
    def test_noiseless_qpsk_recovery(self):
        cfg = SystemConfig(antennas=64, users=4, constellation="qpsk")
        rng = np.random.default_rng(6)
        chan = draw_channel(cfg, rng)
        correct = total = 0
        for trial in range(3):
            bits = random_payload_bits(cfg, rng, 1)[0]
            frame = modulate(bits, cfg)
            n0 = al.noise_from_snr(30.0, cfg)
            _, received = transmit(frame.symbols, chan, n0, rng)
            result = onebox_detect(received, chan.per_antenna, math.sqrt(n0), cfg)
            correct += int(np.count_nonzero(result.bits == bits))
            total += bits.size
        assert correct / total >= 0.99

    def test_box_feasibility_and_guard_rows(self):
        cfg = SystemConfig(antennas=16, users=4, constellation="16qam")
        rng = np.random.default_rng(7)
        chan = draw_channel(cfg, rng)
        frame = modulate(random_payload_bits(cfg, rng, 1)[0], cfg)
        n0 = al.noise_from_snr(0.0, cfg)
        _, received = transmit(frame.symbols, chan, n0, rng)
        result = onebox_detect(received, chan.per_antenna, math.sqrt(n0), cfg)
        hw = cfg.data_constellation.half_width
        relaxed = result.relaxed
        assert np.abs(relaxed[cfg.used_indices].real).max() <= hw
        assert np.abs(relaxed[cfg.used_indices].imag).max() <= hw
        assert np.all(relaxed[cfg.guard_indices] == 0)

    def test_sigma_floor_identity_when_inactive(self):
        cfg = tiny_cfg()
        rng = np.random.default_rng(8)
        chan = draw_channel(cfg, rng)
        frame = modulate(random_payload_bits(cfg, rng, 1)[0], cfg)
        n0 = 4.0  # sigma = 2, far above any floor used here
        _, received = transmit(frame.symbols, chan, n0, rng)
        with_floor = onebox_detect(received, chan.per_antenna, 2.0, cfg,
                                   DetectorParams(sigma_floor=1.0))
        without = onebox_detect(received, chan.per_antenna, 2.0, cfg,
                                DetectorParams(sigma_floor=1e-12))
        assert np.array_equal(with_floor.relaxed, without.relaxed)
        assert np.array_equal(with_floor.bits, without.bits)

    def test_sigma_floor_engages_below(self):
        cfg = tiny_cfg()
        rng = np.random.default_rng(9)
        chan = draw_channel(cfg, rng)
        frame = modulate(random_payload_bits(cfg, rng, 1)[0], cfg)
        _, received = transmit(frame.symbols, chan, 1e-6, rng)
        floored = onebox_detect(received, chan.per_antenna, 1e-3, cfg,
                                DetectorParams(sigma_floor=0.5))
        same_as_floor_sigma = onebox_detect(received, chan.per_antenna, 0.5, cfg,
                                            DetectorParams(sigma_floor=0.5))
        assert np.array_equal(floored.relaxed, same_as_floor_sigma.relaxed)

    def test_objective_tracking_length(self):
        cfg = tiny_cfg()
        rng = np.random.default_rng(10)
        chan = draw_channel(cfg, rng)
        frame = modulate(random_payload_bits(cfg, rng, 1)[0], cfg)
        _, received = transmit(frame.symbols, chan, 1.0, rng)
        result = onebox_detect(received, chan.per_antenna, 1.0, cfg,
                               DetectorParams(iterations=4), track_objective=True)
        assert result.iterations_run == 4
        assert len(result.objectives) == 5

    def test_default_sigma_floor_is_ten_db(self):
        cfg = SystemConfig()
        assert default_sigma_floor(cfg) == pytest.approx(al.noise_std(10.0, cfg))

    def test_params_validation(self):
        with pytest.raises(ValueError):
            DetectorParams(iterations=0)
        with pytest.raises(ValueError):
            DetectorParams(step_size=0.0)  # the no-update case is rejected by type
        with pytest.raises(ValueError):
            DetectorParams(fixed_point=dt.HARDWARE_FORMATS)  # needs a Mills table


class TestNormalizeSymbols:
    def test_target_norm(self):
        cfg = tiny_cfg()
        rng = np.random.default_rng(11)
        s = rng.standard_normal((8, 2)) + 1j * rng.standard_normal((8, 2))
        out = normalize_symbols(s, cfg)
        target = cfg.symbol_energy * math.sqrt(cfg.users * cfg.used_subcarriers)
        assert np.linalg.norm(out) == pytest.approx(target, rel=1e-12)

    def test_already_normalized_unchanged(self):
        cfg = tiny_cfg()
        s = np.zeros((8, 2), dtype=complex)
        s[0, 0] = cfg.symbol_energy * math.sqrt(cfg.users * cfg.used_subcarriers)
        assert normalize_symbols(s, cfg) == pytest.approx(s)

    def test_scale_invariance(self):
        cfg = tiny_cfg()
        rng = np.random.default_rng(12)
        s = rng.standard_normal((8, 2)) + 1j * rng.standard_normal((8, 2))
        assert normalize_symbols(3.7 * s, cfg) == pytest.approx(normalize_symbols(s, cfg))

    def test_zero_raises(self):
        with pytest.raises(DegenerateOutputError):
            normalize_symbols(np.zeros((8, 2)), tiny_cfg())

    def test_hard_decisions_invariant_to_scaling(self):
        cfg = tiny_cfg(constellation="16qam")
        rng = np.random.default_rng(13)
        s = rng.standard_normal((8, 2)) + 1j * rng.standard_normal((8, 2))
        a = al.demodulate(normalize_symbols(s, cfg), cfg)
        b = al.demodulate(normalize_symbols(0.01 * s, cfg), cfg)
        assert np.array_equal(a, b)


class TestZfDetect:
    def test_noiseless_unquantized_recovery(self):
        cfg = tiny_cfg(antennas=8)
        rng = np.random.default_rng(14)
        chan = draw_channel(cfg, rng)
        frame = modulate(random_payload_bits(cfg, rng, 1)[0], cfg)
        y, _ = transmit(frame.symbols, chan, 0.0, rng)
        result = zf_detect(y, chan.per_antenna, cfg)
        err = np.abs(result.relaxed[cfg.used_indices] - frame.symbols[cfg.used_indices])
        assert err.max() < 1e-8
        assert np.array_equal(result.bits, frame.payload_bits)

    def test_scalar_least_squares(self):
        cfg = SystemConfig(antennas=1, users=1, subcarriers=4, used_subcarriers=4,
                           taps=1, cyclic_prefix=0, constellation="qpsk")
        rng = np.random.default_rng(15)
        chan = draw_channel(cfg, rng)
        received = one_bit_quantize(rng.standard_normal((1, 4)) + 1j * rng.standard_normal((1, 4)))
        result = zf_detect(received, chan.per_antenna, cfg)
        spectrum = np.fft.fft(received[0], norm="ortho")
        expected = spectrum / chan.per_antenna[0, :, 0]
        assert result.relaxed[:, 0] == pytest.approx(expected * np.linalg.norm(result.relaxed) / np.linalg.norm(expected))

    def test_matches_normal_equations_oracle(self):
        cfg = tiny_cfg(antennas=8, users=4)
        rng = np.random.default_rng(16)
        chan = draw_channel(cfg, rng)
        received = one_bit_quantize(rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
        result = zf_detect(received, chan.per_antenna, cfg)
        spectrum = np.fft.fft(received, axis=1, norm="ortho")
        pre_norm = np.zeros((8, 4), dtype=complex)
        for w in range(8):
            h_w = chan.per_subcarrier[w]
            rhs = spectrum[:, w]
            pre_norm[w] = np.linalg.inv(h_w.conj().T @ h_w) @ (h_w.conj().T @ rhs)
        expected = pre_norm * (np.linalg.norm(result.relaxed) / np.linalg.norm(pre_norm))
        assert np.abs(result.relaxed - expected).max() < 1e-9

    def test_all_zero_received_degenerate(self):
        cfg = tiny_cfg()
        rng = np.random.default_rng(17)
        chan = draw_channel(cfg, rng)
        result = zf_detect(np.zeros((4, 8), dtype=complex), chan.per_antenna, cfg)
        assert result.degenerate
        label0 = cfg.data_constellation.bit_labels[0]
        bits0 = np.array([int(c) for c in label0], dtype=np.uint8)
        assert np.all(result.bits == bits0)


class TestComplexityCounter:
    def test_worked_values(self):
        big = SystemConfig(antennas=128, users=8, subcarriers=128, used_subcarriers=100,
                           taps=2, cyclic_prefix=2)
        small = SystemConfig(antennas=64, users=4, subcarriers=128, used_subcarriers=100,
                             taps=2, cyclic_prefix=2)
        assert count_multiplications(big, 1) == 1_525_760
        assert count_multiplications(small, 1) == 500_736
        assert count_multiplications(big, 3) == 3 * 1_525_760

    def test_linear_in_iterations(self):
        cfg = SystemConfig()
        assert count_multiplications(cfg, 7) == 7 * count_multiplications(cfg, 1)


class TestFixedPointPath:
    def test_radix2_matches_numpy_with_fine_formats(self):
        from onebitmimo.detect import _fixed_radix2
        rng = np.random.default_rng(18)
        x = rng.standard_normal((64, 3)) + 1j * rng.standard_normal((64, 3))
        fine = FixedPointFormat(12, 22)
        fwd = _fixed_radix2(x, inverse=False, scaled_stages=frozenset({0, 2}), work_format=fine)
        assert np.abs(fwd - np.fft.fft(x, axis=0) / 4.0).max() < 1e-3
        inv = _fixed_radix2(x, inverse=True, scaled_stages=frozenset(), work_format=fine)
        assert np.abs(inv - 64 * np.fft.ifft(x, axis=0)).max() < 1e-3

    def test_transform_pair_absorbs_sqrt2(self):
        # time direction carries sqrt(2) more than unitary, frequency direction
        # sqrt(2) less; together they have unit gain
        from onebitmimo.detect import _fixed_radix2
        rng = np.random.default_rng(19)
        x = rng.standard_normal((128, 2)) + 1j * rng.standard_normal((128, 2))
        fine = FixedPointFormat(12, 22)
        t = _fixed_radix2(x, inverse=True, scaled_stages=frozenset({1, 3, 5}), work_format=fine)
        assert np.abs(t - math.sqrt(2) * np.fft.ifft(x, axis=0, norm="ortho")).max() < 1e-3
        f = _fixed_radix2(x, inverse=False, scaled_stages=frozenset({0, 2, 4, 6}), work_format=fine)
        assert np.abs(f - np.fft.fft(x, axis=0, norm="ortho") / math.sqrt(2)).max() < 1e-3

    def test_hardware_defaults(self):
        params = hardware_params()
        assert params.step_size == 1.0 / 32.0
        assert isinstance(params.mills, ClampedMillsTable)
        assert params.fixed_point["channel"] == FixedPointFormat(4, 4)
        assert params.fixed_point["symbols"] == FixedPointFormat(2, 7)

    def test_requires_odd_log2(self):
        cfg = tiny_cfg(subcarriers=16, used_subcarriers=12)
        rng = np.random.default_rng(20)
        chan = draw_channel(cfg, rng)
        frame = modulate(random_payload_bits(cfg, rng, 1)[0], cfg)
        _, received = transmit(frame.symbols, chan, 1.0, rng)
        with pytest.raises(ConfigurationError):
            onebox_detect(received, chan.per_antenna, 1.0, cfg, hardware_params())

    def test_outputs_on_symbol_grid_and_deterministic(self):
        cfg = SystemConfig(antennas=16, users=2, constellation="16qam")
        rng = np.random.default_rng(21)
        chan = draw_channel(cfg, rng)
        frame = modulate(random_payload_bits(cfg, rng, 1)[0], cfg)
        n0 = al.noise_from_snr(10.0, cfg)
        _, received = transmit(frame.symbols, chan, n0, rng)
        params = hardware_params()
        a = onebox_detect(received, chan.per_antenna, math.sqrt(n0), cfg, params)
        b = onebox_detect(received, chan.per_antenna, math.sqrt(n0), cfg, params)
        assert np.array_equal(a.relaxed, b.relaxed)
        grid = params.fixed_point["symbols"].step
        on_grid = np.round(a.relaxed[cfg.used_indices].real / grid) * grid
        assert np.abs(a.relaxed[cfg.used_indices].real - on_grid).max() < 1e-12

    def test_capture_contents(self):
        cfg = SystemConfig(antennas=8, users=2, constellation="16qam")
        rng = np.random.default_rng(22)
        chan = draw_channel(cfg, rng)
        frame = modulate(random_payload_bits(cfg, rng, 1)[0], cfg)
        n0 = al.noise_from_snr(5.0, cfg)
        _, received = transmit(frame.symbols, chan, n0, rng)
        capture = {}
        params = hardware_params(iterations=2)
        onebox_detect(received, chan.per_antenna, math.sqrt(n0), cfg, params, capture=capture)
        assert capture["channel"].shape == (8, cfg.subcarriers, 2)
        assert len(capture["iterations"]) == 2
        first = capture["iterations"][0]
        assert set(first) == {"mix", "time", "spectrum", "step", "symbols"}
        assert first["mix"].shape == (8, cfg.subcarriers)
        assert first["symbols"].shape == (cfg.subcarriers, 2)

    def test_matches_floating_at_moderate_snr(self):
        cfg = SystemConfig(antennas=32, users=4, constellation="16qam")
        rng = np.random.default_rng(23)
        chan = draw_channel(cfg, rng)
        bits = random_payload_bits(cfg, rng, 1)[0]
        frame = modulate(bits, cfg)
        n0 = al.noise_from_snr(10.0, cfg)
        _, received = transmit(frame.symbols, chan, n0, rng)
        sigma = math.sqrt(n0)
        res_float = onebox_detect(received, chan.per_antenna, sigma, cfg, floating_params())
        res_fixed = onebox_detect(received, chan.per_antenna, sigma, cfg, hardware_params())
        disagree = np.count_nonzero(res_float.bits != res_fixed.bits)
        assert disagree / bits.size < 0.05

    def test_inv_sigma_lut_value(self):
        from onebitmimo.detect import _lut_inv_sigma
        got = _lut_inv_sigma(0.79, FixedPointFormat(2, 6))
        # grid snaps 0.79 to 13/16; 16/13 rounds to 79/64 in [2.6]
        assert got == 79.0 / 64.0
