import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dctshield.errors import ValidationError
from dctshield.quant import (
    QuantTable,
    dequantize,
    load_table,
    quantize,
    removal_probability,
    save_table,
)
from dctshield.transform import unzigzag


def uniform_table(step):
    return QuantTable(np.full(64, step, dtype=int))


def one_block(value):
    return np.full((8, 8), float(value))


class TestQuantize:
    def test_positive_example(self):
        t = uniform_table(16)
        levels, trace = quantize(one_block(35.0), t, return_trace=True)
        assert np.all(levels == 2)
        assert np.all(trace.recon == 32.0)
        assert np.all(trace.theta == 3.0)

    def test_unit_step_is_lossless_on_integers(self, rng):
        t = uniform_table(1)
        coefs = rng.integers(-500, 500, size=(20, 8, 8)).astype(np.float64)
        levels = quantize(coefs, t)
        assert np.array_equal(dequantize(levels, t), coefs)

    def test_negative_half_rounds_away_from_zero(self):
        t = uniform_table(16)
        levels, trace = quantize(one_block(-24.0), t, return_trace=True)
        assert np.all(levels == -2)
        assert np.all(trace.recon == -32.0)
        # the one boundary case where the remainder hits +QS/2 exactly
        assert np.all(trace.theta == 8.0)

    def test_levels_are_int16(self):
        levels = quantize(one_block(100.0), uniform_table(3))
        assert levels.dtype == np.int16

    def test_round_trip_error_bound(self, rng):
        steps = rng.integers(1, 256, size=64)
        t = QuantTable(steps)
        coefs = rng.uniform(-2000, 2000, size=(50, 8, 8))
        back = dequantize(quantize(coefs, t), t)
        err = np.abs(back - coefs)
        bound = unzigzag(np.broadcast_to(steps / 2.0, (50, 64)))
        assert np.all(err <= bound + 1e-12)

    def test_zero_levels_decode_to_zero(self):
        t = uniform_table(7)
        assert np.all(dequantize(np.zeros((3, 64), dtype=np.int16), t) == 0.0)

    def test_small_perturbation_moves_levels_by_at_most_one_step(self):
        # exhaustive scan of the coefficient over one quantizer period
        qs = 16
        t = uniform_table(qs)
        c = np.linspace(-qs, qs, 4001)
        blocks = np.broadcast_to(c[:, None, None], (c.size, 8, 8)).copy()
        for rho in (2.0, 4.0, 8.0, -8.0):
            diff = np.abs(
                dequantize(quantize(blocks + rho, t), t)
                - dequantize(quantize(blocks, t), t)
            )
            assert set(np.unique(diff)) <= {0.0, float(qs)}

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_trace_decomposition_exact(self, seed):
        r = np.random.default_rng(seed)
        t = QuantTable(r.integers(1, 256, size=64))
        coefs = r.uniform(-2040, 2040, size=(4, 8, 8))
        levels, trace = quantize(coefs, t, return_trace=True)
        from dctshield.transform import zigzag

        zz = zigzag(coefs)
        assert np.array_equal(trace.eta, levels)
        assert np.all(trace.recon == levels * t.steps)
        assert np.allclose(zz, trace.recon + trace.theta, rtol=0, atol=0)
        half = t.steps / 2.0
        assert np.all(trace.theta >= -half) and np.all(trace.theta <= half)


class TestRemovalProbability:
    def test_zero_perturbation(self):
        assert removal_probability(0.0, 16) == 1.0

    def test_boundary(self):
        assert removal_probability(8.0, 16) == 0.5
        assert removal_probability(-8.0, 16) == 0.5

    def test_quarter_step_against_monte_carlo(self):
        # oracle: uniform-remainder simulation with the real quantizer
        analytic = removal_probability(4.0, 16)
        assert analytic == 0.75
        r = np.random.default_rng(99)
        theta = r.uniform(-8.0, 8.0, size=1_000_000)
        eta = r.integers(-100, 100, size=theta.size)
        c = eta * 16.0 + theta
        t = uniform_table(16)
        blocks = (c[: (c.size // 64) * 64]).reshape(-1, 8, 8)
        base = quantize(blocks, t)
        pert = quantize(blocks + 4.0, t)
        rate = float(np.mean(base == pert))
        assert abs(rate - analytic) < 0.003

    def test_rho_too_large(self):
        with pytest.raises(ValidationError):
            removal_probability(9.0, 16)

    def test_bad_step(self):
        with pytest.raises(ValidationError):
            removal_probability(0.0, 0)


class TestQuantTable:
    def test_rejects_out_of_range_steps(self):
        with pytest.raises(ValidationError):
            QuantTable(np.zeros(64, dtype=int))
        with pytest.raises(ValidationError):
            QuantTable(np.full(64, 256))

    def test_rejects_wrong_length(self):
        with pytest.raises(ValidationError):
            QuantTable(np.ones(63, dtype=int))

    def test_json_round_trip(self, tmp_path, rng):
        t = QuantTable(rng.integers(1, 256, size=64))
        path = tmp_path / "t.json"
        save_table(t, path)
        assert np.array_equal(load_table(path).steps, t.steps)

    def test_load_rejects_bad_format(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": 9, "zigzag_steps": []}')
        with pytest.raises(ValidationError):
            load_table(path)

    def test_load_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text("not json")
        with pytest.raises(ValidationError):
            load_table(path)

    def test_raster_steps_reindexing(self):
        steps = np.arange(1, 65)
        t = QuantTable(steps)
        # zigzag position 2 is band (1, 0), raster index 8
        assert t.raster_steps[8] == steps[2]
