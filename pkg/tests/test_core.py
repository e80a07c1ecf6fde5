import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iadcnet import core
from iadcnet.baselines import FIRST_ORDER_ENTRIES, first_order
from iadcnet.errors import DegenerateDecoderError, DomainError, StructuralError


def reference_conversion(x, W, delta, cycles):
    """Scalar loop oracle of the cycle semantics (copy, ascending stages, commit)."""
    K = W.shape[0]
    xi_star = [0.0] * K
    zeta_star = [0.0] * K
    bits, xis = [], []
    for _ in range(cycles):
        xi, zeta = list(xi_star), list(zeta_star)
        for k in range(K):
            a = W[k, 0] * x
            for j in range(K):
                a += W[k, 1 + 4 * j] * zeta[j] + W[k, 2 + 4 * j] * xi[j]
                a += W[k, 3 + 4 * j] * zeta_star[j] + W[k, 4 + 4 * j] * xi_star[j]
            xi[k] = min(max(a, -delta), delta)
            zeta[k] = 0.5 if xi[k] >= 0 else -0.5
        xi_star, zeta_star = xi, zeta
        bits.append(zeta[-1])
        xis.append(list(xi))
    return np.array(bits), np.array(xis)


def first_order_topology(N=80, delta=0.4):
    return core.Topology(K=1, N=N, Q=32, delta=delta, decoder_depth=1)


class TestTopology:
    def test_defaults(self):
        t = core.Topology(K=3)
        assert t.weight_shape == (3, 13)
        assert t.decoder_depth == 3
        assert t.delta == (0.4, 0.4, 0.4)

    @pytest.mark.parametrize("kw", [{"K": 0}, {"K": 9}, {"K": 2, "N": 0}, {"K": 2, "delta": -0.1},
                                    {"K": 2, "dac_levels": (-0.5, 0.4)}, {"K": 2, "decoder_depth": 0}])
    def test_invalid(self, kw):
        with pytest.raises((DomainError, StructuralError)):
            core.Topology(**kw)

    def test_delta_length(self):
        with pytest.raises(StructuralError):
            core.Topology(K=2, delta=(0.4,))


class TestElementwise:
    @pytest.mark.parametrize("v,d,out", [(0.3, 0.4, 0.3), (0.9, 0.4, 0.4), (-0.41, 0.4, -0.4)])
    def test_hardtanh(self, v, d, out):
        assert core.hardtanh(v, d) == pytest.approx(out, abs=0)

    def test_hardtanh_rejects_bad_delta(self):
        with pytest.raises(DomainError):
            core.hardtanh(0.1, 0.0)

    @pytest.mark.parametrize("xi,out", [(0.125, 0.5), (-0.125, -0.5), (0.0, 0.5)])
    def test_quantize_sign(self, xi, out):
        assert core.quantize_sign(xi) == out

    @pytest.mark.parametrize("K", [2, 4])
    def test_reset_state(self, K):
        s = core.reset_state(core.Topology(K=K))
        for arr in (s.xi, s.zeta, s.xi_star, s.zeta_star):
            assert arr.shape == (K,) and not arr.any()


class TestEncoder:
    def test_first_order_trajectory(self):
        topo = first_order_topology()
        w, _ = first_order()
        s = core.reset_state(topo)
        seen = []
        for _ in range(4):
            s = core.encoder_cycle(s, 0.25, w, topo)
            seen.append((s.xi[0], s.zeta[0]))
        assert seen == [(0.125, 0.5), (0.0, 0.5), (-0.125, -0.5), (0.25, 0.5)]

    def test_zero_weights_tie_break(self):
        topo = core.Topology(K=2)
        s = core.encoder_cycle(core.reset_state(topo), 0.3, core.EncoderWeights(np.zeros((2, 9))), topo)
        assert not s.xi.any() and np.all(s.zeta == 0.5)

    def test_dimension_mismatch(self):
        topo = core.Topology(K=2)
        with pytest.raises(StructuralError):
            core.encoder_cycle(core.reset_state(topo), 0.1, core.EncoderWeights(np.zeros((1, 5))), topo)
        with pytest.raises(StructuralError):
            core.encoder_cycle(core.reset_state(core.Topology(K=3)), 0.1, core.EncoderWeights(np.zeros((2, 9))), topo)

    def test_per_weight_noise_is_summed_before_activation(self):
        topo = first_order_topology()
        w, _ = first_order()
        noise = np.zeros((1, 5))
        noise[0, 0] = 0.01
        noise[0, 4] = -0.03
        s = core.encoder_cycle(core.reset_state(topo), 0.25, w, topo, noise)
        assert s.xi[0] == pytest.approx(0.125 - 0.02, abs=1e-15)

    def test_run_encoder_bitstream(self):
        topo = first_order_topology()
        w, _ = first_order()
        bits, trace = core.run_encoder([0.25], w, topo, 4)
        assert bits.tolist() == [[0.5, 0.5, -0.5, 0.5]]
        assert bits.mean() == 0.25
        assert trace[0, :, 0].tolist() == [0.125, 0.0, -0.125, 0.25]

    def test_zero_input_and_quantizer_paths_give_zero_trace(self):
        # the tie-break emits +0.5 at xi = 0, so any quantizer feedback would excite the loop
        topo = core.Topology(K=2)
        W = np.zeros((2, 9))
        W[0, core.column("xi_star", 0)] = 1.0
        W[1, core.column("xi", 0)] = 0.7
        W[1, core.column("xi_star", 1)] = 1.0
        _, trace = core.run_encoder(np.zeros(5), core.EncoderWeights(W), topo, 20)
        assert not trace.any()

    def test_zero_input_with_quantizer_feedback_is_excited(self):
        topo = first_order_topology()
        w, _ = first_order()
        _, trace = core.run_encoder([0.0], w, topo, 4)
        assert trace[0, :, 0].tolist() == [0.0, -0.25, 0.0, -0.25]

    def test_domain_errors(self):
        topo = first_order_topology()
        w, _ = first_order()
        with pytest.raises(DomainError):
            core.run_encoder([0.6], w, topo)
        with pytest.raises(DomainError):
            core.run_encoder([0.1], w, topo, 81)
        with pytest.raises(DomainError):
            core.run_encoder([0.1], w, topo, 0)

    @settings(max_examples=40, deadline=None)
    @given(K=st.integers(1, 4), seed=st.integers(0, 2**31 - 1), cycles=st.integers(1, 30))
    def test_matches_scalar_oracle(self, K, seed, cycles):
        rng = np.random.default_rng(seed)
        W = rng.uniform(-1.0, 1.0, (K, 4 * K + 1))
        topo = core.Topology(K=K, N=30)
        x = rng.uniform(-0.5, 0.5, 6)
        bits, trace = core.run_encoder(x, core.EncoderWeights(W), topo, cycles)
        for s in range(len(x)):
            rb, rx = reference_conversion(x[s], W, 0.4, cycles)
            np.testing.assert_array_equal(bits[s], rb)
            np.testing.assert_allclose(trace[s], rx, atol=1e-12, rtol=0)

    @settings(max_examples=25, deadline=None)
    @given(K=st.integers(1, 4), seed=st.integers(0, 2**31 - 1))
    def test_saturation_and_alphabet(self, K, seed):
        rng = np.random.default_rng(seed)
        topo = core.Topology(K=K, N=40, delta=tuple(rng.uniform(0.1, 0.5, K)))
        W = rng.uniform(-3.0, 3.0, topo.weight_shape)
        bits, trace = core.run_encoder(rng.uniform(-0.5, 0.5, 8), core.EncoderWeights(W), topo)
        assert np.all(np.abs(trace) <= topo.delta_array)
        assert set(np.unique(bits)) <= {-0.5, 0.5}

    def test_batch_and_single_cycle_agree(self):
        topo = core.Topology(K=3)
        rng = np.random.default_rng(3)
        w = core.EncoderWeights(rng.uniform(-1, 1, topo.weight_shape))
        x = rng.uniform(-0.3, 0.3, 4)
        batch = core.reset_state(topo, batch=4)
        singles = [core.reset_state(topo) for _ in x]
        for _ in range(10):
            batch = core.encoder_cycle(batch, x, w, topo)
            singles = [core.encoder_cycle(s, xv, w, topo) for s, xv in zip(singles, x)]
        np.testing.assert_array_equal(batch.xi, np.array([s.xi for s in singles]))


class TestDecoder:
    def test_first_order_norm(self):
        g = core.compute_decoder_norm(np.ones(1), 1, 80)
        np.testing.assert_array_equal(g, np.arange(1, 81))

    def test_second_order_norm(self):
        g = core.compute_decoder_norm(np.ones(2), 2, 3)
        np.testing.assert_array_equal(g, [1.0, 3.0, 6.0])

    def test_degenerate(self):
        with pytest.raises(DegenerateDecoderError):
            core.compute_decoder_norm(np.array([1.0, 0.0]), 2, 5)
        with pytest.raises(StructuralError):
            core.compute_decoder_norm(np.ones(2), 3, 5)

    def test_mean_of_bitstream(self):
        params = core.DecoderParams.build(np.ones(1), 4)
        y = core.run_decoder(np.array([[0.5, 0.5, -0.5, 0.5]]), params)
        assert y[0, -1] == 0.25

    @pytest.mark.parametrize("J", [1, 2, 3, 4])
    @pytest.mark.parametrize("level", [0.5, -0.5])
    def test_constant_stream(self, J, level):
        scales = np.random.default_rng(J).uniform(0.2, 2.0, J)
        params = core.DecoderParams.build(scales, 80)
        y = core.run_decoder(np.full((1, 80), level), params)
        np.testing.assert_allclose(y, level, atol=1e-12, rtol=0)

    def test_too_long(self):
        params = core.DecoderParams.build(np.ones(1), 4)
        with pytest.raises(StructuralError):
            core.run_decoder(np.full((1, 5), 0.5), params)

    def test_input_scales_cancel(self):
        bits = np.where(np.random.default_rng(0).random((3, 40)) > 0.5, 0.5, -0.5)
        a = core.run_decoder(bits, core.DecoderParams.build(np.ones(2), 40))
        b = core.run_decoder(bits, core.DecoderParams.build(np.array([0.3, 7.0]), 40))
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


class TestConvert:
    def model(self, N=80):
        w, d = first_order(N)
        return core.IADCModel(first_order_topology(N), w, d)

    def test_first_order_x_quarter(self):
        t = core.convert([0.25], self.model(), 4)
        assert t.y[0, -1] == 0.25
        assert t.xi_final[0, 0] == 0.25

    def test_negation_symmetry(self):
        m = self.model()
        # offset keeps every xi away from an exact 0, where the tie-break breaks symmetry
        x = np.linspace(0.01, 0.35, 17) + 1e-7 * np.pi
        a = core.convert(x, m).y
        b = core.convert(-x, m).y
        np.testing.assert_allclose(a, -b, atol=1e-15)

    def test_deterministic(self):
        m = self.model()
        x = np.linspace(-0.35, 0.35, 101)
        np.testing.assert_array_equal(core.convert(x, m).y, core.convert(x, m).y)

    def test_intermediate_readout(self):
        topo = core.Topology(K=2)
        rng = np.random.default_rng(5)
        m = core.IADCModel(topo, core.EncoderWeights(rng.uniform(-1, 1, topo.weight_shape)),
                           core.DecoderParams.build(np.ones(2), 80))
        x = rng.uniform(-0.35, 0.35, 20)
        short = core.convert(x, m, 30).y
        long = core.convert(x, m, 70).y
        np.testing.assert_array_equal(short, long[:, :30])

    def test_noise_requires_levels(self):
        with pytest.raises(DomainError):
            core.convert([0.1], self.model(), noise_on=True)


class TestSimulate:
    def test_matches_convert(self):
        topo = core.Topology(K=3)
        rng = np.random.default_rng(7)
        W = rng.uniform(-1, 1, topo.weight_shape)
        x = rng.uniform(-0.35, 0.35, 32)
        y, xi_final, bits = core.simulate(x, W, topo, 80, np.ones(3))
        ref = core.convert(x, core.IADCModel(topo, core.EncoderWeights(W), core.DecoderParams.build(np.ones(3), 80)))
        np.testing.assert_array_equal(bits, ref.bitstream)
        np.testing.assert_allclose(y, ref.y, rtol=0, atol=1e-14)
        np.testing.assert_array_equal(xi_final, ref.xi_final)

    def test_fused_equals_primitive_forward(self):
        topo = core.Topology(K=2, N=16)
        rng = np.random.default_rng(8)
        W = rng.uniform(-1, 1, topo.weight_shape)
        x = rng.uniform(-0.35, 0.35, 10)
        draws = rng.standard_normal((16, 10, 2))
        a = core.simulate(x, W, topo, 16, np.ones(2), draws, np.array([1e-3, 2e-3]))
        b = core.simulate(x, W, topo, 16, np.ones(2), draws, np.array([1e-3, 2e-3]), fused=False)
        np.testing.assert_array_equal(a[2], b[2])
        np.testing.assert_allclose(a[1], b[1], atol=1e-15)

    def test_first_order_entries_layout(self):
        W = core.EncoderWeights.from_entries(1, FIRST_ORDER_ENTRIES).W
        assert W.tolist() == [[0.5, 0.0, 0.0, -0.5, 1.0]]
        with pytest.raises(StructuralError):
            core.EncoderWeights.from_entries(1, {(1, "xi", 0): 1.0})
        with pytest.raises(StructuralError):
            core.column("bogus", 0)
