import sympy
import pytest

from horq.errors import ConfigError, DomainError, ShapeError
from horq.perf import (
    SpeedupQuery,
    bench_gemm,
    standard_sweeps,
    operation_counts,
    parse_layer,
    speedup_ratio,
    storage_model,
    sweep,
)


class TestSpeedup:
    def test_order_two_anchor(self):
        assert speedup_ratio(SpeedupQuery(64, 256, 3, 3, K=2)) == pytest.approx(31.98, abs=0.01)

    def test_order_one(self):
        assert speedup_ratio(SpeedupQuery(64, 256, 3, 3, K=1)) == pytest.approx(63.94, abs=0.01)

    @pytest.mark.parametrize("K", [1, 2, 3, 4])
    def test_asymptote(self, K):
        q = SpeedupQuery(1000, 1000, 3, 4, K=K)   # N = 1.2e7
        assert abs(speedup_ratio(q) - 64 / K) < 0.1

    def test_word_width(self):
        q = SpeedupQuery(64, 256, 3, 3, K=2, word_width=128)
        n = 64 * 256 * 9
        assert speedup_ratio(q) == pytest.approx(128 * n / (2 * n + 128 * 3))

    def test_strictly_decreasing_in_order(self):
        for dims in [(1, 1, 1, 1), (3, 16, 3, 3), (64, 256, 3, 3), (512, 512, 7, 7)]:
            etas = [speedup_ratio(SpeedupQuery(*dims, K=K)) for K in range(1, 10)]
            assert all(b < a for a, b in zip(etas, etas[1:]))

    def test_counts_cancel_input_size(self):
        q = SpeedupQuery(16, 32, 3, 3, K=3)
        for w_in, h_in in [(1, 1), (7, 9), (224, 224)]:
            float_ops, binary_ops = operation_counts(q, w_in, h_in)
            assert float_ops / binary_ops == pytest.approx(speedup_ratio(q), rel=1e-12)

    def test_symbolic_cancellation(self):
        ci, co, w, h, K, wi, hi = sympy.symbols("c_i c_o w h K w_i h_i", positive=True)
        n_p = co * ci * w * h * wi * hi
        ratio = n_p / (K * n_p / 64 + (K + 1) * wi * hi)
        closed = 64 * co * ci * w * h / (K * co * ci * w * h + 64 * (K + 1))
        assert sympy.simplify(ratio - closed) == 0
        assert not (sympy.simplify(ratio).free_symbols & {wi, hi})

    def test_invalid_query(self):
        with pytest.raises(DomainError):
            SpeedupQuery(0, 1, 1, 1)


class TestSweep:
    def test_order_sweep(self):
        rows = sweep("K", range(1, 5), SpeedupQuery(64, 256, 3, 3))
        assert [k for k, _ in rows] == [1, 2, 3, 4]
        assert [round(e, 2) for _, e in rows] == [63.94, 31.98, 21.32, 15.99]

    def test_filter_sweep_square(self):
        rows = sweep("wh", [1, 3], SpeedupQuery(10, 10, 1, 1, K=2))
        assert rows[1][1] == speedup_ratio(SpeedupQuery(10, 10, 3, 3, K=2))

    def test_empty_and_unknown(self):
        with pytest.raises(ConfigError):
            sweep("K", [], SpeedupQuery(1, 1, 1, 1))
        with pytest.raises(ConfigError):
            sweep("w_in", [1], SpeedupQuery(1, 1, 1, 1))

    def test_standard_sweeps_are_monotone(self):
        sweeps = standard_sweeps()
        fs = [e for _, e in sweeps["filter_size"]]
        ch = [e for _, e in sweeps["output_channels"]]
        order = [e for _, e in sweeps["order"]]
        assert fs == sorted(fs) and ch == sorted(ch)
        assert order == sorted(order, reverse=True)
        assert ch[0] < 20 < ch[-1]


class TestStorage:
    def test_single_layer(self):
        r = storage_model([(256, 1152)], [True])
        assert r.float_bytes == 4 * 256 * 1152
        assert r.binary_bytes == 256 * 1152 // 8 + 4 * 256
        assert r.ratio == pytest.approx(1179648 / 37888)
        assert 31 <= r.ratio <= 32

    def test_nothing_binarized(self):
        assert storage_model([(3, 4), (5, 6)], [False, False]).ratio == 1.0

    def test_ratio_approaches_32(self):
        ratios = [storage_model([(1, n)], [True]).ratio for n in (64, 1024, 1 << 20)]
        assert ratios == sorted(ratios) and 32 - ratios[-1] < 0.01

    def test_bit_rounding(self):
        assert storage_model([(1, 9)], [True]).binary_bytes == 2 + 4

    def test_vgg_scale(self):
        r = storage_model([(1, 138_000_000)], [False])
        assert r.float_bytes == 552_000_000

    def test_parse_and_mismatch(self):
        assert parse_layer("256x1152") == (256, 1152)
        assert parse_layer("10") == (1, 10)
        with pytest.raises(ConfigError):
            parse_layer("axb")
        with pytest.raises(ShapeError):
            storage_model([(1, 1)], [True, False])


class TestBench:
    def test_tiny_dims_report(self):
        r = bench_gemm(8, 8, 8, K=1, reps=3)
        assert r.float_seconds > 0 and r.binary_seconds > 0
        assert r.model_speedup == pytest.approx(speedup_ratio(SpeedupQuery(8, 8, 1, 1, K=1)))
        assert set(r.as_row()) >= {"float_s", "binary_s", "measured_speedup", "model_speedup"}

    def test_order_scaling_report_only(self):
        r1 = bench_gemm(512, 512, 2048, K=1, reps=5)
        r2 = bench_gemm(512, 512, 2048, K=2, reps=5)
        # op-count model predicts 2x; only sanity-bounded here
        assert 1.0 < r2.binary_seconds / r1.binary_seconds < 4.0

    def test_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            bench_gemm(0, 1, 1)
