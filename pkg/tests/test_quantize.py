import struct

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from horq.bitplane import BinaryPlane, pack, unpack
from horq.errors import DomainError, FormatError, ShapeError
from horq.quantize import (
    HORQCode,
    code_from_bytes,
    code_to_bytes,
    load_code,
    quantize_first_order,
    quantize_horq,
    quantize_input,
    quantize_weights,
    reconstruct,
    residual,
    residual_norms,
    save_code,
)

finite_vectors = arrays(
    np.float64, st.integers(1, 64),
    elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False),
)


def signs(plane):
    return unpack(plane).tolist()


class TestFirstOrder:
    def test_zero_vector(self):
        beta, plane = quantize_first_order([0, 0, 0, 0])
        assert beta == 0.0
        assert signs(plane) == [1, 1, 1, 1]

    def test_worked_example(self):
        beta, plane = quantize_first_order([1, -2, 3, -2])
        assert beta == 2.0
        assert signs(plane) == [1, -1, 1, -1]

    def test_constant_vector_exact(self):
        beta, plane = quantize_first_order([0.75] * 3)
        assert beta == 0.75
        assert not residual([0.75] * 3, beta, plane).any()

    def test_empty(self):
        with pytest.raises(ShapeError):
            quantize_first_order([])

    def test_non_finite(self):
        with pytest.raises(DomainError):
            quantize_first_order([1.0, np.nan])

    def test_beats_every_sign_pattern(self, rng):
        # brute force over all planes and the closed-form best scale for each
        for _ in range(50):
            x = rng.standard_normal(6)
            beta, plane = quantize_first_order(x)
            best = np.sum((x - beta * unpack(plane)) ** 2)
            for bits in range(2 ** 6):
                H = np.array([1.0 if bits >> i & 1 else -1.0 for i in range(6)])
                b = max(0.0, x @ H / 6)
                assert best <= np.sum((x - b * H) ** 2) + 1e-9


class TestResidual:
    def test_worked_example(self):
        r = residual([1, -2, 3, -2], 2.0, pack([1, -1, 1, -1]))
        np.testing.assert_array_equal(r, [-1, 0, 1, 0])

    def test_zero_scale(self, rng):
        x = rng.standard_normal(9)
        np.testing.assert_array_equal(residual(x, 0.0, BinaryPlane.ones(9)), x)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            residual([1.0, 2.0], 1.0, BinaryPlane.ones(3))


class TestHorq:
    def test_k1_matches_first_order(self, rng):
        x = rng.standard_normal(33)
        code = quantize_horq(x, 1)
        assert code.terms[0] == quantize_first_order(x)

    def test_worked_order_two(self):
        x = [1, -2, 3, -2]
        code = quantize_horq(x, 2)
        assert code.betas == [2.0, 0.5]
        assert signs(code.planes[0]) == [1, -1, 1, -1]
        assert signs(code.planes[1]) == [-1, 1, 1, 1]
        rec = reconstruct(code)
        np.testing.assert_array_equal(rec, [1.5, -1.5, 2.5, -1.5])
        sq = residual_norms(x, 2)
        assert sq[1] == 2.0 and sq[2] == 1.0

    @pytest.mark.parametrize("K", [1, 2, 5])
    def test_exact_at_order_one(self, K):
        code = quantize_horq([0.5, -0.5], K)
        assert code.order == K
        assert code.betas == [0.5] + [0.0] * (K - 1)
        assert all(signs(p) == [1, 1] for p in code.planes[1:])

    def test_bad_order(self):
        with pytest.raises(DomainError):
            quantize_horq([1.0], 0)

    def test_error_decreases_with_order(self, rng):
        for _ in range(200):
            x = rng.standard_normal(rng.integers(1, 100))
            errs = [np.sum((x - reconstruct(quantize_horq(x, K))) ** 2) for K in range(1, 5)]
            assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))

    @settings(max_examples=300)
    @given(finite_vectors, st.integers(1, 6))
    def test_pythagorean_chain(self, x, K):
        code = quantize_horq(x, K)
        sq = residual_norms(x, K)
        for k, beta in enumerate(code.betas, start=1):
            expected = sq[k - 1] - x.size * beta ** 2
            # a subnormal float32 scale has lost its relative precision
            if beta >= np.finfo(np.float32).tiny:
                assert abs(sq[k] - expected) <= 1e-6 * max(sq[k - 1], 1e-300)
            assert sq[k] <= sq[k - 1]
            if beta > 0:
                assert sq[k] < sq[k - 1]

    @settings(max_examples=200)
    @given(finite_vectors, st.integers(-8, 8), st.integers(1, 4))
    def test_power_of_two_equivariance(self, x, e, K):
        t = 2.0 ** e
        a, b = quantize_horq(x, K), quantize_horq(t * x, K)
        # scaling commutes with float32 rounding only for normal numbers
        tiny = np.finfo(np.float32).tiny
        assume(np.all((x == 0) | (np.abs(x) >= tiny)))
        assume(all(beta == 0 or beta >= tiny for beta in a.betas + b.betas))
        assert a.planes == b.planes
        np.testing.assert_array_equal(np.float32(t) * np.array(a.betas, np.float32),
                                      np.array(b.betas, np.float32))

    def test_general_scale_equivariance(self, rng):
        x = rng.standard_normal(50)
        a, b = quantize_horq(x, 1), quantize_horq(3.7 * x, 1)
        assert a.planes == b.planes
        assert b.betas[0] == pytest.approx(3.7 * a.betas[0], rel=1e-6)

    def test_scale_is_grid_optimal(self, rng):
        for _ in range(100):
            x = rng.standard_normal(20)
            beta, plane = quantize_first_order(x)
            H = unpack(plane)
            best = np.sum((x - beta * H) ** 2)
            grid = np.linspace(0, 2 * np.abs(x).max(), 201)
            assert all(best <= np.sum((x - g * H) ** 2) + 1e-9 for g in grid)


class TestCodeValidation:
    def test_negative_beta(self):
        with pytest.raises(DomainError):
            HORQCode(2, ((-1.0, BinaryPlane.ones(2)),))

    def test_plane_length(self):
        with pytest.raises(ShapeError):
            HORQCode(2, ((1.0, BinaryPlane.ones(3)),))

    def test_empty_terms(self):
        with pytest.raises(ShapeError):
            HORQCode(2, ())


class TestQuantizedMatrix:
    def test_weight_rows(self):
        Wq = quantize_weights(np.array([[1.0, 2, 3, 4], [0, 0, 0, 0], [-1, 1, -1, 1]]))
        assert Wq.orientation == "row" and Wq.order == 1 and Wq.n == 4
        assert Wq.scales[:, 0].tolist() == [2.5, 0.0, 1.0]
        assert signs(Wq.codes[0].planes[0]) == [1, 1, 1, 1]

    def test_row_permutation(self, rng):
        W = rng.standard_normal((5, 17))
        perm = rng.permutation(5)
        a, b = quantize_weights(W), quantize_weights(W[perm])
        np.testing.assert_array_equal(a.scales[perm], b.scales)
        np.testing.assert_array_equal(a.words[perm], b.words)

    def test_single_column_is_horq(self, rng):
        x = rng.standard_normal(40)
        Xq = quantize_input(x[:, None], 3)
        assert Xq.codes[0] == quantize_horq(x, 3)

    def test_worked_column(self):
        X = np.array([[1.0, 5.0], [-2, 5], [3, 5], [-2, 5]])
        code = quantize_input(X, 2).codes[0]
        assert code == quantize_horq([1, -2, 3, -2], 2)

    def test_column_scaling(self, rng):
        X = rng.standard_normal((12, 4))
        Xs = X.copy()
        Xs[:, 2] *= 8.0
        a, b = quantize_input(X, 3), quantize_input(Xs, 3)
        np.testing.assert_array_equal(a.words, b.words)
        np.testing.assert_array_equal(b.scales[2], 8.0 * a.scales[2])
        np.testing.assert_array_equal(b.scales[[0, 1, 3]], a.scales[[0, 1, 3]])

    def test_reconstruct_orientation(self, rng):
        X = rng.standard_normal((9, 4))
        Xq = quantize_input(X, 2)
        R = Xq.reconstruct()
        assert R.shape == (9, 4)
        np.testing.assert_allclose(R[:, 1], reconstruct(Xq.codes[1]))

    def test_errors(self):
        with pytest.raises(ShapeError):
            quantize_weights(np.zeros((0, 3)))
        with pytest.raises(DomainError):
            quantize_input(np.ones((3, 3)), 0)


class TestCodeFile:
    def test_round_trip(self, rng, tmp_path):
        code = quantize_horq(rng.standard_normal(100), 3)
        path = tmp_path / "c.hqc"
        save_code(path, code)
        raw = path.read_bytes()
        assert raw[:8] == b"HORQCODE"
        assert struct.unpack_from("<II", raw, 8) == (100, 3)
        assert len(raw) == 16 + 3 * (4 + 2 * 8)
        assert load_code(path) == code

    def test_bad_magic(self):
        with pytest.raises(FormatError):
            code_from_bytes(b"XXXXXXXX" + bytes(8))

    def test_truncated(self):
        raw = code_to_bytes(quantize_horq([1.0, -1.0, 2.0], 2))
        with pytest.raises(FormatError):
            code_from_bytes(raw[:-3])

    def test_dirty_tail(self):
        raw = bytearray(code_to_bytes(quantize_horq([1.0, -1.0, 2.0], 1)))
        raw[16 + 4] |= 0b1000
        with pytest.raises(FormatError):
            code_from_bytes(bytes(raw))
