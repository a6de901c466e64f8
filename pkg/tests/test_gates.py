import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lgn import gates
from oracles import bernoulli_expectation


# Hand-written truth tables, independent of the id encoding.
EXPECTED = {
    "FALSE": lambda a, b: 0,
    "AND": lambda a, b: a & b,
    "A_ANDNOT_B": lambda a, b: a & (1 - b),
    "A": lambda a, b: a,
    "B_ANDNOT_A": lambda a, b: (1 - a) & b,
    "B": lambda a, b: b,
    "XOR": lambda a, b: a ^ b,
    "OR": lambda a, b: a | b,
    "NOR": lambda a, b: 1 - (a | b),
    "XNOR": lambda a, b: 1 - (a ^ b),
    "NOT_B": lambda a, b: 1 - b,
    "A_OR_NOT_B": lambda a, b: a | (1 - b),
    "NOT_A": lambda a, b: 1 - a,
    "NOT_A_OR_B": lambda a, b: (1 - a) | b,
    "NAND": lambda a, b: 1 - (a & b),
    "TRUE": lambda a, b: 1,
}


class TestTable:
    def test_sixteen_distinct(self):
        assert len(gates.NAMES) == 16
        tables = {gates.truth_table(i) for i in range(16)}
        assert len(tables) == 16

    @pytest.mark.parametrize("name", gates.NAMES)
    def test_truth_tables_match_names(self, name):
        op = gates.lookup(name)
        for a, b in itertools.product((0, 1), repeat=2):
            assert gates.eval_boolean(op, a, b) == EXPECTED[name](a, b)

    def test_all_64_corners(self):
        for op, a, b in itertools.product(range(16), (0, 1), (0, 1)):
            assert gates.eval_relaxed(op, float(a), float(b)) == gates.eval_boolean(op, a, b)

    def test_complement(self):
        for op in range(16):
            for a, b in itertools.product((0, 1), repeat=2):
                assert gates.eval_boolean(15 - op, a, b) == 1 - gates.eval_boolean(op, a, b)

    def test_named_constants(self):
        assert gates.PASS_A == 3
        assert gates.XOR == 6
        assert gates.op_from_table(*gates.truth_table(gates.NAND)) == gates.NAND

    def test_invalid(self):
        with pytest.raises(gates.InvalidOperatorError):
            gates.eval_relaxed(16, 0.0, 0.0)
        with pytest.raises(gates.InvalidOperatorError):
            gates.lookup("MAYBE")
        with pytest.raises(ValueError):
            gates.eval_boolean(gates.AND, 2, 0)

    def test_lookup_case_insensitive(self):
        assert gates.lookup("xor") == gates.XOR


class TestRelaxation:
    def test_bernoulli_grid(self):
        grid = np.linspace(0.0, 1.0, 11)
        for op in range(16):
            for a in grid:
                for b in grid:
                    assert gates.eval_relaxed(op, a, b) == pytest.approx(bernoulli_expectation(op, a, b), abs=1e-12)

    def test_coeffs_vectorised(self):
        rng = np.random.default_rng(0)
        a, b = rng.random(50), rng.random(50)
        basis = np.stack([np.ones_like(a), a, b, a * b])
        values = gates.COEFFS @ basis
        for op in range(16):
            expected = [bernoulli_expectation(op, x, y) for x, y in zip(a, b)]
            np.testing.assert_allclose(values[op], expected, atol=1e-12)

    def test_examples(self):
        assert gates.eval_relaxed(gates.AND, 0.5, 0.5) == pytest.approx(0.25)
        assert gates.eval_relaxed(gates.XOR, 0.3, 0.8) == pytest.approx(0.62)
        assert gates.eval_relaxed(gates.OR, 0.5, 0.5) == pytest.approx(0.75)

    def test_mean_over_ops_is_half(self):
        for a, b in itertools.product((0, 1), repeat=2):
            assert np.mean([gates.eval_relaxed(op, a, b) for op in range(16)]) == 0.5

    @given(st.integers(0, 15), st.floats(0, 1), st.floats(0, 1))
    def test_range(self, op, a, b):
        v = gates.eval_relaxed(op, a, b)
        assert -1e-12 <= v <= 1 + 1e-12

    @given(st.integers(0, 15), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_gradient_finite_differences(self, op, a, b):
        h = 1e-6
        da = (gates.eval_relaxed(op, a + h, b) - gates.eval_relaxed(op, a - h, b)) / (2 * h)
        db = (gates.eval_relaxed(op, a, b + h) - gates.eval_relaxed(op, a, b - h)) / (2 * h)
        ga, gb = gates.grad_relaxed(op, a, b)
        assert ga == pytest.approx(da, abs=1e-6)
        assert gb == pytest.approx(db, abs=1e-6)


class TestAlgebra:
    def test_restrict(self):
        assert gates.restrict(gates.AND, a=1) == gates.PASS_B
        assert gates.restrict(gates.AND, a=0) == gates.FALSE
        assert gates.restrict(gates.XOR, b=1) == gates.NOT_A
        assert gates.restrict(gates.OR, a=0, b=0) == gates.FALSE

    def test_restrict_brute_force(self):
        for op, ca in itertools.product(range(16), (0, 1)):
            r = gates.restrict(op, a=ca)
            for a, b in itertools.product((0, 1), repeat=2):
                assert gates.eval_boolean(r, a, b) == gates.eval_boolean(op, ca, b)

    def test_swap_and_same(self):
        for op in range(16):
            s = gates.swap_inputs(op)
            d = gates.same_input(op)
            for a, b in itertools.product((0, 1), repeat=2):
                assert gates.eval_boolean(s, a, b) == gates.eval_boolean(op, b, a)
                assert gates.eval_boolean(d, a, b) == gates.eval_boolean(op, a, a)

    def test_depends_on(self):
        assert gates.depends_on(gates.PASS_A) == (True, False)
        assert gates.depends_on(gates.NOT_B) == (False, True)
        assert gates.depends_on(gates.TRUE) == (False, False)
        assert gates.depends_on(gates.XOR) == (True, True)
