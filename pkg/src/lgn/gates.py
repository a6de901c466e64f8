"""The 16 two-input Boolean operators and their real-valued relaxations.

Operator ids follow the truth-table encoding

    id = 8*f(0,0) + 4*f(0,1) + 2*f(1,0) + 1*f(1,1)

which gives the familiar ordering:

    | id | name         | 00 | 01 | 10 | 11 | relaxation       |
    |----|--------------|----|----|----|----|------------------|
    |  0 | FALSE        | 0  | 0  | 0  | 0  | 0                |
    |  1 | AND          | 0  | 0  | 0  | 1  | ab               |
    |  2 | A_ANDNOT_B   | 0  | 0  | 1  | 0  | a - ab           |
    |  3 | A            | 0  | 0  | 1  | 1  | a                |
    |  4 | B_ANDNOT_A   | 0  | 1  | 0  | 0  | b - ab           |
    |  5 | B            | 0  | 1  | 0  | 1  | b                |
    |  6 | XOR          | 0  | 1  | 1  | 0  | a + b - 2ab      |
    |  7 | OR           | 0  | 1  | 1  | 1  | a + b - ab       |
    |  8 | NOR          | 1  | 0  | 0  | 0  | 1 - a - b + ab   |
    |  9 | XNOR         | 1  | 0  | 0  | 1  | 1 - a - b + 2ab  |
    | 10 | NOT_B        | 1  | 0  | 1  | 0  | 1 - b            |
    | 11 | A_OR_NOT_B   | 1  | 0  | 1  | 1  | 1 - b + ab       |
    | 12 | NOT_A        | 1  | 1  | 0  | 0  | 1 - a            |
    | 13 | NOT_A_OR_B   | 1  | 1  | 0  | 1  | 1 - a + ab       |
    | 14 | NAND         | 1  | 1  | 1  | 0  | 1 - ab           |
    | 15 | TRUE         | 1  | 1  | 1  | 1  | 1                |

Complement of operator ``i`` is operator ``15 - i``.

Every relaxation is multilinear, ``f(a, b) = c0 + c1*a + c2*b + c3*a*b``,
and equals the expectation of the Boolean operator under independent
Bernoulli(a), Bernoulli(b) inputs.  The coefficient matrix ``COEFFS``
(16 x 4) is what the vectorised layers use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_OPS = 16

NAMES: tuple[str, ...] = (
    "FALSE",
    "AND",
    "A_ANDNOT_B",
    "A",
    "B_ANDNOT_A",
    "B",
    "XOR",
    "OR",
    "NOR",
    "XNOR",
    "NOT_B",
    "A_OR_NOT_B",
    "NOT_A",
    "NOT_A_OR_B",
    "NAND",
    "TRUE",
)

OP_ID: dict[str, int] = {name: i for i, name in enumerate(NAMES)}

FALSE = OP_ID["FALSE"]
AND = OP_ID["AND"]
PASS_A = OP_ID["A"]
PASS_B = OP_ID["B"]
XOR = OP_ID["XOR"]
OR = OP_ID["OR"]
NOT_A = OP_ID["NOT_A"]
NOT_B = OP_ID["NOT_B"]
NAND = OP_ID["NAND"]
TRUE = OP_ID["TRUE"]


class InvalidOperatorError(ValueError):
    pass


def _check(op_id) -> int:
    if isinstance(op_id, (bool, np.bool_)) or not isinstance(op_id, (int, np.integer)):
        raise InvalidOperatorError(f"operator id must be an integer, got {op_id!r}")
    if not 0 <= op_id < N_OPS:
        raise InvalidOperatorError(f"operator id {op_id} out of range 0..15")
    return int(op_id)


def truth_table(op_id: int) -> tuple[int, int, int, int]:
    """Return (f(0,0), f(0,1), f(1,0), f(1,1))."""
    _check(op_id)
    return ((op_id >> 3) & 1, (op_id >> 2) & 1, (op_id >> 1) & 1, op_id & 1)


def op_from_table(f00: int, f01: int, f10: int, f11: int) -> int:
    return (f00 << 3) | (f01 << 2) | (f10 << 1) | f11


def _coeffs(op_id: int) -> tuple[int, int, int, int]:
    # Multilinear interpolation of the four corners.
    f00, f01, f10, f11 = truth_table(op_id)
    return (f00, f10 - f00, f01 - f00, f11 - f10 - f01 + f00)


# (16, 4): columns are the constant, a, b and ab coefficients.
COEFFS = np.array([_coeffs(i) for i in range(N_OPS)], dtype=np.float64)
COEFFS.setflags(write=False)

# (16, 4): truth tables in (00, 01, 10, 11) order.
TABLES = np.array([truth_table(i) for i in range(N_OPS)], dtype=np.uint8)
TABLES.setflags(write=False)


@dataclass(frozen=True)
class Operator:
    id: int
    name: str
    table: tuple[int, int, int, int]
    coeffs: tuple[int, int, int, int]

    def relaxed(self, a: float, b: float) -> float:
        c0, c1, c2, c3 = self.coeffs
        return c0 + c1 * a + c2 * b + c3 * a * b

    def grad(self, a: float, b: float) -> tuple[float, float]:
        _, c1, c2, c3 = self.coeffs
        return (c1 + c3 * b, c2 + c3 * a)

    def boolean(self, a: int, b: int) -> int:
        return self.table[2 * a + b]


OPERATORS: tuple[Operator, ...] = tuple(
    Operator(i, NAMES[i], truth_table(i), _coeffs(i)) for i in range(N_OPS)
)


def lookup(name: str) -> int:
    """Operator id by name (case-insensitive)."""
    try:
        return OP_ID[name.upper()]
    except KeyError:
        raise InvalidOperatorError(f"unknown operator name {name!r}") from None


def eval_relaxed(op_id: int, a: float, b: float) -> float:
    return OPERATORS[_check(op_id)].relaxed(a, b)


def grad_relaxed(op_id: int, a: float, b: float) -> tuple[float, float]:
    return OPERATORS[_check(op_id)].grad(a, b)


def eval_boolean(op_id: int, a: int, b: int) -> int:
    if a not in (0, 1) or b not in (0, 1):
        raise ValueError(f"boolean inputs must be 0 or 1, got ({a!r}, {b!r})")
    return OPERATORS[_check(op_id)].boolean(int(a), int(b))


def restrict(op_id: int, *, a: int | None = None, b: int | None = None) -> int:
    """Operator obtained by fixing one or both inputs to a constant.

    The result is expressed as an operator over the original (a, b) pair,
    so fixing ``a=1`` on AND gives ``B``.
    """
    f = truth_table(op_id)
    out = []
    for x in (0, 1):
        for y in (0, 1):
            xx = x if a is None else a
            yy = y if b is None else b
            out.append(f[2 * xx + yy])
    return op_from_table(*out)


def swap_inputs(op_id: int) -> int:
    """Operator g with g(a, b) == f(b, a)."""
    f00, f01, f10, f11 = truth_table(op_id)
    return op_from_table(f00, f10, f01, f11)


def same_input(op_id: int) -> int:
    """Operator equivalent to f(x, x), as a function of input a."""
    f00, _, _, f11 = truth_table(op_id)
    return op_from_table(f00, f00, f11, f11)


def depends_on(op_id: int) -> tuple[bool, bool]:
    """Whether the operator output depends on input a and on input b."""
    f00, f01, f10, f11 = truth_table(op_id)
    return (f00 != f10 or f01 != f11, f00 != f01 or f10 != f11)
