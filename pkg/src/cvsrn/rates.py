"""Rate expressions, their stack-program form and polynomial lowering.

Rate laws are small arithmetic trees over constants, parameters and species
counts. For simulation they are flattened into postfix stack programs (see
``compile_expr``) that the JIT kernels interpret; for moment equations they
are expanded into polynomials in the species counts (``to_polynomial``).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Sequence, Union

import numpy as np

from .polynomial import Polynomial


class PolynomialityError(ValueError):
    """The rate law is not a polynomial in the species counts."""


# ---------------------------------------------------------------------------
# expression tree


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Param:
    index: int
    name: str


@dataclass(frozen=True)
class SpeciesRef:
    index: int
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "RateExpr"
    right: "RateExpr"

    def __post_init__(self):
        if self.op not in ("+", "-", "*", "/"):
            raise ValueError(f"unknown operator {self.op!r}")


@dataclass(frozen=True)
class Neg:
    operand: "RateExpr"


@dataclass(frozen=True)
class Pow:
    base: "RateExpr"
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, (int, np.integer)) or isinstance(self.exponent, bool):
            raise TypeError("only integer exponents are supported")


RateExpr = Union[Const, Param, SpeciesRef, BinOp, Neg, Pow]


def mass_action_expr(constant: RateExpr, reactants: Sequence[int], species: Sequence[str]) -> RateExpr:
    """Expand ``c * prod_i binom(x_i, k_i)`` into an explicit expression tree.

    ``binom(x, k)`` becomes ``x (x-1) ... (x-k+1) / k!`` which vanishes for
    integer ``0 <= x < k``.
    """
    expr = constant
    for i, k in enumerate(reactants):
        if k == 0:
            continue
        x = SpeciesRef(i, species[i])
        falling: RateExpr = x
        for r in range(1, k):
            falling = BinOp("*", falling, BinOp("-", x, Const(float(r))))
        expr = BinOp("*", expr, falling)
        if k > 1:
            expr = BinOp("/", expr, Const(float(factorial(k))))
    return expr


def ipow(base: float, k: int) -> float:
    # repeated multiplication, mirrored exactly by the JIT interpreter
    r = 1.0
    for _ in range(abs(k)):
        r *= base
    if k < 0:
        if r == 0.0:
            raise ZeroDivisionError("zero raised to a negative power")
        r = 1.0 / r
    return r


def tree_eval(expr: RateExpr, state: Sequence[float], params: Sequence[float]) -> float:
    """Reference evaluation by walking the tree."""
    if isinstance(expr, Const):
        return float(expr.value)
    if isinstance(expr, SpeciesRef):
        return float(state[expr.index])
    if isinstance(expr, Param):
        return float(params[expr.index])
    if isinstance(expr, Neg):
        return 0.0 - tree_eval(expr.operand, state, params)
    if isinstance(expr, Pow):
        return ipow(tree_eval(expr.base, state, params), int(expr.exponent))
    if isinstance(expr, BinOp):
        a = tree_eval(expr.left, state, params)
        b = tree_eval(expr.right, state, params)
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        if b == 0.0:
            raise ZeroDivisionError("division by zero in rate expression")
        return a / b
    raise TypeError(f"malformed expression node {expr!r}")


def depends_on_species(expr: RateExpr) -> bool:
    if isinstance(expr, SpeciesRef):
        return True
    if isinstance(expr, BinOp):
        return depends_on_species(expr.left) or depends_on_species(expr.right)
    if isinstance(expr, Neg):
        return depends_on_species(expr.operand)
    if isinstance(expr, Pow):
        return depends_on_species(expr.base)
    return False


# ---------------------------------------------------------------------------
# stack programs

PUSH_CONST = 0
PUSH_SPECIES = 1
PUSH_PARAM = 2
ADD = 3
SUB = 4
MUL = 5
DIV = 6
POW_INT = 7

_BINARY = {"+": ADD, "-": SUB, "*": MUL, "/": DIV}
_NAMES = {
    PUSH_CONST: "PushConst",
    PUSH_SPECIES: "PushSpecies",
    PUSH_PARAM: "PushParam",
    ADD: "Add",
    SUB: "Sub",
    MUL: "Mul",
    DIV: "Div",
    POW_INT: "PowInt",
}


@dataclass(frozen=True)
class StackProgram:
    """Postfix instruction list.

    ``ops`` holds opcodes; ``fargs`` the constant operand of ``PushConst``;
    ``iargs`` the index operand of ``PushSpecies``/``PushParam`` or the
    exponent of ``PowInt``.
    """

    ops: tuple[int, ...]
    fargs: tuple[float, ...]
    iargs: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.ops) == len(self.fargs) == len(self.iargs)):
            raise ValueError("instruction arrays differ in length")
        self.max_depth()  # validates balance

    def __len__(self):
        return len(self.ops)

    def max_depth(self) -> int:
        depth = peak = 0
        for op in self.ops:
            if op in (PUSH_CONST, PUSH_SPECIES, PUSH_PARAM):
                depth += 1
            elif op == POW_INT:
                if depth < 1:
                    raise ValueError("stack underflow")
            elif op in (ADD, SUB, MUL, DIV):
                if depth < 2:
                    raise ValueError("stack underflow")
                depth -= 1
            else:
                raise ValueError(f"unknown opcode {op}")
            peak = max(peak, depth)
        if depth != 1:
            raise ValueError(f"program leaves {depth} values on the stack")
        return peak

    def instructions(self) -> list[tuple]:
        out = []
        for op, f, i in zip(self.ops, self.fargs, self.iargs):
            if op == PUSH_CONST:
                out.append((_NAMES[op], f))
            elif op in (PUSH_SPECIES, PUSH_PARAM, POW_INT):
                out.append((_NAMES[op], i))
            else:
                out.append((_NAMES[op],))
        return out

    def __str__(self):
        return "; ".join(" ".join(str(p) for p in ins) for ins in self.instructions())


def compile_expr(expr: RateExpr, n_species: int | None = None, n_params: int | None = None) -> StackProgram:
    """Lower an expression tree to a postfix stack program."""
    ops: list[int] = []
    fargs: list[float] = []
    iargs: list[int] = []

    def emit(op, f=0.0, i=0):
        ops.append(op)
        fargs.append(float(f))
        iargs.append(int(i))

    def walk(e):
        if isinstance(e, Const):
            emit(PUSH_CONST, f=e.value)
        elif isinstance(e, SpeciesRef):
            if e.index < 0 or (n_species is not None and e.index >= n_species):
                raise ValueError(f"unresolved species reference {e.name!r}")
            emit(PUSH_SPECIES, i=e.index)
        elif isinstance(e, Param):
            if e.index < 0 or (n_params is not None and e.index >= n_params):
                raise ValueError(f"unresolved parameter reference {e.name!r}")
            emit(PUSH_PARAM, i=e.index)
        elif isinstance(e, Neg):
            emit(PUSH_CONST, f=0.0)
            walk(e.operand)
            emit(SUB)
        elif isinstance(e, Pow):
            walk(e.base)
            emit(POW_INT, i=e.exponent)
        elif isinstance(e, BinOp):
            walk(e.left)
            walk(e.right)
            emit(_BINARY[e.op])
        else:
            raise ValueError(f"malformed expression node {e!r}")

    walk(expr)
    return StackProgram(tuple(ops), tuple(fargs), tuple(iargs))


def evaluate(program: StackProgram, state: Sequence[float], params: Sequence[float]) -> float:
    """Evaluate a program with the JIT interpreter used by the simulator."""
    from ._kernels import eval_program

    ops = np.asarray(program.ops, dtype=np.int64)
    fargs = np.asarray(program.fargs, dtype=np.float64)
    iargs = np.asarray(program.iargs, dtype=np.int64)
    stack = np.empty(max(program.max_depth(), 1))
    x = np.asarray(state, dtype=np.float64)
    p = np.asarray(params, dtype=np.float64).reshape(-1)
    value, ok = eval_program(ops, fargs, iargs, x, p, stack)
    if not ok:
        raise ZeroDivisionError("division by zero in rate program")
    return value


# ---------------------------------------------------------------------------
# polynomial lowering


def to_polynomial(expr: RateExpr, params: Sequence[float], n_species: int) -> Polynomial:
    """Expand ``expr`` into a polynomial in the species counts.

    Parameters are substituted numerically. Division is only allowed by
    species-independent subexpressions.
    """
    if isinstance(expr, Const):
        return Polynomial.constant(expr.value, n_species)
    if isinstance(expr, Param):
        return Polynomial.constant(float(params[expr.index]), n_species)
    if isinstance(expr, SpeciesRef):
        return Polynomial.variable(expr.index, n_species)
    if isinstance(expr, Neg):
        return -to_polynomial(expr.operand, params, n_species)
    if isinstance(expr, Pow):
        base = to_polynomial(expr.base, params, n_species)
        if expr.exponent < 0:
            if base.degree() > 0:
                raise PolynomialityError("negative power of a species-dependent term")
            return Polynomial.constant(ipow(base.constant_term(), expr.exponent), n_species)
        return base ** expr.exponent
    if isinstance(expr, BinOp):
        a = to_polynomial(expr.left, params, n_species)
        b = to_polynomial(expr.right, params, n_species)
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        if b.degree() > 0:
            raise PolynomialityError("division by a species-dependent term")
        c = b.constant_term()
        if c == 0.0:
            raise ZeroDivisionError("division by zero in rate expression")
        return a * (1.0 / c)
    raise TypeError(f"malformed expression node {expr!r}")
