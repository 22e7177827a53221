"""Parser and printer for the line-oriented ``.srn`` model format.

Example::

    # birth-death
    parameter g = 10
    parameter d = 1
    0 -> A @ mass_action(g)
    A -> 0 @ mass_action(d)
    init A = 0

Reaction sides are ``0`` or ``k S + k S ...`` with ``k`` defaulting to 1.
Rates are ``mass_action(<expr>)`` or ``expr(<expr>)`` where ``<expr>`` uses
``+ - * /``, integer powers ``^`` and parentheses over numbers, parameters
and species names. Species are declared by first appearance (in a reaction
or an ``init`` line); uninitialised species start at 0.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .core import MassAction, Model, ModelError, RateExpression, Reaction
from .rates import BinOp, Const, Neg, Param, Pow, RateExpr, SpeciesRef


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|[-+*/^()@=])
    """,
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str  # number | ident | op | end
    text: str
    col: int  # 1-based


def _tokenize(text: str, lineno: int) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", lineno, pos + 1)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), pos + 1))
        pos = m.end()
    tokens.append(_Token("end", "", len(text) + 1))
    return tokens


class _LineParser:
    def __init__(self, tokens, lineno, state):
        self.toks = tokens
        self.i = 0
        self.lineno = lineno
        self.state = state

    @property
    def tok(self) -> _Token:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ParseError(msg, self.lineno, tok.col)

    def advance(self) -> _Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind, text=None) -> _Token:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            got = t.text or "end of line"
            raise self.error(f"expected {want!r}, found {got!r}")
        return self.advance()

    def at(self, kind, text=None) -> bool:
        return self.tok.kind == kind and (text is None or self.tok.text == text)

    # -- reaction sides
    def side(self) -> dict[str, int]:
        if self.at("number", "0") and not self._next_is_ident():
            self.advance()
            return {}
        terms: dict[str, int] = {}
        while True:
            coef = 1
            if self.at("number"):
                t = self.advance()
                if not re.fullmatch(r"\d+", t.text):
                    raise self.error(f"non-integer stoichiometry {t.text!r}", t)
                coef = int(t.text)
                if coef == 0:
                    raise self.error("zero stoichiometry", t)
            if not self.at("ident"):
                got = self.tok.text or "end of line"
                raise self.error(f"expected species name, found {got!r}")
            name_tok = self.advance()
            self.state.declare_species(name_tok.text, self, name_tok)
            terms[name_tok.text] = terms.get(name_tok.text, 0) + coef
            if not self.at("op", "+"):
                return terms
            plus = self.advance()
            if not (self.at("number") or self.at("ident")):
                raise self.error("dangling '+'", plus)

    def _next_is_ident(self) -> bool:
        return self.toks[self.i + 1].kind == "ident"

    # -- arithmetic expressions
    def expr(self) -> RateExpr:
        left = self.term()
        while self.at("op", "+") or self.at("op", "-"):
            op = self.advance().text
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> RateExpr:
        left = self.unary()
        while self.at("op", "*") or self.at("op", "/"):
            op = self.advance().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> RateExpr:
        if self.at("op", "-"):
            self.advance()
            if self.at("number"):
                node: RateExpr = Const(-float(self.advance().text))
                return self._power_suffix(node)
            return Neg(self.unary())
        return self.power()

    def power(self) -> RateExpr:
        return self._power_suffix(self.atom())

    def _power_suffix(self, base: RateExpr) -> RateExpr:
        if not self.at("op", "^"):
            return base
        self.advance()
        sign = 1
        if self.at("op", "-"):
            self.advance()
            sign = -1
        t = self.tok
        if t.kind != "number" or not re.fullmatch(r"\d+", t.text):
            raise self.error("exponent must be an integer literal")
        self.advance()
        return Pow(base, sign * int(t.text))

    def atom(self) -> RateExpr:
        t = self.tok
        if t.kind == "number":
            self.advance()
            return Const(float(t.text))
        if t.kind == "ident":
            self.advance()
            return self.state.resolve(t.text, self, t)
        if self.at("op", "("):
            self.advance()
            e = self.expr()
            self.expect("op", ")")
            return e
        raise self.error(f"unexpected {t.text or 'end of line'!r} in expression")


class _ModelState:
    def __init__(self):
        self.species: list[str] = []
        self.params: dict[str, float] = {}
        self.init: dict[str, int] = {}
        self.reactions: list[tuple[dict, dict, str, RateExpr]] = []

    def declare_species(self, name, parser, tok):
        if name in self.params:
            raise parser.error(f"{name!r} is a parameter, not a species", tok)
        if name in ("parameter", "init", "mass_action", "expr"):
            raise parser.error(f"reserved word {name!r} used as species", tok)
        if name not in self.species:
            self.species.append(name)

    def resolve(self, name, parser, tok) -> RateExpr:
        if name in self.params:
            return Param(list(self.params).index(name), name)
        if name in self.species:
            return SpeciesRef(self.species.index(name), name)
        raise parser.error(f"unknown parameter {name!r}", tok)


def parse_model(source: str, name: str = "") -> Model:
    """Parse ``.srn`` text into a validated :class:`Model`."""
    st = _ModelState()
    for lineno, raw in enumerate(source.splitlines(), start=1):
        text = raw.split("#", 1)[0].rstrip()
        if not text.strip():
            continue
        p = _LineParser(_tokenize(text, lineno), lineno, st)
        first = p.tok
        if first.kind == "ident" and first.text == "parameter":
            p.advance()
            name_tok = p.expect("ident")
            p.expect("op", "=")
            neg = False
            if p.at("op", "-"):
                p.advance()
                neg = True
            num = p.expect("number")
            p.expect("end")
            pname = name_tok.text
            if pname in st.params:
                raise ParseError(f"duplicate parameter {pname!r}", lineno, name_tok.col)
            if pname in st.species:
                raise ParseError(f"{pname!r} already names a species", lineno, name_tok.col)
            st.params[pname] = -float(num.text) if neg else float(num.text)
        elif first.kind == "ident" and first.text == "init":
            p.advance()
            name_tok = p.expect("ident")
            p.expect("op", "=")
            num = p.expect("number")
            if not re.fullmatch(r"\d+", num.text):
                raise ParseError("initial count must be a non-negative integer", lineno, num.col)
            p.expect("end")
            st.declare_species(name_tok.text, p, name_tok)
            if name_tok.text in st.init:
                raise ParseError(f"duplicate init for {name_tok.text!r}", lineno, name_tok.col)
            st.init[name_tok.text] = int(num.text)
        else:
            lhs = p.side()
            if not p.at("op", "->"):
                got = p.tok.text or "end of line"
                raise p.error(f"malformed reaction arrow: expected '->', found {got!r}")
            p.advance()
            rhs = p.side()
            p.expect("op", "@")
            kind_tok = p.expect("ident")
            if kind_tok.text not in ("mass_action", "expr"):
                raise p.error(f"unknown rate kind {kind_tok.text!r}", kind_tok)
            p.expect("op", "(")
            rate = p.expr()
            p.expect("op", ")")
            p.expect("end")
            if not lhs and not rhs:
                raise ParseError("reaction with empty reactant and product sides", lineno, first.col)
            st.reactions.append((lhs, rhs, kind_tok.text, rate, lineno))

    species = tuple(st.species)
    reactions = []
    for lhs, rhs, kind, rate, lineno in st.reactions:
        reac = tuple(lhs.get(s, 0) for s in species)
        prod = tuple(rhs.get(s, 0) for s in species)
        law = MassAction(rate) if kind == "mass_action" else RateExpression(rate)
        try:
            reactions.append(Reaction(reac, prod, law))
        except ModelError as exc:
            raise ParseError(str(exc), lineno, 1) from None
    init = tuple(st.init.get(s, 0) for s in species)
    try:
        return Model(species, tuple(reactions), dict(st.params), init, name=name)
    except ModelError as exc:
        raise ParseError(str(exc), 0, 0) from None


def load_model(path: str | Path) -> Model:
    path = Path(path)
    return parse_model(path.read_text(encoding="utf-8"), name=path.stem)


# ---------------------------------------------------------------------------
# printing


def format_expr(e: RateExpr) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, (Param, SpeciesRef)):
        return e.name
    if isinstance(e, Neg):
        return f"-({format_expr(e.operand)})"
    if isinstance(e, Pow):
        return f"(({format_expr(e.base)}) ^ {e.exponent})"
    if isinstance(e, BinOp):
        return f"({format_expr(e.left)} {e.op} {format_expr(e.right)})"
    raise TypeError(f"malformed expression node {e!r}")


def _format_side(vec, species) -> str:
    terms = [(f"{k} {s}" if k != 1 else s) for k, s in zip(vec, species) if k]
    return " + ".join(terms) if terms else "0"


def format_model(model: Model) -> str:
    """Print a model so that ``parse_model`` reproduces it exactly."""
    lines = []
    if model.name:
        lines.append(f"# {model.name}")
    for pname, value in model.parameters.items():
        lines.append(f"parameter {pname} = {float(value)!r}")
    # init lines first so that species order survives the round trip
    for s, x in zip(model.species, model.initial_state):
        lines.append(f"init {s} = {int(x)}")
    for r in model.reactions:
        if isinstance(r.rate_law, MassAction):
            rate = f"mass_action({format_expr(r.rate_law.constant)})"
        else:
            rate = f"expr({format_expr(r.rate_law.expr)})"
        lines.append(f"{_format_side(r.reactants, model.species)} -> {_format_side(r.products, model.species)} @ {rate}")
    return "\n".join(lines) + "\n"
