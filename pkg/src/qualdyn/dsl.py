"""Textual ODE definitions with exact forward-mode Jacobians.

Model text declares states and parameters, then one derivative expression
per state::

    # damped oscillator
    states: x, v
    params: k, c
    dx/dt = v
    dv/dt = -k*x - c*v

Precedence is ``^`` (right-associative), unary minus, ``*`` ``/``, then
``+`` ``-``; calls cover exp, log, sin, cos, tanh, sqrt, abs.  ``t`` is
reserved for time.  Jacobian columns come from one dual-number pass per
state, exact to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DivergenceError, ParseError
from .models import ModelSystem

__all__ = [
    "Expr",
    "Const",
    "StateRef",
    "ParamRef",
    "TimeRef",
    "Neg",
    "BinOp",
    "Call",
    "ModelDef",
    "Dual",
    "parse_model",
    "eval_expr",
    "jacobian_dual",
    "format_expr",
    "format_model",
    "to_model_system",
]

FUNCTIONS = ("exp", "log", "sin", "cos", "tanh", "sqrt", "abs")
TIME_NAME = "t"


# --------------------------------------------------------------------------
# Expression tree
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Expr:
    span: tuple[int, int] = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Const(Expr):
    value: float = 0.0


@dataclass(frozen=True)
class StateRef(Expr):
    index: int = 0
    name: str = ""


@dataclass(frozen=True)
class ParamRef(Expr):
    index: int = 0
    name: str = ""


@dataclass(frozen=True)
class TimeRef(Expr):
    pass


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr = None


@dataclass(frozen=True)
class BinOp(Expr):
    op: str = "+"
    left: Expr = None
    right: Expr = None


@dataclass(frozen=True)
class Call(Expr):
    fn: str = "exp"
    arg: Expr = None


@dataclass(frozen=True)
class ModelDef:
    state_names: tuple[str, ...]
    param_names: tuple[str, ...]
    derivative_exprs: tuple[Expr, ...]

    @property
    def dim(self) -> int:
        return len(self.state_names)


# --------------------------------------------------------------------------
# Dual numbers (one directional derivative per pass)
# --------------------------------------------------------------------------

class Dual:
    """value + derivative pair obeying the chain rule exactly."""

    __slots__ = ("value", "deriv")

    def __init__(self, value: float, deriv: float = 0.0):
        self.value = float(value)
        self.deriv = float(deriv)

    def __repr__(self):
        return f"Dual({self.value}, {self.deriv})"

    @staticmethod
    def _lift(other):
        return other if isinstance(other, Dual) else Dual(other)

    def __add__(self, other):
        other = self._lift(other)
        return Dual(self.value + other.value, self.deriv + other.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        return Dual(self.value - other.value, self.deriv - other.deriv)

    def __rsub__(self, other):
        other = self._lift(other)
        return Dual(other.value - self.value, other.deriv - self.deriv)

    def __mul__(self, other):
        other = self._lift(other)
        return Dual(self.value * other.value,
                    self.value * other.deriv + self.deriv * other.value)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        if other.value == 0.0:
            raise DivergenceError("division by zero")
        return Dual(self.value / other.value,
                    (self.deriv * other.value - self.value * other.deriv)
                    / (other.value * other.value))

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __neg__(self):
        return Dual(-self.value, -self.deriv)

    def __pow__(self, other):
        other = self._lift(other)
        b, e = self.value, other.value
        if b < 0.0 and (other.deriv != 0.0 or e != int(e)):
            raise DivergenceError(
                f"negative base {b} with non-integer exponent")
        if b == 0.0 and e < 0.0:
            raise DivergenceError("zero base with negative exponent")
        try:
            value = b ** e
        except (OverflowError, ZeroDivisionError) as exc:
            raise DivergenceError(str(exc)) from exc
        if other.deriv == 0.0:
            # constant exponent: e * b^(e-1) * b'
            if self.deriv == 0.0 or e == 0.0:
                d = 0.0
            elif b == 0.0:
                if e > 1.0:
                    d = 0.0
                elif e == 1.0:
                    d = self.deriv
                else:
                    raise DivergenceError(
                        f"derivative of 0^{e} is unbounded")
            else:
                d = e * b ** (e - 1.0) * self.deriv
            return Dual(value, d)
        if b <= 0.0:
            raise DivergenceError(
                "variable exponent requires a positive base")
        return Dual(value, value * (other.deriv * math.log(b)
                                    + e * self.deriv / b))

    def __rpow__(self, other):
        return self._lift(other) ** self


def _dual_exp(x: Dual) -> Dual:
    try:
        v = math.exp(x.value)
    except OverflowError as exc:
        raise DivergenceError("exp overflow") from exc
    return Dual(v, v * x.deriv)


def _dual_log(x: Dual) -> Dual:
    if x.value <= 0.0:
        raise DivergenceError(f"log of non-positive value {x.value}")
    return Dual(math.log(x.value), x.deriv / x.value)


def _dual_sqrt(x: Dual) -> Dual:
    if x.value < 0.0:
        raise DivergenceError(f"sqrt of negative value {x.value}")
    v = math.sqrt(x.value)
    if x.deriv == 0.0:
        return Dual(v, 0.0)
    if x.value == 0.0:
        raise DivergenceError("derivative of sqrt at zero is unbounded")
    return Dual(v, x.deriv / (2.0 * v))


def _dual_tanh(x: Dual) -> Dual:
    v = math.tanh(x.value)
    return Dual(v, (1.0 - v * v) * x.deriv)


def _dual_abs(x: Dual) -> Dual:
    s = 1.0 if x.value > 0.0 else (-1.0 if x.value < 0.0 else 0.0)
    return Dual(abs(x.value), s * x.deriv)


_DUAL_FUNCS = {
    "exp": _dual_exp,
    "log": _dual_log,
    "sin": lambda x: Dual(math.sin(x.value), math.cos(x.value) * x.deriv),
    "cos": lambda x: Dual(math.cos(x.value), -math.sin(x.value) * x.deriv),
    "tanh": _dual_tanh,
    "sqrt": _dual_sqrt,
    "abs": _dual_abs,
}


def _real_call(fn: str, v: float) -> float:
    try:
        if fn == "exp":
            return math.exp(v)
        if fn == "log":
            if v <= 0.0:
                raise DivergenceError(f"log of non-positive value {v}")
            return math.log(v)
        if fn == "sin":
            return math.sin(v)
        if fn == "cos":
            return math.cos(v)
        if fn == "tanh":
            return math.tanh(v)
        if fn == "sqrt":
            if v < 0.0:
                raise DivergenceError(f"sqrt of negative value {v}")
            return math.sqrt(v)
        return abs(v)
    except OverflowError as exc:
        raise DivergenceError(f"{fn} overflow") from exc


# --------------------------------------------------------------------------
# Tokenizer / parser
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _Tok:
    kind: str  # num ident op lparen rparen comma end
    text: str
    line: int
    col: int


def _tokenize(line: str, line_no: int) -> list[_Tok]:
    toks = []
    i = 0
    n = len(line)
    while i < n:
        ch = line[i]
        if ch in " \t":
            i += 1
            continue
        col = i + 1
        if ch.isdigit() or (ch == "." and i + 1 < n and line[i + 1].isdigit()):
            j = i
            seen_e = False
            while j < n and (line[j].isdigit() or line[j] == "."
                             or line[j] in "eE"
                             or (line[j] in "+-" and j > i
                                 and line[j - 1] in "eE")):
                if line[j] in "eE":
                    if seen_e:
                        break
                    seen_e = True
                j += 1
            text = line[i:j]
            try:
                float(text)
            except ValueError:
                raise ParseError(f"malformed number {text!r}", line_no, col)
            toks.append(_Tok("num", text, line_no, col))
            i = j
            continue
        if ch.isalpha():
            j = i
            while j < n and (line[j].isalnum() or line[j] == "_"):
                j += 1
            toks.append(_Tok("ident", line[i:j], line_no, col))
            i = j
            continue
        if ch in "+-*/^":
            toks.append(_Tok("op", ch, line_no, col))
        elif ch == "(":
            toks.append(_Tok("lparen", ch, line_no, col))
        elif ch == ")":
            toks.append(_Tok("rparen", ch, line_no, col))
        elif ch == ",":
            toks.append(_Tok("comma", ch, line_no, col))
        else:
            raise ParseError(f"unexpected character {ch!r}", line_no, col)
        i += 1
    toks.append(_Tok("end", "", line_no, n + 1))
    return toks


class _ExprParser:
    def __init__(self, toks: list[_Tok], states: dict[str, int],
                 params: dict[str, int]):
        self.toks = toks
        self.pos = 0
        self.states = states
        self.params = params

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def take(self) -> _Tok:
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def parse(self) -> Expr:
        expr = self.sum_expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected {tok.text!r}", tok.line, tok.col)
        return expr

    def sum_expr(self) -> Expr:
        left = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take()
            right = self.term()
            left = BinOp((op.line, op.col), op.text, left, right)
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take()
            right = self.unary()
            left = BinOp((op.line, op.col), op.text, left, right)
        return left

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.take()
            return Neg((tok.line, tok.col), self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.take()
            # right-associative; exponent may carry its own unary minus
            exponent = self.unary()
            return BinOp((tok.line, tok.col), "^", base, exponent)
        return base

    def atom(self) -> Expr:
        tok = self.take()
        span = (tok.line, tok.col)
        if tok.kind == "num":
            return Const(span, float(tok.text))
        if tok.kind == "lparen":
            inner = self.sum_expr()
            closing = self.peek()
            if closing.kind != "rparen":
                raise ParseError("unclosed parenthesis", tok.line, tok.col)
            self.take()
            return inner
        if tok.kind == "ident":
            name = tok.text
            if self.peek().kind == "lparen":
                if name not in FUNCTIONS:
                    raise ParseError(f"unknown function {name!r}",
                                     tok.line, tok.col)
                lp = self.take()
                arg = self.sum_expr()
                closing = self.peek()
                if closing.kind != "rparen":
                    raise ParseError("unclosed parenthesis", lp.line, lp.col)
                self.take()
                return Call(span, name, arg)
            if name == TIME_NAME:
                return TimeRef(span)
            if name in self.states:
                return StateRef(span, self.states[name], name)
            if name in self.params:
                return ParamRef(span, self.params[name], name)
            raise ParseError(f"unknown identifier {name!r}", tok.line, tok.col)
        if tok.kind == "end":
            raise ParseError("unexpected end of expression", tok.line, tok.col)
        raise ParseError(f"unexpected {tok.text!r}", tok.line, tok.col)


def _valid_ident(name: str) -> bool:
    return (name and name[0].isalpha()
            and all(c.isalnum() or c == "_" for c in name))


def _parse_name_list(body: str, line_no: int, col0: int,
                     label: str) -> list[str]:
    names = []
    for raw in body.split(","):
        name = raw.strip()
        col = col0 + body.index(raw) + (len(raw) - len(raw.lstrip()))
        if not _valid_ident(name):
            raise ParseError(f"invalid {label} name {name!r}", line_no, col + 1)
        names.append(name)
    return names


def parse_model(text: str) -> ModelDef:
    """Parse model text into a ModelDef, or raise ParseError with the source
    location of the first problem."""
    states: list[str] = []
    params: list[str] = []
    seen_states = False
    derivs: dict[str, Expr] = {}
    deriv_lines: dict[str, int] = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        stripped = line.strip()
        indent = len(line) - len(line.lstrip())
        if stripped.startswith("states:"):
            if seen_states:
                raise ParseError("duplicate states declaration", line_no,
                                 indent + 1)
            body = stripped[len("states:"):]
            states = _parse_name_list(body, line_no,
                                      indent + len("states:"), "state")
            seen_states = True
            continue
        if stripped.startswith("params:"):
            if params:
                raise ParseError("duplicate params declaration", line_no,
                                 indent + 1)
            body = stripped[len("params:"):]
            params = _parse_name_list(body, line_no,
                                      indent + len("params:"), "parameter")
            continue
        if "=" in stripped:
            lhs, rhs = line.split("=", 1)
            lhs_s = lhs.strip()
            if not (lhs_s.startswith("d") and lhs_s.endswith("/dt")):
                raise ParseError(
                    f"expected d<state>/dt on the left, got {lhs_s!r}",
                    line_no, indent + 1)
            name = lhs_s[1:-len("/dt")]
            if not seen_states:
                raise ParseError("states must be declared before derivatives",
                                 line_no, indent + 1)
            if name not in states:
                raise ParseError(f"derivative for undeclared state {name!r}",
                                 line_no, indent + 2)
            if name in derivs:
                raise ParseError(
                    f"duplicate derivative for state {name!r} "
                    f"(first defined on line {deriv_lines[name]})",
                    line_no, indent + 1)
            state_idx = {s: i for i, s in enumerate(states)}
            param_idx = {p: i for i, p in enumerate(params)}
            toks = _tokenize(rhs, line_no)
            # shift token columns past the left-hand side
            offset = len(lhs) + 1
            toks = [_Tok(tk.kind, tk.text, tk.line, tk.col + offset)
                    for tk in toks]
            derivs[name] = _ExprParser(toks, state_idx, param_idx).parse()
            deriv_lines[name] = line_no
            continue
        raise ParseError(f"unrecognized line {stripped!r}", line_no, indent + 1)

    if not seen_states:
        raise ParseError("missing states declaration", 1, 1)
    all_names = states + params
    dupes = {n for n in all_names
             if all_names.count(n) > 1 or n == TIME_NAME}
    if dupes:
        raise ParseError(
            f"duplicate or reserved identifiers: {', '.join(sorted(dupes))}",
            1, 1)
    missing = [s for s in states if s not in derivs]
    if missing:
        raise ParseError(
            f"missing derivative for state(s): {', '.join(missing)}",
            1, 1)
    return ModelDef(tuple(states), tuple(params),
                    tuple(derivs[s] for s in states))


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

def _env_values(env, names: tuple[str, ...]):
    if env is None:
        return ()
    if isinstance(env, Mapping):
        return tuple(env[n] for n in names)
    return tuple(env)


def _eval(expr: Expr, state_vals, param_vals, t):
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, StateRef):
        return state_vals[expr.index]
    if isinstance(expr, ParamRef):
        return param_vals[expr.index]
    if isinstance(expr, TimeRef):
        return t
    if isinstance(expr, Neg):
        return -_eval(expr.arg, state_vals, param_vals, t)
    if isinstance(expr, BinOp):
        a = _eval(expr.left, state_vals, param_vals, t)
        b = _eval(expr.right, state_vals, param_vals, t)
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        if expr.op == "/":
            if isinstance(a, Dual) or isinstance(b, Dual):
                return Dual._lift(a) / Dual._lift(b)
            if b == 0.0:
                raise DivergenceError("division by zero")
            return a / b
        # power
        if isinstance(a, Dual) or isinstance(b, Dual):
            return Dual._lift(a) ** Dual._lift(b)
        if a < 0.0 and b != int(b):
            raise DivergenceError(
                f"negative base {a} with non-integer exponent {b}")
        if a == 0.0 and b < 0.0:
            raise DivergenceError("zero base with negative exponent")
        try:
            return a ** b
        except (OverflowError, ZeroDivisionError) as exc:
            raise DivergenceError(str(exc)) from exc
    if isinstance(expr, Call):
        v = _eval(expr.arg, state_vals, param_vals, t)
        if isinstance(v, Dual):
            return _DUAL_FUNCS[expr.fn](v)
        return _real_call(expr.fn, v)
    raise TypeError(f"unknown expression node {type(expr).__name__}")


def _collect_refs(expr: Expr, states: dict[int, str],
                  params: dict[int, str]) -> None:
    if isinstance(expr, StateRef):
        states[expr.index] = expr.name
    elif isinstance(expr, ParamRef):
        params[expr.index] = expr.name
    elif isinstance(expr, Neg):
        _collect_refs(expr.arg, states, params)
    elif isinstance(expr, BinOp):
        _collect_refs(expr.left, states, params)
        _collect_refs(expr.right, states, params)
    elif isinstance(expr, Call):
        _collect_refs(expr.arg, states, params)


def _positional(env, refs: dict[int, str], label: str):
    if isinstance(env, Mapping):
        size = max(refs, default=-1) + 1
        vals = [0.0] * size
        for idx, name in refs.items():
            if name not in env:
                raise KeyError(f"{label} env missing {name!r}")
            vals[idx] = env[name]
        return tuple(vals)
    return tuple(env) if env is not None else ()


def eval_expr(expr: Expr, state_env, param_env, t: float = 0.0) -> float:
    """Numerically evaluate an expression; envs may be mappings keyed by the
    names baked into the refs, or positional sequences."""
    state_refs: dict[int, str] = {}
    param_refs: dict[int, str] = {}
    _collect_refs(expr, state_refs, param_refs)
    sv = _positional(state_env, state_refs, "state")
    pv = _positional(param_env, param_refs, "parameter")
    return _eval(expr, sv, pv, t)


def jacobian_dual(model_def: ModelDef, y, theta) -> np.ndarray:
    """State Jacobian via one dual pass per state column; exact to machine
    precision (no truncation error)."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n = model_def.dim
    params = tuple(float(v) for v in theta)
    jac = np.empty((n, n))
    for j in range(n):
        seeded = tuple(Dual(float(y[i]), 1.0 if i == j else 0.0)
                       for i in range(n))
        for i, expr in enumerate(model_def.derivative_exprs):
            out = _eval(expr, seeded, params, 0.0)
            jac[i, j] = out.deriv if isinstance(out, Dual) else 0.0
    return jac


# --------------------------------------------------------------------------
# Formatting (round-trip support)
# --------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def format_expr(expr: Expr) -> str:
    def fmt(e: Expr, parent_prec: int, rhs_of: str | None = None) -> str:
        if isinstance(e, Const):
            return repr(e.value)
        if isinstance(e, (StateRef, ParamRef)):
            return e.name
        if isinstance(e, TimeRef):
            return TIME_NAME
        if isinstance(e, Neg):
            inner = fmt(e.arg, _PREC["neg"])
            text = f"-{inner}"
            return f"({text})" if parent_prec > _PREC["neg"] else text
        if isinstance(e, Call):
            return f"{e.fn}({fmt(e.arg, 0)})"
        prec = _PREC[e.op]
        if e.op == "^":
            left = fmt(e.left, prec + 1)
            right = fmt(e.right, prec)  # right-assoc
        else:
            left = fmt(e.left, prec)
            right = fmt(e.right, prec + 1)
        text = f"{left} {e.op} {right}"
        return f"({text})" if parent_prec > prec else text

    return fmt(expr, 0)


def format_model(model_def: ModelDef) -> str:
    lines = ["states: " + ", ".join(model_def.state_names)]
    if model_def.param_names:
        lines.append("params: " + ", ".join(model_def.param_names))
    for name, expr in zip(model_def.state_names, model_def.derivative_exprs):
        lines.append(f"d{name}/dt = {format_expr(expr)}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Bridge to the model abstraction
# --------------------------------------------------------------------------

def to_model_system(model_def: ModelDef, name: str = "user_model", *,
                    default_initial_state=None, default_params=None,
                    default_dt: float = 0.01) -> ModelSystem:
    """Wrap a parsed definition as a ModelSystem with a dual-number
    Jacobian, ready for the estimation pipeline."""
    n = model_def.dim

    def rhs(y, p, t):
        sv = tuple(float(v) for v in y)
        pv = tuple(float(v) for v in p)
        return np.array([_eval(e, sv, pv, t)
                         for e in model_def.derivative_exprs])

    def jac(y, p):
        return jacobian_dual(model_def, y, p)

    y0 = (np.zeros(n) if default_initial_state is None
          else np.asarray(default_initial_state, dtype=float))
    p0 = (np.zeros(len(model_def.param_names)) if default_params is None
          else np.asarray(default_params, dtype=float))
    return ModelSystem(
        name=name,
        dim=n,
        state_names=model_def.state_names,
        param_names=model_def.param_names,
        rhs=rhs,
        jacobian=jac,
        default_initial_state=y0,
        default_params=p0,
        default_dt=default_dt,
    )
