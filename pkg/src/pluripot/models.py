"""Model-function expression language and its radial closed-form analyzer.

Grammar (scenario-file function syntax)::

    expr  := term (('+' | '-') term)*
    term  := factor ('*' factor)*
    factor:= NUMBER | NUMBER 'i' | 'abs' '(' var shift? ')' | 'abs2' '(' var shift? ')'
           | 'log' '(' expr ')' | 'max' '(' expr (',' expr)+ ')' | '(' expr ')' | '-' factor
    var   := 'z' | 'z1' | 'z2'
    shift := ('+' | '-') cnum
    cnum  := NUMBER 'i'? | '(' NUMBER (('+'|'-') NUMBER 'i')? ')'

Multiplication requires at least one constant side (the language is a linear
span of the building blocks, plus max). ``a - b`` is sugar for
``a + (-1)*b``.

The radial analyzer recognizes expressions that reduce, around a common
center, to piecewise ``g(ln rho)`` with pieces ``alpha*t + beta + gamma*e^{2t}``
(logarithms and squared moduli). That family carries every closed-form
measure used by the lab: shells at the kinks of g, an atom at the center
when g has logarithmic slope there, and radially constant-slope densities.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?(?P<imag>i)?"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<sym>[()+\-*,]))"
)


class _Tok:
    def __init__(self, kind, value, pos):
        self.kind = kind
        self.value = value
        self.pos = pos

    def __repr__(self):
        return f"{self.kind}:{self.value}@{self.pos}"


def _tokenize(text: str):
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise ValidationError(f"parse error at offset {at}: unexpected {text[at]!r}")
        if m.group("num") is not None:
            lit = m.group(0).strip()
            if m.group("imag"):
                out.append(_Tok("num", complex(0.0, float(lit[:-1])), m.start("num")))
            else:
                out.append(_Tok("num", float(lit), m.start("num")))
        elif m.group("name") is not None:
            out.append(_Tok("name", m.group("name"), m.start("name")))
        else:
            out.append(_Tok("sym", m.group("sym"), m.start("sym")))
        pos = m.end()
    out.append(_Tok("end", None, len(text)))
    return out


# --- AST ----------------------------------------------------------------

class Node:
    def eval(self, zs):
        raise NotImplementedError


@dataclass
class Const(Node):
    value: float

    def eval(self, zs):
        return self.value


@dataclass
class Mod(Node):
    """|z - a| or |z_k - a|; squared when power == 2."""
    var: int          # 0 = full vector, 1 = z1, 2 = z2
    shift: complex
    power: int        # 1 or 2

    def _arg2(self, zs):
        if self.var == 0:
            if len(zs) == 1:
                q = np.abs(zs[0] - self.shift) ** 2
            else:
                if self.shift != 0:
                    raise ValidationError(
                        "abs(z - a) with a != 0 is ambiguous in two variables; "
                        "shift the coordinates z1, z2 instead"
                    )
                q = np.abs(zs[0]) ** 2 + np.abs(zs[1]) ** 2
            return q
        if self.var == 2 and len(zs) < 2:
            raise ValidationError("z2 used on a one-variable domain")
        return np.abs(zs[self.var - 1] - self.shift) ** 2

    def eval(self, zs):
        q = self._arg2(zs)
        return q if self.power == 2 else np.sqrt(q)


@dataclass
class Log(Node):
    child: Node

    def eval(self, zs):
        v = np.asarray(self.child.eval(zs), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(v)
        if np.any(np.isnan(out)):
            raise ValidationError("log of a negative value while evaluating model")
        return out


@dataclass
class Scale(Node):
    factor: float
    child: Node

    def eval(self, zs):
        return self.factor * self.child.eval(zs)


@dataclass
class Sum(Node):
    children: list

    def eval(self, zs):
        out = self.children[0].eval(zs)
        for c in self.children[1:]:
            out = out + c.eval(zs)
        return out


@dataclass
class Raw(Node):
    """Opaque vectorised callable; usable wherever a model is, but outside
    the closed-form radial family."""

    fn: object

    def eval(self, zs):
        return np.asarray(self.fn(*zs), dtype=float)


@dataclass
class Max(Node):
    children: list

    def eval(self, zs):
        out = np.asarray(self.children[0].eval(zs), dtype=float)
        for c in self.children[1:]:
            out = np.maximum(out, c.eval(zs))
        return out


class ModelFunction:
    """Parsed expression; callable on complex coordinate arrays."""

    def __init__(self, text: str, root: Node):
        self.text = text
        self.root = root

    def __call__(self, *zs):
        out = self.root.eval(tuple(np.asarray(z) for z in zs))
        if np.isscalar(out) or np.ndim(out) == 0:
            shape = np.broadcast_shapes(*(np.shape(z) for z in zs))
            return np.full(shape, float(out)) if shape else float(out)
        return np.broadcast_to(out, np.broadcast_shapes(out.shape, *(np.shape(z) for z in zs))).copy()

    def __repr__(self):
        return f"ModelFunction({self.text!r})"


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        raise ValidationError(f"parse error at offset {tok.pos}: {msg}")

    def expect_sym(self, s):
        t = self.take()
        if t.kind != "sym" or t.value != s:
            self.fail(f"expected {s!r}", t)

    def parse(self):
        node = self.expr()
        t = self.peek()
        if t.kind != "end":
            self.fail("trailing input")
        return node

    def expr(self):
        terms = [self.term()]
        while self.peek().kind == "sym" and self.peek().value in "+-":
            op = self.take().value
            t = self.term()
            terms.append(t if op == "+" else _scale(-1.0, t))
        return terms[0] if len(terms) == 1 else _fold_sum(terms)

    def term(self):
        factors = [self.factor()]
        while self.peek().kind == "sym" and self.peek().value == "*":
            self.take()
            factors.append(self.factor())
        node = factors[0]
        for f in factors[1:]:
            node = _multiply(node, f, self)
        return node

    def factor(self):
        t = self.peek()
        if t.kind == "sym" and t.value == "-":
            self.take()
            return _scale(-1.0, self.factor())
        if t.kind == "num":
            self.take()
            if isinstance(t.value, complex):
                self.fail("imaginary constant outside a coordinate shift", t)
            return Const(float(t.value))
        if t.kind == "sym" and t.value == "(":
            self.take()
            node = self.expr()
            self.expect_sym(")")
            return node
        if t.kind == "name":
            self.take()
            name = t.value
            if name in ("abs", "abs2"):
                self.expect_sym("(")
                var, shift = self.var_shift()
                self.expect_sym(")")
                return Mod(var, shift, 2 if name == "abs2" else 1)
            if name == "log":
                self.expect_sym("(")
                node = self.expr()
                self.expect_sym(")")
                return Log(node)
            if name == "max":
                self.expect_sym("(")
                args = [self.expr()]
                while self.peek().kind == "sym" and self.peek().value == ",":
                    self.take()
                    args.append(self.expr())
                self.expect_sym(")")
                if len(args) < 2:
                    self.fail("max needs at least two arguments", t)
                return Max(args)
            self.fail(f"unknown name {name!r}", t)
        self.fail("expected a term")

    def var_shift(self):
        t = self.take()
        if t.kind != "name" or t.value not in ("z", "z1", "z2"):
            self.fail("expected z, z1 or z2", t)
        var = {"z": 0, "z1": 1, "z2": 2}[t.value]
        shift = 0j
        nxt = self.peek()
        if nxt.kind == "sym" and nxt.value in "+-":
            sign = 1.0 if self.take().value == "+" else -1.0
            shift = sign * self.cnum()
        return var, complex(shift)

    def cnum(self):
        t = self.peek()
        if t.kind == "num":
            self.take()
            return complex(t.value)
        if t.kind == "sym" and t.value == "(":
            self.take()
            total = 0j
            sign = 1.0
            while True:
                tt = self.take()
                if tt.kind != "num":
                    self.fail("expected a number in complex constant", tt)
                total += sign * complex(tt.value)
                nxt = self.peek()
                if nxt.kind == "sym" and nxt.value in "+-":
                    sign = 1.0 if self.take().value == "+" else -1.0
                    continue
                self.expect_sym(")")
                return total
        self.fail("expected a constant")


def _scale(c, node):
    if isinstance(node, Const):
        return Const(c * node.value)
    if isinstance(node, Scale):
        return Scale(c * node.factor, node.child)
    return Scale(c, node)


def _fold_sum(terms):
    flat = []
    const = 0.0
    for t in terms:
        if isinstance(t, Const):
            const += t.value
        elif isinstance(t, Sum):
            flat.extend(t.children)
        else:
            flat.append(t)
    if const or not flat:
        flat.append(Const(const))
    return flat[0] if len(flat) == 1 else Sum(flat)


def _multiply(a, b, parser):
    if isinstance(a, Const):
        return _scale(a.value, b)
    if isinstance(b, Const):
        return _scale(b.value, a)
    parser.fail("multiplication needs a constant side")


def parse_model(text: str) -> ModelFunction:
    if not isinstance(text, str) or not text.strip():
        raise ValidationError("empty model expression")
    return ModelFunction(text, _Parser(text).parse())


def as_model(spec) -> ModelFunction:
    """Accept a ModelFunction, an expression string, a number, or a
    vectorised callable of the complex coordinates."""
    if isinstance(spec, ModelFunction):
        return spec
    if isinstance(spec, (int, float)):
        return ModelFunction(repr(spec), Const(float(spec)))
    if isinstance(spec, str):
        return parse_model(spec)
    if callable(spec):
        label = getattr(spec, "label", None) or getattr(spec, "__name__", "callable")
        return ModelFunction(label, Raw(spec))
    raise ValidationError(f"cannot interpret {spec!r} as a model function")


# --- radial closed-form analysis ----------------------------------------

T_MIN = -60.0   # effective -infinity for ln(rho)


@dataclass
class RadialProfile:
    """Piecewise g(t), t = ln|z - center|, pieces alpha*t + beta + gamma*e^{2t}.

    ``breaks`` has k sorted interior breakpoints; ``pieces`` has k+1 triples,
    piece i live on (breaks[i-1], breaks[i])."""

    center: complex | tuple
    breaks: list
    pieces: list

    def piece_at(self, t: float):
        i = int(np.searchsorted(self.breaks, t, side="right"))
        return self.pieces[i]

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        idx = np.searchsorted(self.breaks, t, side="right")
        for i, (a, b, g) in enumerate(self.pieces):
            sel = idx == i
            if np.any(sel):
                ts = t[sel]
                out[sel] = a * ts + b + g * np.exp(2 * ts)
        return out

    def slope(self, t, side="+"):
        """g'(t) one-sided."""
        sd = "right" if side == "+" else "left"
        i = int(np.searchsorted(self.breaks, t, side=sd))
        a, _, g = self.pieces[i]
        return a + 2 * g * np.exp(2 * t)

    def slope_at_minus_inf(self) -> float:
        return self.pieces[0][0]

    def is_convex_increasing(self, tol=1e-9) -> bool:
        for (a, _, g) in self.pieces:
            if g < -tol:
                return False
        if self.pieces[0][0] < -tol:
            return False
        for t in self.breaks:
            if self.slope(t, "+") < self.slope(t, "-") - tol:
                return False
        lo = self.breaks[0] - 1.0 if self.breaks else T_MIN
        if self.slope(lo, "-") < -tol:
            return False
        return True

    def simplified(self) -> "RadialProfile":
        breaks, pieces = [], [self.pieces[0]]
        for t, p in zip(self.breaks, self.pieces[1:]):
            if np.allclose(p, pieces[-1], rtol=0, atol=1e-13):
                continue
            breaks.append(t)
            pieces.append(p)
        return RadialProfile(self.center, breaks, pieces)


def _same_center(c1, c2):
    if c1 is None:
        return c2
    if c2 is None:
        return c1
    if isinstance(c1, tuple) != isinstance(c2, tuple):
        return False
    a1 = np.asarray(c1 if isinstance(c1, tuple) else [c1], dtype=complex)
    a2 = np.asarray(c2 if isinstance(c2, tuple) else [c2], dtype=complex)
    if a1.shape == a2.shape and np.allclose(a1, a2):
        return c1
    return False


def _merge(p1: RadialProfile, p2: RadialProfile, op):
    center = _same_center(p1.center, p2.center)
    if center is False:
        return None
    common = sorted(set(p1.breaks) | set(p2.breaks))
    segs = [T_MIN] + common + [60.0]
    pairs = []
    for lo, hi in zip(segs[:-1], segs[1:]):
        a1 = p1.piece_at((lo + hi) / 2)
        a2 = p2.piece_at((lo + hi) / 2)
        pairs.extend(op(lo, hi, a1, a2))
    breaks, pieces = [], []
    for t, piece in pairs:
        if t is None:
            pieces.append(piece)
        elif breaks and t - breaks[-1] < 1e-14:
            pieces[-1] = piece  # interval between coincident breaks is empty
        else:
            breaks.append(t)
            pieces.append(piece)
    return RadialProfile(center, breaks, pieces).simplified()


def _op_sum(lo, hi, a, b):
    piece = (a[0] + b[0], a[1] + b[1], a[2] + b[2])
    yield (None if lo == T_MIN else lo, piece)


def _op_max(lo, hi, a, b):
    lead = None if lo == T_MIN else lo
    da, db, dg = a[0] - b[0], a[1] - b[1], a[2] - b[2]

    def diff(t):
        return da * t + db + dg * np.exp(2 * t)

    # d(t) = da*t + db + dg*e^{2t} has at most two roots on (lo, hi)
    ts = np.linspace(max(lo, -80.0), min(hi, 80.0), 257)
    vals = diff(ts)
    roots = []
    for i in range(len(ts) - 1):
        v0, v1 = vals[i], vals[i + 1]
        if v0 == 0.0:
            roots.append(ts[i])
        elif v0 * v1 < 0:
            from scipy.optimize import brentq
            roots.append(brentq(diff, ts[i], ts[i + 1], xtol=1e-14))
    cuts = [max(lo, -80.0)] + roots + [min(hi, 80.0)]
    for j in range(len(cuts) - 1):
        mid = (cuts[j] + cuts[j + 1]) / 2
        piece = a if diff(mid) >= 0 else b
        yield (lead if j == 0 else roots[j - 1], piece)


def radial_profile(model: ModelFunction, dim_complex: int) -> RadialProfile | None:
    """Reduce the model to a piecewise radial profile, or None if it is
    outside the closed-form family."""
    try:
        prof = _analyze(model.root, dim_complex)
    except ValidationError:
        return None
    if prof is None:
        return None
    if prof.center is None:
        prof = RadialProfile(0j, prof.breaks, prof.pieces)
    return prof.simplified()


def _const_profile(c):
    return RadialProfile(None, [], [(0.0, float(c), 0.0)])


def _analyze(node: Node, n: int) -> RadialProfile | None:
    if isinstance(node, Const):
        return _const_profile(node.value)
    if isinstance(node, Scale):
        p = _analyze(node.child, n)
        if p is None:
            return None
        return RadialProfile(
            p.center, list(p.breaks),
            [(node.factor * a, node.factor * b, node.factor * g) for a, b, g in p.pieces],
        )
    if isinstance(node, Mod):
        if node.var != 0:
            if n == 1 and node.var == 1:
                pass  # z1 is z in one variable
            else:
                return None
        c = _mod_center(node, n)
        if c is False:
            return None
        if node.power == 2:
            return RadialProfile(c, [], [(0.0, 0.0, 1.0)])
        return None  # bare |z| is not in the alpha,beta,gamma family
    if isinstance(node, Log):
        ch = node.child
        if isinstance(ch, Mod):
            if ch.var != 0 and not (n == 1 and ch.var == 1):
                return None
            c = _mod_center(ch, n)
            if c is False:
                return None
            if ch.power == 1:
                return RadialProfile(c, [], [(1.0, 0.0, 0.0)])
            return RadialProfile(c, [], [(2.0, 0.0, 0.0)])
        if isinstance(ch, Scale) and ch.factor > 0 and isinstance(ch.child, Mod):
            inner = _analyze(Log(ch.child), n)
            if inner is None:
                return None
            lnc = float(np.log(ch.factor))
            return RadialProfile(inner.center, [], [(inner.pieces[0][0], lnc, 0.0)])
        return None
    if isinstance(node, Sum):
        out = _analyze(node.children[0], n)
        for c in node.children[1:]:
            nxt = _analyze(c, n)
            if out is None or nxt is None:
                return None
            out = _merge(out, nxt, _op_sum)
            if out is None:
                return None
        return out
    if isinstance(node, Max):
        out = _analyze(node.children[0], n)
        for c in node.children[1:]:
            nxt = _analyze(c, n)
            if out is None or nxt is None:
                return None
            out = _merge(out, nxt, _op_max)
            if out is None:
                return None
        return out
    return None


def _mod_center(node: Mod, n: int):
    if node.var == 0 and n == 2:
        return (node.shift, 0j) if node.shift == 0 else False
    return node.shift
