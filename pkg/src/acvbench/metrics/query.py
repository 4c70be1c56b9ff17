"""Parser and printer for the small metric query subset the agents use.

Grammar::

    expr       := quantile | sum | rate | selector
    quantile   := "histogram_quantile" "(" number "," expr ")"
    sum        := "sum" [by] "(" expr ")" [by]
    by         := "by" "(" ident {"," ident} ")"
    rate       := "rate" "(" selector ")"          # selector must carry a range
    selector   := metric ["{" matcher {"," matcher} [","] "}"] ["[" duration "]"]
    matcher    := ident ("=" | "!=" | "=~" | "!~") string
    duration   := digits ("s" | "m" | "h")
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional, Union

from acvbench.errors import QuerySyntaxError, UnknownMetric, UnsupportedFunction

KNOWN_METRICS = ("request_duration_seconds_count", "request_duration_seconds_bucket")
FUNCTIONS = ("histogram_quantile", "sum", "rate")
MATCH_OPS = ("=", "!=", "=~", "!~")
UNITS = {"s": 1, "m": 60, "h": 3600}


@dataclass(frozen=True)
class Matcher:
    label: str
    op: str
    value: str

    def matches(self, labels: dict) -> bool:
        actual = labels.get(self.label, "")
        if self.op == "=":
            return actual == self.value
        if self.op == "!=":
            return actual != self.value
        hit = re.fullmatch(self.value, actual) is not None
        return hit if self.op == "=~" else not hit


@dataclass(frozen=True)
class Selector:
    metric: str
    matchers: tuple = ()
    window: Optional[int] = None  # seconds


@dataclass(frozen=True)
class Rate:
    arg: Selector


@dataclass(frozen=True)
class Sum:
    arg: "Expr"
    by: Optional[tuple] = None


@dataclass(frozen=True)
class HistogramQuantile:
    q: float
    arg: "Expr"


Expr = Union[Selector, Rate, Sum, HistogramQuantile]


def parse_duration(text: str) -> int:
    """``"2m"`` -> 120. Only a single s/m/h unit is accepted."""
    m = re.fullmatch(r"(\d+)([smh])", text.strip())
    if not m:
        raise QuerySyntaxError(f"invalid duration {text!r}", 0)
    return int(m.group(1)) * UNITS[m.group(2)]


def format_duration(seconds: int) -> str:
    for unit in ("h", "m"):
        if seconds and seconds % UNITS[unit] == 0:
            return f"{seconds // UNITS[unit]}{unit}"
    return f"{seconds}s"


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<string>"(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*')
  | (?P<duration>\d+[smh](?![A-Za-z0-9_]))
  | (?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+)
  | (?P<ident>[A-Za-z_:][A-Za-z0-9_:]*)
  | (?P<op>=~|!~|!=|=)
  | (?P<punct>[(){}\[\],])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int


def tokenize(text: str) -> list[_Tok]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            out.append(_Tok(m.lastgroup, m.group(), pos))
        pos = m.end()
    out.append(_Tok("eof", "", len(text)))
    return out


def _unquote(raw: str) -> str:
    body = raw[1:-1]
    if raw[0] == "'":
        body = body.replace('\\"', '"').replace('"', '\\"').replace("\\'", "'")
    try:
        return json.loads(f'"{body}"')
    except ValueError:
        return body


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def _next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def _expect(self, text: str) -> _Tok:
        tok = self.cur
        if tok.text != text or tok.kind not in ("punct", "op"):
            found = tok.text or "end of input"
            raise QuerySyntaxError(f"expected {text!r}, found {found!r}", tok.offset)
        return self._next()

    def parse(self) -> Expr:
        expr = self._expr()
        if self.cur.kind != "eof":
            raise QuerySyntaxError(f"unexpected {self.cur.text!r}", self.cur.offset)
        return expr

    def _expr(self) -> Expr:
        tok = self.cur
        if tok.kind != "ident":
            raise QuerySyntaxError(f"expected expression, found {tok.text or 'end of input'!r}", tok.offset)
        nxt = self.toks[self.i + 1]
        is_call = nxt.text == "(" or (tok.text == "sum" and nxt.text == "by")
        if tok.text == "histogram_quantile" and is_call:
            return self._quantile()
        if tok.text == "sum" and is_call:
            return self._sum()
        if tok.text == "rate" and is_call:
            return self._rate()
        if is_call:
            raise UnsupportedFunction(f"function {tok.text!r} is not supported (offset {tok.offset})")
        return self._selector()

    def _quantile(self) -> HistogramQuantile:
        self._next()
        self._expect("(")
        tok = self._next()
        if tok.kind != "number":
            raise QuerySyntaxError("histogram_quantile expects a numeric quantile", tok.offset)
        self._expect(",")
        start = self.cur.offset
        arg = self._expr()
        self._expect(")")
        if not _keeps_le(arg):
            raise QuerySyntaxError("histogram_quantile needs a bucket operand that keeps the 'le' label", start)
        return HistogramQuantile(float(tok.text), arg)

    def _by(self) -> tuple:
        self._next()
        self._expect("(")
        labels = []
        while True:
            tok = self._next()
            if tok.kind != "ident":
                raise QuerySyntaxError("expected label name", tok.offset)
            labels.append(tok.text)
            if self.cur.text == ",":
                self._next()
                continue
            break
        self._expect(")")
        return tuple(labels)

    def _sum(self) -> Sum:
        self._next()
        by = None
        if self.cur.text == "by":
            by = self._by()
        self._expect("(")
        arg = self._expr()
        self._expect(")")
        if self.cur.text == "by" and self.cur.kind == "ident":
            if by is not None:
                raise QuerySyntaxError("duplicate 'by' clause", self.cur.offset)
            by = self._by()
        return Sum(arg, by)

    def _rate(self) -> Rate:
        self._next()
        self._expect("(")
        start = self.cur.offset
        arg = self._expr()
        self._expect(")")
        if not isinstance(arg, Selector) or arg.window is None:
            raise QuerySyntaxError("rate expects a range selector such as metric[1m]", start)
        return Rate(arg)

    def _selector(self) -> Selector:
        tok = self._next()
        matchers = []
        if self.cur.text == "{":
            self._next()
            while self.cur.text != "}":
                label = self._next()
                if label.kind != "ident":
                    raise QuerySyntaxError("expected label name", label.offset)
                op = self._next()
                if op.kind != "op" or op.text not in MATCH_OPS:
                    raise QuerySyntaxError("expected label matcher operator", op.offset)
                value = self._next()
                if value.kind != "string":
                    raise QuerySyntaxError("expected quoted label value", value.offset)
                matchers.append(Matcher(label.text, op.text, _unquote(value.text)))
                if self.cur.text == ",":
                    self._next()
                elif self.cur.text != "}":
                    raise QuerySyntaxError(f"expected ',' or '}}', found {self.cur.text or 'end of input'!r}",
                                           self.cur.offset)
            self._next()
        window = None
        if self.cur.text == "[":
            self._next()
            dur = self._next()
            if dur.kind != "duration":
                raise QuerySyntaxError("expected duration like 1m", dur.offset)
            window = parse_duration(dur.text)
            self._expect("]")
        return Selector(tok.text, tuple(matchers), window)


def _keeps_le(expr: Expr) -> bool:
    if isinstance(expr, Sum):
        return expr.by is not None and "le" in expr.by and _keeps_le(expr.arg)
    if isinstance(expr, Rate):
        return _keeps_le(expr.arg)
    if isinstance(expr, Selector):
        return expr.metric.endswith("_bucket")
    return False


def selectors(expr: Expr) -> list[Selector]:
    if isinstance(expr, Selector):
        return [expr]
    return selectors(expr.arg)


def parse(text: str) -> Expr:
    ast = _Parser(text).parse()
    for sel in selectors(ast):
        if sel.metric not in KNOWN_METRICS:
            raise UnknownMetric(f"unknown metric {sel.metric!r}; available: {', '.join(KNOWN_METRICS)}")
        for mt in sel.matchers:
            if mt.op in ("=~", "!~"):
                try:
                    re.compile(mt.value)
                except re.error as exc:
                    raise QuerySyntaxError(f"invalid regex {mt.value!r}: {exc}", 0) from None
    return ast


def to_text(expr: Expr) -> str:
    """Canonical text; ``parse(to_text(e)) == e``."""
    if isinstance(expr, Selector):
        out = expr.metric
        if expr.matchers:
            out += "{" + ",".join(f"{m.label}{m.op}{json.dumps(m.value)}" for m in expr.matchers) + "}"
        if expr.window is not None:
            out += f"[{format_duration(expr.window)}]"
        return out
    if isinstance(expr, Rate):
        return f"rate({to_text(expr.arg)})"
    if isinstance(expr, Sum):
        out = f"sum({to_text(expr.arg)})"
        if expr.by is not None:
            out += f" by ({', '.join(expr.by)})"
        return out
    return f"histogram_quantile({expr.q!r}, {to_text(expr.arg)})"
