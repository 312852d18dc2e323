"""Infix expression syntax used in config files.

Grammar (``^`` binds tighter than unary minus, exponents are integers)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' ['-'] INT | '^' '(' ['-'] INT ')')?
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'
"""
from __future__ import annotations

import re
from typing import Container

from . import symbolic as sym
from .errors import ParseError

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^(),]))"
)


class _Tok:
    __slots__ = ("kind", "text", "col")

    def __init__(self, kind, text, col):
        self.kind, self.text, self.col = kind, text, col


def _tokenize(text: str, line: int, col0: int) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            bad = text[pos:].lstrip()[:1]
            col = col0 + pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {bad!r}", line, col, bad)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), col0 + start))
        pos = m.end()
    toks.append(_Tok("end", "", col0 + len(text)))
    return toks


class _Parser:
    def __init__(self, toks, coords, line):
        self.toks = toks
        self.i = 0
        self.coords = coords
        self.line = line

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg, tok):
        raise ParseError(msg, self.line, tok.col, tok.text or None)

    def expect(self, text):
        t = self.take()
        if t.text != text:
            self.fail(f"expected {text!r}, found {t.text or 'end of input'!r}", t)
        return t

    def expr(self):
        e = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            r = self.term()
            e = sym.add(e, r) if op == "+" else sym.sub(e, r)
        return e

    def term(self):
        e = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            r = self.unary()
            e = sym.mul(e, r) if op == "*" else sym.div(e, r)
        return e

    def unary(self):
        t = self.peek()
        if t.text == "-":
            self.take()
            return sym.neg(self.unary())
        if t.text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().text != "^":
            return base
        self.take()
        paren = self.peek().text == "("
        if paren:
            self.take()
        sign = 1
        if self.peek().text == "-":
            self.take()
            sign = -1
        t = self.take()
        if t.kind != "num" or not re.fullmatch(r"\d+", t.text):
            self.fail("exponent must be an integer literal (use sqrt for fractional powers)", t)
        if paren:
            self.expect(")")
        return sym.power(base, sign * int(t.text))

    def atom(self):
        t = self.take()
        if t.kind == "num":
            return sym.Const(float(t.text))
        if t.kind == "name":
            if self.peek().text == "(":
                if t.text not in sym.FUNCTIONS:
                    self.fail(f"unknown function {t.text!r}", t)
                self.take()
                arg = self.expr()
                self.expect(")")
                return sym.call(t.text, arg)
            if t.text in sym.FUNCTIONS:
                self.fail(f"function {t.text!r} needs an argument", t)
            if self.coords is not None and t.text not in self.coords:
                self.fail(f"undeclared coordinate {t.text!r}", t)
            return sym.Var(t.text)
        if t.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        self.fail(f"unexpected {t.text or 'end of input'!r}", t)


def parse(text: str, coords: Container[str] | None = None, line: int = 1, column: int = 1) -> sym.Expr:
    """Parse `text` into an expression.

    `coords` restricts which names may appear; ``line``/``column`` locate the
    text inside an enclosing file so errors point at the right place.
    """
    toks = _tokenize(text, line, column)
    p = _Parser(toks, coords, line)
    e = p.expr()
    if p.peek().kind != "end":
        p.fail(f"unexpected {p.peek().text!r}", p.peek())
    return e
