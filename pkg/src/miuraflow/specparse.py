"""Recursive-descent parser for solution specs such as
``boost:c=1(soliton:kappa=1,x0=0)``.

Grammar::

    spec   := ident [":" params] ["(" spec ")"]
    params := key "=" value ("," key "=" value)*
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

__all__ = ["SpecNode", "SpecSyntaxError", "parse_spec"]

_IDENT_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-")


class SpecSyntaxError(ValueError):
    def __init__(self, text: str, pos: int, msg: str):
        super().__init__(f"{msg} at position {pos} in {text!r}")
        self.text = text
        self.pos = pos


@dataclass(frozen=True)
class SpecNode:
    name: str
    params: dict = field(default_factory=dict)
    inner: Optional["SpecNode"] = None

    def number(self, key: str, default: float | None = None) -> float:
        if key not in self.params:
            if default is None:
                raise KeyError(f"spec {self.name!r} needs parameter {key!r}")
            return default
        try:
            return float(self.params[key])
        except ValueError:
            raise ValueError(f"parameter {key}={self.params[key]!r} of {self.name!r} "
                             "is not a number") from None

    def check_keys(self, allowed) -> None:
        extra = set(self.params) - set(allowed)
        if extra:
            raise KeyError(f"unknown parameter(s) {sorted(extra)} for {self.name!r}")

    def __str__(self) -> str:
        s = self.name
        if self.params:
            s += ":" + ",".join(f"{k}={v}" for k, v in self.params.items())
        if self.inner is not None:
            s += f"({self.inner})"
        return s


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise SpecSyntaxError(self.text, self.pos, f"expected {ch!r}")
        self.pos += 1

    def ident(self) -> str:
        start = self.pos
        while self.peek() and self.peek() in _IDENT_CHARS:
            self.pos += 1
        if start == self.pos:
            raise SpecSyntaxError(self.text, self.pos, "expected identifier")
        return self.text[start:self.pos]

    def value(self) -> str:
        start = self.pos
        while self.peek() and self.peek() not in ",()":
            self.pos += 1
        if start == self.pos:
            raise SpecSyntaxError(self.text, self.pos, "empty value")
        return self.text[start:self.pos].strip()

    def spec(self) -> SpecNode:
        name = self.ident()
        params = {}
        if self.peek() == ":":
            self.pos += 1
            while True:
                key = self.ident()
                if key in params:
                    raise SpecSyntaxError(self.text, self.pos, f"duplicate key {key!r}")
                self.expect("=")
                params[key] = self.value()
                if self.peek() != ",":
                    break
                self.pos += 1
        inner = None
        if self.peek() == "(":
            self.pos += 1
            inner = self.spec()
            self.expect(")")
        return SpecNode(name, params, inner)


def parse_spec(text: str) -> SpecNode:
    p = _Parser(text.strip())
    node = p.spec()
    if p.pos != len(p.text):
        raise SpecSyntaxError(p.text, p.pos, "trailing characters")
    return node
