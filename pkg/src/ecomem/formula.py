"""Minimal R-style model formulas: ``y ~ a + b*c + d:e``."""

from __future__ import annotations

import re
from dataclasses import dataclass

_TOKEN = re.compile(r"\s*(?:(?P<name>[A-Za-z_.][A-Za-z0-9_.]*)|(?P<op>[~+*:]))")


class ParseError(ValueError):
    def __init__(self, position: int, expected: str, text: str = ""):
        super().__init__(f"at position {position}: expected {expected} in {text!r}")
        self.position = position
        self.expected = expected


@dataclass(frozen=True)
class Formula:
    response: str
    terms: tuple[tuple[str, ...], ...]

    @property
    def term_names(self) -> list[str]:
        return [":".join(t) for t in self.terms]

    @property
    def variables(self) -> list[str]:
        """Distinct covariates referenced by any term, first-appearance order."""
        return list(dict.fromkeys(v for t in self.terms for v in t))

    def __str__(self) -> str:
        return f"{self.response} ~ " + " + ".join(self.term_names)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(start, "a name or one of '~ + * :'", text)
        kind = "name" if m.group("name") else "op"
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


def parse_formula(text: str) -> Formula:
    """Parse ``response ~ term (+ term)*``.

    ``a*b`` expands to ``a, b, a:b``; interaction variables are sorted
    alphabetically; repeated terms keep their first position.
    """
    tokens = _tokenize(text)
    end = len(text)
    i = 0

    def peek():
        return tokens[i] if i < len(tokens) else ("eof", "", end)

    def expect_name() -> str:
        nonlocal i
        kind, val, pos = peek()
        if kind != "name":
            raise ParseError(pos, "a variable name", text)
        i += 1
        return val

    response = expect_name()
    kind, val, pos = peek()
    if val != "~":
        raise ParseError(pos, "'~'", text)
    i += 1

    terms: list[tuple[str, ...]] = []
    while True:
        a = expect_name()
        kind, val, pos = peek()
        if kind == "op" and val in "*:":
            i += 1
            b = expect_name()
            if a == b:
                raise ParseError(pos, "two distinct variables in an interaction", text)
            inter = tuple(sorted((a, b)))
            terms.extend([(a,), (b,), inter] if val == "*" else [inter])
            kind, val, pos = peek()
        else:
            terms.append((a,))
        if kind == "eof":
            break
        if val != "+":
            raise ParseError(pos, "'+' or end of formula", text)
        i += 1

    for t in terms:
        if response in t:
            raise ParseError(0, "response not to appear on the right-hand side", text)
    return Formula(response, tuple(dict.fromkeys(terms)))
