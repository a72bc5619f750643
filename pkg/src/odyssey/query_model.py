"""Query parsing and star-shaped decomposition.

The supported fragment is a SELECT over a single basic graph pattern with
optional DISTINCT and PREFIX declarations. Patterns sharing a subject term
form a star subquery; a pattern whose object is another star's subject is a
link between the two stars. Queries with variable predicates are outside the
optimizable fragment and are signalled for fallback handling.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

from .rdf_model import Term, TriplePattern, Variable

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
XSD_INTEGER = "http://www.w3.org/2001/XMLSchema#integer"
XSD_DECIMAL = "http://www.w3.org/2001/XMLSchema#decimal"

_UNSUPPORTED = {
    "FILTER",
    "OPTIONAL",
    "UNION",
    "GRAPH",
    "SERVICE",
    "MINUS",
    "BIND",
    "VALUES",
    "EXISTS",
    "ASK",
    "CONSTRUCT",
    "DESCRIBE",
    "ORDER",
    "GROUP",
    "HAVING",
    "LIMIT",
    "OFFSET",
    "BASE",
}


class QuerySyntaxError(ValueError):
    def __init__(self, position: int, reason: str):
        super().__init__(f"at offset {position}: {reason}")
        self.position = position
        self.reason = reason


class UnsupportedFeature(ValueError):
    def __init__(self, construct: str):
        super().__init__(f"unsupported construct: {construct}")
        self.construct = construct


class FallbackRequired(ValueError):
    """The query leaves the optimizable fragment (variable predicate)."""


@dataclass
class Query:
    patterns: list[TriplePattern]
    distinct: bool = False
    projection: list[Variable] | None = None  # None means '*'

    def variables(self) -> set[Variable]:
        out: set[Variable] = set()
        for p in self.patterns:
            out |= p.variables()
        return out

    def projected(self) -> list[Variable]:
        if self.projection is not None:
            return self.projection
        return sorted(self.variables(), key=lambda v: v.name)


# --- tokenizer / parser -----------------------------------------------------

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<comment>\#[^\n]*)
      | (?P<iri><[^<>\s]*>)
      | (?P<var>[?$][A-Za-z_][A-Za-z0-9_]*)
      | (?P<string>"(?:[^"\\]|\\.)*")
      | (?P<number>[+-]?\d+(?:\.\d+)?)
      | (?P<blank>_:[A-Za-z0-9_]+)
      | (?P<pname>[A-Za-z_][A-Za-z0-9_.-]*?:[A-Za-z0-9_.%-]*)
      | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<dtype>\^\^)
      | (?P<lang>@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*)
      | (?P<punct>[{}.;,*()/|^+\[\]])
    )""",
    re.VERBOSE,
)

_ESCAPE_MAP = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", '"': '"', "'": "'"}


def _unquote(raw: str) -> str:
    body = raw[1:-1]
    out: list[str] = []
    i = 0
    while i < len(body):
        if body[i] == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            if nxt == "u":
                out.append(chr(int(body[i + 2 : i + 6], 16)))
                i += 6
                continue
            out.append(_ESCAPE_MAP.get(nxt, nxt))
            i += 2
            continue
        out.append(body[i])
        i += 1
    return "".join(out)


@dataclass
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise QuerySyntaxError(pos, f"cannot tokenize near {text[pos:pos + 12]!r}")
        pos = m.end()
        kind = m.lastgroup or ""
        if kind == "comment":
            continue
        tokens.append(_Token(kind, m.group(kind), m.start(kind)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0
        self.prefixes: dict[str, str] = {}

    def peek(self) -> _Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> _Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1].pos if self.tokens else 0
            raise QuerySyntaxError(last, "unexpected end of query")
        self.i += 1
        return tok

    def expect_word(self, word: str) -> None:
        tok = self.next()
        if tok.kind != "word" or tok.text.upper() != word:
            raise QuerySyntaxError(tok.pos, f"expected {word}")

    def expect_punct(self, ch: str) -> None:
        tok = self.next()
        if tok.kind != "punct" or tok.text != ch:
            raise QuerySyntaxError(tok.pos, f"expected {ch!r}")

    def _check_unsupported(self, tok: _Token) -> None:
        if tok.kind == "word" and tok.text.upper() in _UNSUPPORTED:
            raise UnsupportedFeature(tok.text.upper())

    def parse(self) -> Query:
        while True:
            tok = self.peek()
            if tok is None:
                raise QuerySyntaxError(0, "empty query")
            if tok.kind == "word" and tok.text.upper() == "PREFIX":
                self.next()
                self._prefix_decl()
                continue
            break
        self._check_unsupported(self.peek() or _Token("word", "", 0))
        self.expect_word("SELECT")
        distinct = False
        tok = self.peek()
        if tok and tok.kind == "word" and tok.text.upper() == "DISTINCT":
            distinct = True
            self.next()
        projection = self._projection()
        tok = self.peek()
        if tok and tok.kind == "word" and tok.text.upper() == "WHERE":
            self.next()
        self.expect_punct("{")
        patterns = self._group_graph_pattern()
        self.expect_punct("}")
        tok = self.peek()
        if tok is not None:
            self._check_unsupported(tok)
            raise QuerySyntaxError(tok.pos, f"trailing content {tok.text!r}")
        query = Query(patterns, distinct=distinct, projection=projection)
        if projection is not None:
            in_patterns = query.variables()
            for v in projection:
                if v not in in_patterns:
                    raise QuerySyntaxError(0, f"projected variable {v} not used in any pattern")
        return query

    def _prefix_decl(self) -> None:
        tok = self.next()
        if tok.kind != "pname" or not tok.text.endswith(":"):
            if tok.kind == "pname":
                raise QuerySyntaxError(tok.pos, "prefix declaration must end with ':'")
            raise QuerySyntaxError(tok.pos, "expected prefix name")
        name = tok.text[:-1]
        iri = self.next()
        if iri.kind != "iri":
            raise QuerySyntaxError(iri.pos, "expected IRI in prefix declaration")
        self.prefixes[name] = iri.text[1:-1]

    def _projection(self) -> list[Variable] | None:
        tok = self.peek()
        if tok and tok.kind == "punct" and tok.text == "*":
            self.next()
            return None
        out: list[Variable] = []
        while True:
            tok = self.peek()
            if tok is None or tok.kind != "var":
                break
            self.next()
            out.append(Variable(tok.text[1:]))
        if not out:
            pos = tok.pos if tok else 0
            raise QuerySyntaxError(pos, "expected '*' or projection variables")
        return out

    def _group_graph_pattern(self) -> list[TriplePattern]:
        patterns: list[TriplePattern] = []
        label = 1
        while True:
            tok = self.peek()
            if tok is None:
                raise QuerySyntaxError(0, "unterminated group graph pattern")
            if tok.kind == "punct" and tok.text == "}":
                return patterns
            self._check_unsupported(tok)
            subject = self._term(position="subject")
            while True:
                predicate = self._verb()
                while True:
                    obj = self._term(position="object")
                    patterns.append(TriplePattern(subject, predicate, obj, label=label))
                    label += 1
                    nxt = self.peek()
                    if nxt and nxt.kind == "punct" and nxt.text == ",":
                        self.next()
                        continue
                    break
                nxt = self.peek()
                if nxt and nxt.kind == "punct" and nxt.text == ";":
                    self.next()
                    after = self.peek()
                    if after and after.kind == "punct" and after.text in ".}":
                        break
                    continue
                break
            nxt = self.peek()
            if nxt and nxt.kind == "punct" and nxt.text == ".":
                self.next()

    def _verb(self):
        tok = self.peek()
        if tok and tok.kind == "word" and tok.text == "a":
            self.next()
            return Term.iri(RDF_TYPE)
        if tok and tok.kind == "punct" and tok.text in "/|^+*(":
            raise UnsupportedFeature("property path")
        verb = self._term(position="predicate")
        nxt = self.peek()
        if nxt and nxt.kind == "punct" and nxt.text in "/|^+":
            raise UnsupportedFeature("property path")
        return verb

    def _term(self, position: str):
        tok = self.next()
        self._check_unsupported(tok)
        if tok.kind == "var":
            return Variable(tok.text[1:])
        if tok.kind == "iri":
            return Term.iri(tok.text[1:-1])
        if tok.kind == "pname":
            return Term.iri(self._expand(tok))
        if tok.kind == "blank":
            raise UnsupportedFeature("blank node in query pattern")
        if tok.kind == "string":
            value = _unquote(tok.text)
            nxt = self.peek()
            if nxt and nxt.kind == "lang":
                self.next()
                return Term.literal(value, language=nxt.text[1:])
            if nxt and nxt.kind == "dtype":
                self.next()
                dt = self.next()
                if dt.kind == "iri":
                    return Term.literal(value, datatype=dt.text[1:-1])
                if dt.kind == "pname":
                    return Term.literal(value, datatype=self._expand(dt))
                raise QuerySyntaxError(dt.pos, "expected datatype IRI")
            return Term.literal(value)
        if tok.kind == "number":
            dt = XSD_DECIMAL if "." in tok.text else XSD_INTEGER
            return Term.literal(tok.text, datatype=dt)
        raise QuerySyntaxError(tok.pos, f"unexpected token {tok.text!r} in {position} position")

    def _expand(self, tok: _Token) -> str:
        prefix, _, local = tok.text.partition(":")
        if prefix not in self.prefixes:
            raise QuerySyntaxError(tok.pos, f"undeclared prefix {prefix!r}")
        return self.prefixes[prefix] + local


_STRING_OR_IRI = re.compile(r'"(?:[^"\\]|\\.)*"|<[^<>\s]*>')


def _reject_unsupported_keywords(text: str) -> None:
    # scan outside strings and IRIs so constructs with untokenizable bodies
    # (FILTER expressions, solution modifiers) are reported by name
    stripped = _STRING_OR_IRI.sub(" ", text)
    for word in re.findall(r"[A-Za-z_]+", stripped):
        if word.upper() in _UNSUPPORTED:
            raise UnsupportedFeature(word.upper())


def parse_query(text: str) -> Query:
    """Parse the supported SELECT fragment; prefixes are expanded in place."""
    _reject_unsupported_keywords(text)
    return _Parser(text).parse()


# --- star decomposition -----------------------------------------------------


@dataclass
class StarSubquery:
    center: Union[Term, Variable]
    patterns: list[TriplePattern]
    predicates: frozenset[str]

    def min_label(self) -> int:
        return min(p.label for p in self.patterns)

    def variables(self) -> set[Variable]:
        out: set[Variable] = set()
        for p in self.patterns:
            out |= p.variables()
        return out


@dataclass(frozen=True)
class StarLink:
    source: int
    target: int
    predicate: str
    pattern_label: int


@dataclass
class StarGraph:
    stars: list[StarSubquery]
    links: list[StarLink] = field(default_factory=list)

    def shared_variables(self, i: int, j: int) -> set[Variable]:
        return self.stars[i].variables() & self.stars[j].variables()

    def connected(self, i: int, j: int) -> bool:
        return bool(self.shared_variables(i, j)) or any(
            {l.source, l.target} == {i, j} for l in self.links
        )

    def links_between(self, i: int, j: int) -> list[StarLink]:
        return [l for l in self.links if l.source == i and l.target == j]


def decompose_stars(q: Query) -> StarGraph:
    """Partition patterns into subject stars and derive inter-star links."""
    for p in q.patterns:
        if isinstance(p.predicate, Variable):
            raise FallbackRequired(f"variable predicate {p.predicate} in pattern tp{p.label}")
    groups: dict[Union[Term, Variable], list[TriplePattern]] = {}
    for p in q.patterns:
        groups.setdefault(p.subject, []).append(p)
    stars = [
        StarSubquery(
            center=center,
            patterns=sorted(ps, key=lambda p: p.label),
            predicates=frozenset(p.predicate.lexical for p in ps if isinstance(p.predicate, Term)),
        )
        for center, ps in groups.items()
    ]
    stars.sort(key=StarSubquery.min_label)
    center_index = {id(star): i for i, star in enumerate(stars)}
    by_center = {star.center: center_index[id(star)] for star in stars}
    links = []
    for i, star in enumerate(stars):
        for p in star.patterns:
            target = by_center.get(p.object)
            if target is not None and isinstance(p.predicate, Term):
                links.append(StarLink(i, target, p.predicate.lexical, p.label))
    links.sort(key=lambda l: l.pattern_label)
    return StarGraph(stars, links)
