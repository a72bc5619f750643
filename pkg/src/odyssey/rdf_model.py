"""RDF terms, triples, N-Triples ingestion and in-memory datasets.

A Dataset is an immutable, subject-sorted set of triples. It is the unit a
simulated endpoint serves and the input to all statistics builders. Duplicate
N-Triples lines are collapsed (RDF graphs are sets), and blank node labels are
scoped to the dataset they were parsed from so that blanks from different
files never compare equal.
"""

from __future__ import annotations

import io
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence, Union

log = logging.getLogger(__name__)

IRI = "iri"
LITERAL = "literal"
BLANK = "blank"


class NTriplesSyntaxError(ValueError):
    """A malformed N-Triples line; carries the 1-based line number."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


@dataclass(frozen=True)
class Term:
    """An RDF term: IRI, literal, or blank node.

    ``lexical`` holds the full IRI, the literal's lexical form, or the blank
    label. Two terms are equal iff every field is equal; blank nodes carry a
    ``scope`` (the dataset id they were parsed under) so labels from
    different files stay distinct.
    """

    kind: str
    lexical: str
    datatype: str | None = None
    language: str | None = None
    scope: str = ""

    def __post_init__(self) -> None:
        if self.kind not in (IRI, LITERAL, BLANK):
            raise ValueError(f"unknown term kind: {self.kind!r}")
        if self.kind in (IRI, BLANK) and not self.lexical:
            raise ValueError(f"{self.kind} term with empty lexical form")

    @staticmethod
    def iri(value: str) -> "Term":
        return Term(IRI, value)

    @staticmethod
    def literal(value: str, datatype: str | None = None, language: str | None = None) -> "Term":
        return Term(LITERAL, value, datatype=datatype, language=language)

    @staticmethod
    def blank(label: str, scope: str = "") -> "Term":
        return Term(BLANK, label, scope=scope)

    def n3(self) -> str:
        """Serialize in N-Triples syntax (scope is not emitted)."""
        if self.kind == IRI:
            return f"<{self.lexical}>"
        if self.kind == BLANK:
            return f"_:{self.lexical}"
        out = f'"{_escape(self.lexical)}"'
        if self.language:
            return f"{out}@{self.language}"
        if self.datatype:
            return f"{out}^^<{self.datatype}>"
        return out

    def sort_key(self) -> tuple[bytes, str]:
        return self.n3().encode("utf-8"), self.scope


@dataclass(frozen=True)
class Triple:
    subject: Term
    predicate: Term
    object: Term

    def __post_init__(self) -> None:
        if self.predicate.kind != IRI:
            raise ValueError("triple predicate must be an IRI")
        if self.subject.kind == LITERAL:
            raise ValueError("triple subject cannot be a literal")

    def n3(self) -> str:
        return f"{self.subject.n3()} {self.predicate.n3()} {self.object.n3()} ."

    def sort_key(self):
        return (self.subject.sort_key(), self.predicate.sort_key(), self.object.sort_key())


class Dataset:
    """A set of triples with a stable subject-grouped iteration order.

    Instances are immutable after construction and safe to share across
    threads. ``warnings`` records lines skipped during lenient parsing.
    """

    def __init__(self, id: str, triples: Iterable[Triple], warnings: Sequence[str] = ()):
        self.id = id
        self.triples: tuple[Triple, ...] = tuple(sorted(set(triples), key=Triple.sort_key))
        self.warnings: tuple[str, ...] = tuple(warnings)
        self._by_predicate: dict[Term, list[Triple]] = {}
        for t in self.triples:
            self._by_predicate.setdefault(t.predicate, []).append(t)

    def __len__(self) -> int:
        return len(self.triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self.triples)

    def subjects(self) -> list[Term]:
        seen: dict[Term, None] = {}
        for t in self.triples:
            seen.setdefault(t.subject)
        return list(seen)

    def triples_with_predicate(self, predicate: Term) -> Sequence[Triple]:
        return self._by_predicate.get(predicate, ())


def scan_by_subject(d: Dataset) -> Iterator[tuple[Term, list[Triple]]]:
    """Stream (subject, triples) groups in subject-sorted order.

    Every subject appears exactly once and the union of emitted groups is
    exactly ``d.triples``.
    """
    group: list[Triple] = []
    current: Term | None = None
    for t in d.triples:
        if current is not None and t.subject != current:
            yield current, group
            group = []
        current = t.subject
        group.append(t)
    if current is not None:
        yield current, group


# --- N-Triples parsing ---------------------------------------------------

_IRIREF = re.compile(r"<([^<>\"{}|^`\\\x00-\x20]*)>")
_BLANK_LABEL = re.compile(r"_:([A-Za-z0-9][A-Za-z0-9._-]*)")
_LANGTAG = re.compile(r"@([a-zA-Z]+(?:-[a-zA-Z0-9]+)*)")

_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


def _escape(s: str) -> str:
    out = []
    for c in s:
        if c == "\\":
            out.append("\\\\")
        elif c == '"':
            out.append('\\"')
        elif c == "\n":
            out.append("\\n")
        elif c == "\r":
            out.append("\\r")
        elif c == "\t":
            out.append("\\t")
        elif ord(c) < 0x20 or c in "\x85  ":
            out.append(f"\\u{ord(c):04X}")
        else:
            out.append(c)
    return "".join(out)


def _unescape(s: str, lineno: int) -> str:
    out: list[str] = []
    i = 0
    while i < len(s):
        c = s[i]
        if c != "\\":
            out.append(c)
            i += 1
            continue
        if i + 1 >= len(s):
            raise NTriplesSyntaxError(lineno, "dangling escape")
        e = s[i + 1]
        if e in _ESCAPES:
            out.append(_ESCAPES[e])
            i += 2
        elif e == "u":
            out.append(chr(int(s[i + 2 : i + 6], 16)))
            i += 6
        elif e == "U":
            out.append(chr(int(s[i + 2 : i + 10], 16)))
            i += 10
        else:
            raise NTriplesSyntaxError(lineno, f"unknown escape \\{e}")
    return "".join(out)


class _LineParser:
    def __init__(self, line: str, lineno: int, scope: str):
        self.line = line
        self.pos = 0
        self.lineno = lineno
        self.scope = scope

    def error(self, reason: str) -> NTriplesSyntaxError:
        return NTriplesSyntaxError(self.lineno, reason)

    def skip_ws(self) -> None:
        while self.pos < len(self.line) and self.line[self.pos] in " \t":
            self.pos += 1

    def term(self, *, as_predicate: bool = False) -> Term:
        self.skip_ws()
        if self.pos >= len(self.line):
            raise self.error("unexpected end of line")
        c = self.line[self.pos]
        if c == "<":
            m = _IRIREF.match(self.line, self.pos)
            if not m:
                raise self.error("malformed IRI")
            self.pos = m.end()
            return Term.iri(_unescape(m.group(1), self.lineno))
        if as_predicate:
            raise self.error("predicate must be an IRI")
        if c == "_":
            m = _BLANK_LABEL.match(self.line, self.pos)
            if not m:
                raise self.error("malformed blank node label")
            self.pos = m.end()
            return Term.blank(m.group(1), scope=self.scope)
        if c == '"':
            return self._literal()
        raise self.error(f"unexpected character {c!r}")

    def _literal(self) -> Term:
        i = self.pos + 1
        while i < len(self.line):
            if self.line[i] == "\\":
                i += 2
                continue
            if self.line[i] == '"':
                break
            i += 1
        else:
            raise self.error("unterminated literal")
        value = _unescape(self.line[self.pos + 1 : i], self.lineno)
        self.pos = i + 1
        if self.pos < len(self.line) and self.line[self.pos] == "@":
            m = _LANGTAG.match(self.line, self.pos)
            if not m:
                raise self.error("malformed language tag")
            self.pos = m.end()
            return Term.literal(value, language=m.group(1))
        if self.line.startswith("^^", self.pos):
            self.pos += 2
            m = _IRIREF.match(self.line, self.pos)
            if not m:
                raise self.error("malformed datatype IRI")
            self.pos = m.end()
            return Term.literal(value, datatype=_unescape(m.group(1), self.lineno))
        return Term.literal(value)

    def end(self) -> None:
        self.skip_ws()
        if self.pos >= len(self.line) or self.line[self.pos] != ".":
            raise self.error("missing terminal '.'")
        self.pos += 1
        self.skip_ws()
        rest = self.line[self.pos :]
        if rest and not rest.startswith("#"):
            raise self.error(f"trailing content after '.': {rest!r}")


def parse_ntriples(
    source: Union[str, bytes, io.IOBase],
    dataset_id: str = "default",
    lenient: bool = False,
) -> Dataset:
    """Parse N-Triples into a Dataset, one triple per '.'-terminated line.

    Duplicate lines collapse to a single triple. Malformed lines raise
    NTriplesSyntaxError with the offending line number; with ``lenient`` they
    are skipped and recorded in ``Dataset.warnings`` instead.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw

    triples: list[Triple] = []
    warnings: list[str] = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            p = _LineParser(line, lineno, scope=dataset_id)
            s = p.term()
            if s.kind == LITERAL:
                raise p.error("subject cannot be a literal")
            pred = p.term(as_predicate=True)
            o = p.term()
            p.end()
            triples.append(Triple(s, pred, o))
        except NTriplesSyntaxError as exc:
            if not lenient:
                raise
            warnings.append(str(exc))
            log.warning("skipping malformed N-Triples %s", exc)
    return Dataset(dataset_id, triples, warnings=warnings)


def serialize_ntriples(d: Dataset) -> str:
    """Serialize in the dataset's canonical order; parse round-trips."""
    return "".join(t.n3() + "\n" for t in d.triples)


# --- BGP evaluation -------------------------------------------------------


@dataclass(frozen=True)
class Variable:
    name: str

    def __str__(self) -> str:
        return f"?{self.name}"


PatternTerm = Union[Term, Variable]


@dataclass(frozen=True)
class TriplePattern:
    """A triple pattern; ``label`` is the 1-based position in its query."""

    subject: PatternTerm
    predicate: PatternTerm
    object: PatternTerm
    label: int = 0

    def variables(self) -> set[Variable]:
        return {t for t in (self.subject, self.predicate, self.object) if isinstance(t, Variable)}

    def n3(self) -> str:
        parts = []
        for t in (self.subject, self.predicate, self.object):
            parts.append(str(t) if isinstance(t, Variable) else t.n3())
        return " ".join(parts) + " ."


Binding = Mapping[Variable, Term]


def _match_term(pattern: PatternTerm, value: Term, binding: dict[Variable, Term]) -> bool:
    if isinstance(pattern, Variable):
        bound = binding.get(pattern)
        if bound is None:
            binding[pattern] = value
            return True
        return bound == value
    return pattern == value


def evaluate_bgp(
    d: Dataset, patterns: Sequence[TriplePattern], distinct: bool = False
) -> list[dict[Variable, Term]]:
    """Standard BGP matching by nested loops; returns the bag of solutions.

    With ``distinct`` the result is duplicate-free (first occurrence kept).
    """
    solutions: list[dict[Variable, Term]] = [{}]
    for pattern in patterns:
        candidates: Iterable[Triple]
        if isinstance(pattern.predicate, Term):
            candidates = d.triples_with_predicate(pattern.predicate)
        else:
            candidates = d.triples
        extended: list[dict[Variable, Term]] = []
        for binding in solutions:
            for t in candidates:
                attempt = dict(binding)
                if (
                    _match_term(pattern.subject, t.subject, attempt)
                    and _match_term(pattern.predicate, t.predicate, attempt)
                    and _match_term(pattern.object, t.object, attempt)
                ):
                    extended.append(attempt)
        solutions = extended
        if not solutions:
            break
    if distinct:
        seen = set()
        unique = []
        for sol in solutions:
            key = frozenset((v, t) for v, t in sol.items())
            if key not in seen:
                seen.add(key)
                unique.append(sol)
        return unique
    return solutions
