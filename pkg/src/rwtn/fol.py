"""First-order language: signature, AST, parser and printer.

Concrete syntax::

    ~ not    & and    | or    -> implies (right-assoc, lowest binary)
    forall x,y: body      exists x: body
    Pred(a, b)            f(t1, t2)   (function terms)

Precedence from tightest: ``~``, ``&``, ``|``, ``->``. A quantifier binds
everything to its right, up to the closing parenthesis that encloses it.

Theory files hold one clause per line with ``#`` comments and a header of
``const``, ``pred1``, ``pred2`` (or ``predN``) and ``funcN`` lines.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union


class ParseError(ValueError):
    def __init__(self, message: str, position: int, line: int | None = None):
        self.reason = message
        self.position = position
        self.line = line
        where = f"line {line}, column {position}" if line is not None else f"position {position}"
        super().__init__(f"{message} at {where}")


@dataclass(frozen=True)
class Signature:
    constants: tuple[str, ...] = ()
    functions: tuple[tuple[str, int], ...] = ()
    predicates: tuple[tuple[str, int], ...] = ()
    _const_index: dict = field(init=False, repr=False, compare=False, hash=False)
    _func_arity: dict = field(init=False, repr=False, compare=False, hash=False)
    _pred_arity: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "constants", tuple(self.constants))
        object.__setattr__(self, "functions", tuple((str(s), int(a)) for s, a in self.functions))
        object.__setattr__(self, "predicates", tuple((str(s), int(a)) for s, a in self.predicates))
        seen: set[str] = set()
        for sym in [*self.constants, *(s for s, _ in self.functions), *(s for s, _ in self.predicates)]:
            if sym in seen:
                raise ValueError(f"symbol {sym!r} declared twice")
            if not _IDENT.fullmatch(sym) or sym in _KEYWORDS:
                raise ValueError(f"invalid symbol name {sym!r}")
            seen.add(sym)
        for sym, arity in (*self.functions, *self.predicates):
            if arity < 1:
                raise ValueError(f"symbol {sym!r} needs arity >= 1")
        object.__setattr__(self, "_const_index", {c: i for i, c in enumerate(self.constants)})
        object.__setattr__(self, "_func_arity", dict(self.functions))
        object.__setattr__(self, "_pred_arity", dict(self.predicates))

    @classmethod
    def build(cls, constants: Iterable[str] = (), unary: Iterable[str] = (),
              binary: Iterable[str] = (), functions: Iterable[tuple[str, int]] = ()) -> "Signature":
        preds = [(p, 1) for p in unary] + [(p, 2) for p in binary]
        return cls(tuple(constants), tuple(functions), tuple(preds))

    @property
    def unary(self) -> tuple[str, ...]:
        return tuple(p for p, a in self.predicates if a == 1)

    @property
    def binary(self) -> tuple[str, ...]:
        return tuple(p for p, a in self.predicates if a == 2)

    def is_constant(self, sym: str) -> bool:
        return sym in self._const_index

    def constant_index(self, sym: str) -> int:
        return self._const_index[sym]

    def function_arity(self, sym: str) -> int | None:
        return self._func_arity.get(sym)

    def predicate_arity(self, sym: str) -> int | None:
        return self._pred_arity.get(sym)


# -- terms -----------------------------------------------------------------

@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Constant:
    symbol: str


@dataclass(frozen=True)
class Apply:
    function: str
    args: tuple["Term", ...]


Term = Union[Variable, Constant, Apply]


# -- formulas --------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    predicate: str
    terms: tuple[Term, ...]


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class ForAll:
    vars: tuple[str, ...]
    body: "Formula"


@dataclass(frozen=True)
class Exists:
    vars: tuple[str, ...]
    body: "Formula"


Formula = Union[Atom, Not, And, Or, Implies, ForAll, Exists]
BINARY = (And, Or, Implies)
QUANTIFIERS = (ForAll, Exists)


def term_variables(t: Term) -> Iterator[str]:
    if isinstance(t, Variable):
        yield t.name
    elif isinstance(t, Apply):
        for a in t.args:
            yield from term_variables(a)


def free_variables(f: Formula) -> tuple[str, ...]:
    """Variables not bound by a quantifier, in first-occurrence order."""
    out: dict[str, None] = {}

    def walk(g, bound: frozenset):
        if isinstance(g, Atom):
            for t in g.terms:
                for v in term_variables(t):
                    if v not in bound:
                        out.setdefault(v)
        elif isinstance(g, Not):
            walk(g.body, bound)
        elif isinstance(g, BINARY):
            walk(g.left, bound)
            walk(g.right, bound)
        else:
            walk(g.body, bound | frozenset(g.vars))

    walk(f, frozenset())
    return tuple(out)


def constants_of(f: Formula) -> tuple[str, ...]:
    """Constant symbols in first-occurrence order."""
    out: dict[str, None] = {}

    def term(t):
        if isinstance(t, Constant):
            out.setdefault(t.symbol)
        elif isinstance(t, Apply):
            for a in t.args:
                term(a)

    def walk(g):
        if isinstance(g, Atom):
            for t in g.terms:
                term(t)
        elif isinstance(g, Not):
            walk(g.body)
        elif isinstance(g, BINARY):
            walk(g.left)
            walk(g.right)
        else:
            walk(g.body)

    walk(f)
    return tuple(out)


# -- printer ---------------------------------------------------------------

_PREC = {Implies: 1, Or: 2, And: 3}
_OPS = {Implies: "->", Or: "|", And: "&"}


def print_term(t: Term) -> str:
    if isinstance(t, Variable):
        return t.name
    if isinstance(t, Constant):
        return t.symbol
    return f"{t.function}({','.join(print_term(a) for a in t.args)})"


def print_formula(f: Formula) -> str:
    """Canonical text with the fewest parentheses the grammar allows."""
    return _print(f, top=True)


def _print(f: Formula, top: bool = False) -> str:
    if isinstance(f, Atom):
        return f"{f.predicate}({','.join(print_term(t) for t in f.terms)})"
    if isinstance(f, Not):
        return "~" + _wrap(f.body, lambda c: isinstance(c, (*BINARY, *QUANTIFIERS)))
    if isinstance(f, QUANTIFIERS):
        word = "forall" if isinstance(f, ForAll) else "exists"
        body = _print(f.body, top=True)
        return f"{word} {','.join(f.vars)}: {body}"
    prec = _PREC[type(f)]
    if isinstance(f, Implies):
        # right-associative
        left = _wrap(f.left, lambda c: isinstance(c, QUANTIFIERS) or _prec(c) <= prec)
        right = _wrap(f.right, lambda c: isinstance(c, QUANTIFIERS) or _prec(c) < prec)
    else:
        left = _wrap(f.left, lambda c: isinstance(c, QUANTIFIERS) or _prec(c) < prec)
        right = _wrap(f.right, lambda c: isinstance(c, QUANTIFIERS) or _prec(c) <= prec)
    return f"{left} {_OPS[type(f)]} {right}"


def _prec(f: Formula) -> int:
    return _PREC.get(type(f), 9)


def _wrap(child: Formula, needs_parens) -> str:
    text = _print(child)
    return f"({text})" if needs_parens(child) else text


# -- lexer -----------------------------------------------------------------

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_KEYWORDS = {"forall", "exists"}
_TOKEN = re.compile(r"\s*(?:(->)|([~&|(),:])|([A-Za-z_][A-Za-z0-9_]*))")


@dataclass(frozen=True)
class _Tok:
    kind: str  # "op", "ident", "kw", "eof"
    text: str
    pos: int  # 1-based column


def _lex(text: str) -> list[_Tok]:
    toks = []
    i = 0
    n = len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        m = _TOKEN.match(text, i)
        if m is None or m.end() == i:
            raise ParseError(f"unexpected character {text[i]!r}", i + 1)
        start = m.start(m.lastindex)
        word = m.group(m.lastindex)
        if m.lastindex == 3:
            toks.append(_Tok("kw" if word in _KEYWORDS else "ident", word, start + 1))
        else:
            toks.append(_Tok("op", word, start + 1))
        i = m.end()
    toks.append(_Tok("eof", "", n + 1))
    return toks


# -- parser ----------------------------------------------------------------

class _Parser:
    def __init__(self, text: str, sig: Signature, free: Iterable[str]):
        self.toks = _lex(text)
        self.i = 0
        self.sig = sig
        self.scope: list[frozenset[str]] = [frozenset(free)]

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.peek()
        if tok.text != text or tok.kind not in ("op", "kw"):
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise ParseError(f"expected {text!r}, found {found}", tok.pos)
        return self.take()

    def bound(self, name: str) -> bool:
        return any(name in s for s in self.scope)

    def parse(self) -> Formula:
        f = self.implication()
        tok = self.peek()
        if tok.kind != "eof":
            raise ParseError(f"unexpected {tok.text!r}", tok.pos)
        return f

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.peek().text == "->":
            self.take()
            return Implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        left = self.conjunction()
        while self.peek().text == "|":
            self.take()
            left = Or(left, self.conjunction())
        return left

    def conjunction(self) -> Formula:
        left = self.unary()
        while self.peek().text == "&":
            self.take()
            left = And(left, self.unary())
        return left

    def unary(self) -> Formula:
        tok = self.peek()
        if tok.text == "~" and tok.kind == "op":
            self.take()
            return Not(self.unary())
        if tok.kind == "kw":
            return self.quantified()
        if tok.text == "(" and tok.kind == "op":
            self.take()
            f = self.implication()
            self.expect(")")
            return f
        if tok.kind == "ident":
            return self.atom()
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ParseError(f"expected a formula, found {found}", tok.pos)

    def quantified(self) -> Formula:
        kw = self.take()
        names = [self.variable_name()]
        while self.peek().text == ",":
            self.take()
            names.append(self.variable_name())
        if len(set(names)) != len(names):
            raise ParseError("variable repeated in quantifier", kw.pos)
        self.expect(":")
        self.scope.append(frozenset(names))
        try:
            body = self.implication()
        finally:
            self.scope.pop()
        cls = ForAll if kw.text == "forall" else Exists
        return cls(tuple(names), body)

    def variable_name(self) -> str:
        tok = self.take()
        if tok.kind != "ident":
            raise ParseError("expected a variable name", tok.pos)
        return tok.text

    def atom(self) -> Formula:
        tok = self.take()
        arity = self.sig.predicate_arity(tok.text)
        if arity is None:
            raise ParseError(f"unknown predicate {tok.text!r}", tok.pos)
        terms = self.arguments()
        if len(terms) != arity:
            raise ParseError(
                f"arity mismatch: predicate {tok.text!r} takes {arity} argument(s), got {len(terms)}", tok.pos)
        return Atom(tok.text, tuple(terms))

    def arguments(self) -> list[Term]:
        self.expect("(")
        terms = [self.term()]
        while self.peek().text == ",":
            self.take()
            terms.append(self.term())
        self.expect(")")
        return terms

    def term(self) -> Term:
        tok = self.peek()
        if tok.kind != "ident":
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise ParseError(f"expected a term, found {found}", tok.pos)
        self.take()
        if self.peek().text == "(":
            arity = self.sig.function_arity(tok.text)
            if arity is None:
                raise ParseError(f"unknown function {tok.text!r}", tok.pos)
            args = self.arguments()
            if len(args) != arity:
                raise ParseError(
                    f"arity mismatch: function {tok.text!r} takes {arity} argument(s), got {len(args)}", tok.pos)
            return Apply(tok.text, tuple(args))
        if self.bound(tok.text):
            return Variable(tok.text)
        if self.sig.is_constant(tok.text):
            return Constant(tok.text)
        if self.sig.predicate_arity(tok.text) is not None or self.sig.function_arity(tok.text):
            raise ParseError(f"symbol {tok.text!r} used as a term", tok.pos)
        raise ParseError(f"unbound variable {tok.text!r}", tok.pos)


def parse_formula(text: str, sig: Signature, free: Iterable[str] = ()) -> Formula:
    """Parse one formula. Names in ``free`` are accepted as free variables."""
    return _Parser(text, sig, free).parse()


# -- theory files ----------------------------------------------------------

_HEADER = re.compile(r"(const|pred(\d+)|func(\d+))\b")


def parse_theory(text: str) -> tuple[Signature, list[Formula]]:
    """Read a theory file: header declarations plus one closed clause per line."""
    constants: list[str] = []
    preds: list[tuple[str, int]] = []
    funcs: list[tuple[str, int]] = []
    clause_lines: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _HEADER.match(line)
        if m:
            names = line[m.end():].split()
            if m.group(1) == "const":
                constants.extend(names)
            elif m.group(2) is not None:
                preds.extend((p, int(m.group(2))) for p in names)
            else:
                funcs.extend((f, int(m.group(3))) for f in names)
        else:
            clause_lines.append((lineno, line))
    sig = Signature(tuple(constants), tuple(funcs), tuple(preds))
    clauses = []
    for lineno, line in clause_lines:
        try:
            clauses.append(parse_formula(line, sig))
        except ParseError as exc:
            raise ParseError(exc.reason, exc.position, lineno) from None
    return sig, clauses


def dump_theory(sig: Signature, clauses: Iterable[Formula]) -> str:
    lines = []
    if sig.constants:
        lines.append("const " + " ".join(sig.constants))
    by_arity: dict[int, list[str]] = {}
    for p, a in sig.predicates:
        by_arity.setdefault(a, []).append(p)
    for a in sorted(by_arity):
        lines.append(f"pred{a} " + " ".join(by_arity[a]))
    f_by_arity: dict[int, list[str]] = {}
    for f, a in sig.functions:
        f_by_arity.setdefault(a, []).append(f)
    for a in sorted(f_by_arity):
        lines.append(f"func{a} " + " ".join(f_by_arity[a]))
    lines.extend(print_formula(c) for c in clauses)
    return "\n".join(lines) + "\n"
