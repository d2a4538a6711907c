"""Parser and evaluator for the constraint/query language and spec documents.

Grammar (EBNF):

    spec    := stmt* ;
    stmt    := "feature" IDENT "{" value ("," value)* "}" ["ordered"] ";"
             | "entity" IDENT "{" IDENT "=" value ("," IDENT "=" value)* "}" ";"
             | "constraint" formula ";"
             | "immutable" IDENT ";"
             | "only_increase" IDENT ";" | "only_decrease" IDENT ";"
             | "marginal" IDENT "{" value ":" NUMBER ("," value ":" NUMBER)* "}" ";" ;
    formula := disj ("->" formula)? ;
    disj    := conj ("or" conj)* ;
    conj    := lit ("and" lit)* ;
    lit     := ["not"] atom ;
    atom    := "changed" "(" IDENT ")"
             | "orig" "(" IDENT ")" ("="|"!=") value
             | IDENT ("="|"!=") value
             | "label" ("="|"!=") value
             | "(" formula ")" ;
    value   := IDENT | QUOTED ;

Keywords are case-sensitive and reserved; identifiers are
``[A-Za-z_][A-Za-z0-9_]*``; ``%`` starts a line comment. ``->`` is
right-associative material implication with the lowest precedence
(not > and > or > ->).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

from .errors import CfxError
from .model import (
    Entity,
    FeatureDef,
    FeatureSchema,
    PROB_TOL,
    ProductDistribution,
    SchemaError,
)


class SpecLangError(CfxError):
    """Base for language errors; carries a 1-based position when known."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        self.reason = message
        if line is not None:
            message = f"{line}:{col}: {message}"
        super().__init__(message)


class ParseError(SpecLangError):
    """Syntax error; ``expected`` names the tokens that would have parsed."""

    def __init__(self, message: str, line: int, col: int, expected: Sequence[str] = ()):
        self.expected = tuple(expected)
        if self.expected:
            message = f"{message} (expected {' or '.join(self.expected)})"
        super().__init__(message, line, col)


class UnknownName(SpecLangError):
    """A feature, value or class token does not resolve."""


class SpecError(SpecLangError):
    """A structurally valid document violates a semantic rule."""


# ---------------------------------------------------------------------------
# Formula AST


@dataclass(frozen=True)
class Changed:
    feature: str


@dataclass(frozen=True)
class ValueIs:
    feature: str
    value: str
    negate: bool = False


@dataclass(frozen=True)
class OrigIs:
    feature: str
    value: str
    negate: bool = False


@dataclass(frozen=True)
class LabelIs:
    label: str
    negate: bool = False


@dataclass(frozen=True)
class Not:
    inner: "Formula"


@dataclass(frozen=True)
class And:
    items: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    items: tuple["Formula", ...]


@dataclass(frozen=True)
class Implies:
    antecedent: "Formula"
    consequent: "Formula"


Formula = Union[Changed, ValueIs, OrigIs, LabelIs, Not, And, Or, Implies]


@dataclass(frozen=True)
class EvalContext:
    """What a formula sees: the original entity, one counterfactual version,
    the set of changed features, and the counterfactual's label."""

    original: Entity
    counterfactual: Entity
    changed: frozenset[str]
    label: str


def eval_formula(f: Formula, ctx: EvalContext) -> bool:
    t = type(f)
    if t is Changed:
        return f.feature in ctx.changed
    if t is ValueIs:
        return (ctx.counterfactual[f.feature] == f.value) != f.negate
    if t is OrigIs:
        return (ctx.original[f.feature] == f.value) != f.negate
    if t is LabelIs:
        return (ctx.label == f.label) != f.negate
    if t is Not:
        return not eval_formula(f.inner, ctx)
    if t is And:
        return all(eval_formula(x, ctx) for x in f.items)
    if t is Or:
        return any(eval_formula(x, ctx) for x in f.items)
    if t is Implies:
        return (not eval_formula(f.antecedent, ctx)) or eval_formula(f.consequent, ctx)
    raise TypeError(f"not a formula node: {f!r}")


_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

KEYWORDS = frozenset(
    [
        "feature", "entity", "constraint", "immutable", "only_increase",
        "only_decrease", "marginal", "ordered", "changed", "orig", "label",
        "not", "and", "or",
    ]
)


def _print_value(v: str) -> str:
    if _IDENT_RE.match(v) and v not in KEYWORDS:
        return v
    return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _prec(f: Formula) -> int:
    t = type(f)
    if t is Implies:
        return 0
    if t is Or:
        return 1
    if t is And:
        return 2
    if t is Not:
        return 3
    return 4


def format_formula(f: Formula) -> str:
    """Print a formula so that reparsing yields the same AST."""

    def wrap(x: Formula, need: int) -> str:
        s = format_formula(x)
        return f"({s})" if _prec(x) < need else s

    t = type(f)
    if t is Changed:
        return f"changed({f.feature})"
    if t is ValueIs:
        return f"{f.feature} {'!=' if f.negate else '='} {_print_value(f.value)}"
    if t is OrigIs:
        return f"orig({f.feature}) {'!=' if f.negate else '='} {_print_value(f.value)}"
    if t is LabelIs:
        return f"label {'!=' if f.negate else '='} {_print_value(f.label)}"
    if t is Not:
        return "not " + wrap(f.inner, 4)
    if t is And:
        return " and ".join(wrap(x, 3) for x in f.items)
    if t is Or:
        return " or ".join(wrap(x, 2) for x in f.items)
    if t is Implies:
        return f"{wrap(f.antecedent, 1)} -> {wrap(f.consequent, 0)}"
    raise TypeError(f"not a formula node: {f!r}")


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<comment>%[^\n]*)
      | (?P<arrow>->)
      | (?P<neq>!=)
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<number>[0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?)
      | (?P<quoted>"(?:[^"\\\n]|\\.)*")
      | (?P<badquote>"(?:[^"\\\n]|\\.)*)
      | (?P<punct>[{}(),;:=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def _lex(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line = 1
    line_start = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        lexeme = m.group()
        col = pos - line_start + 1
        if kind == "badquote":
            raise ParseError("unterminated string literal", line, col)
        if kind == "ident":
            tokens.append(Token(lexeme if lexeme in KEYWORDS else "ident", lexeme, line, col))
        elif kind == "punct":
            tokens.append(Token(lexeme, lexeme, line, col))
        elif kind in ("arrow", "neq"):
            tokens.append(Token(lexeme, lexeme, line, col))
        elif kind in ("number", "quoted"):
            tokens.append(Token(kind, lexeme, line, col))
        # ws and comment tokens are dropped
        nl = lexeme.count("\n")
        if nl:
            line += nl
            line_start = pos + lexeme.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, n - line_start + 1))
    return tokens


def _unquote(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text[1:-1])


_DISPLAY = {
    "ident": "identifier",
    "quoted": "quoted value",
    "number": "number",
    "eof": "end of input",
}


def _display(kind: str) -> str:
    return _DISPLAY.get(kind, f"'{kind}'")


_MAX_DEPTH = 200


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0
        self.depth = 0
        # deferred name checks: (kind, payload..., token)
        self.checks: list[tuple] = []

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, *kinds: str) -> Token:
        tok = self.peek()
        if tok.kind in kinds:
            return self.advance()
        raise ParseError(
            f"unexpected {_display(tok.kind)}",
            tok.line,
            tok.col,
            expected=[_display(k) for k in kinds],
        )

    def parse_value(self) -> tuple[str, Token]:
        tok = self.expect("ident", "quoted")
        return (_unquote(tok.text) if tok.kind == "quoted" else tok.text), tok

    # -- formulas -----------------------------------------------------------

    def parse_formula(self) -> Formula:
        self.depth += 1
        if self.depth > _MAX_DEPTH:
            tok = self.peek()
            raise ParseError("formula too deeply nested", tok.line, tok.col)
        try:
            left = self.parse_disj()
            if self.peek().kind == "->":
                self.advance()
                right = self.parse_formula()
                return Implies(left, right)
            return left
        finally:
            self.depth -= 1

    def parse_disj(self) -> Formula:
        items = [self.parse_conj()]
        while self.peek().kind == "or":
            self.advance()
            items.append(self.parse_conj())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def parse_conj(self) -> Formula:
        items = [self.parse_lit()]
        while self.peek().kind == "and":
            self.advance()
            items.append(self.parse_lit())
        return items[0] if len(items) == 1 else And(tuple(items))

    def parse_lit(self) -> Formula:
        if self.peek().kind == "not":
            self.advance()
            return Not(self.parse_atom())
        return self.parse_atom()

    def parse_atom(self) -> Formula:
        tok = self.peek()
        if tok.kind == "(":
            self.advance()
            inner = self.parse_formula()
            self.expect(")")
            return inner
        if tok.kind == "changed":
            self.advance()
            self.expect("(")
            name = self.expect("ident")
            self.expect(")")
            self.checks.append(("feature", name.text, name))
            return Changed(name.text)
        if tok.kind == "orig":
            self.advance()
            self.expect("(")
            name = self.expect("ident")
            self.expect(")")
            negate = self.expect("=", "!=").kind == "!="
            value, vtok = self.parse_value()
            self.checks.append(("feature", name.text, name))
            self.checks.append(("value", name.text, value, vtok))
            return OrigIs(name.text, value, negate)
        if tok.kind == "label":
            self.advance()
            negate = self.expect("=", "!=").kind == "!="
            value, vtok = self.parse_value()
            self.checks.append(("label", value, vtok))
            return LabelIs(value, negate)
        if tok.kind == "ident":
            name = self.advance()
            negate = self.expect("=", "!=").kind == "!="
            value, vtok = self.parse_value()
            self.checks.append(("feature", name.text, name))
            self.checks.append(("value", name.text, value, vtok))
            return ValueIs(name.text, value, negate)
        raise ParseError(
            f"unexpected {_display(tok.kind)}",
            tok.line,
            tok.col,
            expected=["'changed'", "'orig'", "'label'", "identifier", "'('", "'not'"],
        )


def _run_checks(checks: Iterable[tuple], schema: FeatureSchema, classes: Sequence[str] | None) -> None:
    for entry in checks:
        kind = entry[0]
        tok: Token = entry[-1]
        if kind == "feature":
            name = entry[1]
            if name not in schema:
                raise UnknownName(f"unknown feature {name!r}", tok.line, tok.col)
        elif kind == "value":
            name, value = entry[1], entry[2]
            if name in schema and value not in schema.domain(name):
                raise UnknownName(
                    f"{name}: value {value!r} not in domain", tok.line, tok.col
                )
        elif kind == "label":
            if classes is not None and entry[1] not in classes:
                raise UnknownName(f"unknown class {entry[1]!r}", tok.line, tok.col)


def parse_formula(text: str, schema: FeatureSchema, classes: Sequence[str] | None = None) -> Formula:
    """Parse and name-check one formula. Label atoms are only checked when
    ``classes`` is given; pass the classifier's class list when you have it."""
    parser = _Parser(_lex(text))
    f = parser.parse_formula()
    parser.expect("eof")
    _run_checks(parser.checks, schema, classes)
    return f


def check_formula(f: Formula, schema: FeatureSchema, classes: Sequence[str] | None = None) -> Formula:
    """Name-check an already-built AST (no positions available)."""
    t = type(f)
    if t is Changed:
        if f.feature not in schema:
            raise UnknownName(f"unknown feature {f.feature!r}")
    elif t in (ValueIs, OrigIs):
        if f.feature not in schema:
            raise UnknownName(f"unknown feature {f.feature!r}")
        if f.value not in schema.domain(f.feature):
            raise UnknownName(f"{f.feature}: value {f.value!r} not in domain")
    elif t is LabelIs:
        if classes is not None and f.label not in classes:
            raise UnknownName(f"unknown class {f.label!r}")
    elif t is Not:
        check_formula(f.inner, schema, classes)
    elif t in (And, Or):
        for x in f.items:
            check_formula(x, schema, classes)
    elif t is Implies:
        check_formula(f.antecedent, schema, classes)
        check_formula(f.consequent, schema, classes)
    return f


# ---------------------------------------------------------------------------
# Spec documents


@dataclass(frozen=True)
class DirectionRule:
    """Actionability statement on an ordered feature: counterfactual values
    must lie strictly above (increase) or below the entity's original value.
    The concrete constraint formula depends on the entity, so it is expanded
    by :meth:`SpecDocument.constraints_for`."""

    feature: str
    increase: bool


@dataclass
class SpecDocument:
    schema: FeatureSchema
    entities: dict[str, Entity]
    constraints: tuple[Formula, ...]
    directional: tuple[DirectionRule, ...]
    marginals: dict[str, dict[str, float]]

    def constraints_for(self, entity: Entity) -> tuple[Formula, ...]:
        """All hard constraints for this entity, including directional
        actionability rules expanded against its original values."""
        out = list(self.constraints)
        for rule in self.directional:
            domain = self.schema.domain(rule.feature)
            i = domain.index(entity[rule.feature])
            allowed = domain[i + 1 :] if rule.increase else domain[:i]
            keep: Formula = Not(Changed(rule.feature))
            if allowed:
                keep = Or((keep, *(ValueIs(rule.feature, v) for v in allowed)))
            out.append(keep)
        return tuple(out)

    def product_distribution(self) -> ProductDistribution:
        """Declared marginals, uniform for features without a declaration."""
        table = {}
        for f in self.schema.features:
            table[f.name] = self.marginals.get(
                f.name, {v: 1.0 / len(f.domain) for v in f.domain}
            )
        return ProductDistribution(self.schema, table)


def parse_spec(text: str) -> SpecDocument:
    """Parse a spec document; every error carries a line:column position.

    ``immutable F`` desugars to the constraint ``not changed(F)`` here;
    directional statements are recorded and expanded per entity later.
    Label atoms in constraints are name-checked once a classifier is known
    (see :func:`check_formula`), since documents declare no class set.
    """
    parser = _Parser(_lex(text))
    feature_stmts: list[tuple[Token, list[tuple[str, Token]], bool]] = []
    entity_stmts: list[tuple[Token, list[tuple[Token, str, Token]]]] = []
    constraint_stmts: list[tuple[Formula, list[tuple]]] = []
    immutable_stmts: list[Token] = []
    direction_stmts: list[tuple[Token, bool]] = []
    marginal_stmts: list[tuple[Token, list[tuple[str, Token, float]]]] = []

    stmt_kinds = (
        "feature", "entity", "constraint", "immutable",
        "only_increase", "only_decrease", "marginal",
    )
    while parser.peek().kind != "eof":
        tok = parser.peek()
        if tok.kind == "feature":
            parser.advance()
            name = parser.expect("ident")
            parser.expect("{")
            values = [parser.parse_value()]
            while parser.peek().kind == ",":
                parser.advance()
                values.append(parser.parse_value())
            parser.expect("}")
            ordered = False
            if parser.peek().kind == "ordered":
                parser.advance()
                ordered = True
            parser.expect(";")
            feature_stmts.append((name, values, ordered))
        elif tok.kind == "entity":
            parser.advance()
            name = parser.expect("ident")
            parser.expect("{")
            assigns = []
            while True:
                fname = parser.expect("ident")
                parser.expect("=")
                value, vtok = parser.parse_value()
                assigns.append((fname, value, vtok))
                if parser.peek().kind != ",":
                    break
                parser.advance()
            parser.expect("}")
            parser.expect(";")
            entity_stmts.append((name, assigns))
        elif tok.kind == "constraint":
            parser.advance()
            start = len(parser.checks)
            f = parser.parse_formula()
            parser.expect(";")
            constraint_stmts.append((f, parser.checks[start:]))
        elif tok.kind == "immutable":
            parser.advance()
            name = parser.expect("ident")
            parser.expect(";")
            immutable_stmts.append(name)
        elif tok.kind in ("only_increase", "only_decrease"):
            parser.advance()
            name = parser.expect("ident")
            parser.expect(";")
            direction_stmts.append((name, tok.kind == "only_increase"))
        elif tok.kind == "marginal":
            parser.advance()
            name = parser.expect("ident")
            parser.expect("{")
            entries = []
            while True:
                value, vtok = parser.parse_value()
                parser.expect(":")
                num = parser.expect("number")
                entries.append((value, vtok, float(num.text)))
                if parser.peek().kind != ",":
                    break
                parser.advance()
            parser.expect("}")
            parser.expect(";")
            marginal_stmts.append((name, entries))
        else:
            raise ParseError(
                f"unexpected {_display(tok.kind)}",
                tok.line,
                tok.col,
                expected=[f"'{k}'" for k in stmt_kinds],
            )

    # build the schema
    defs: dict[str, FeatureDef] = {}
    for name, values, ordered in feature_stmts:
        if name.text in defs:
            raise SpecError(f"duplicate feature {name.text!r}", name.line, name.col)
        seen_vals: dict[str, Token] = {}
        for value, vtok in values:
            if value in seen_vals:
                raise SpecError(
                    f"{name.text}: duplicate domain value {value!r}", vtok.line, vtok.col
                )
            seen_vals[value] = vtok
        defs[name.text] = FeatureDef(name.text, tuple(v for v, _ in values), ordered)
    try:
        schema = FeatureSchema(tuple(defs.values()))
    except SchemaError as err:
        raise SpecError(str(err), 1, 1) from None

    # entities
    entities: dict[str, Entity] = {}
    for name, assigns in entity_stmts:
        if name.text in entities:
            raise SpecError(f"duplicate entity {name.text!r}", name.line, name.col)
        raw: dict[str, str] = {}
        for fname, value, vtok in assigns:
            if fname.text not in schema:
                raise UnknownName(f"unknown feature {fname.text!r}", fname.line, fname.col)
            if fname.text in raw:
                raise SpecError(
                    f"{name.text}: feature {fname.text!r} assigned twice",
                    fname.line,
                    fname.col,
                )
            if value not in schema.domain(fname.text):
                raise UnknownName(
                    f"{fname.text}: value {value!r} not in domain", vtok.line, vtok.col
                )
            raw[fname.text] = value
        missing = [n for n in schema.names if n not in raw]
        if missing:
            raise SpecError(
                f"entity {name.text!r} is missing features {missing}",
                name.line,
                name.col,
            )
        entities[name.text] = Entity(schema, tuple(raw[n] for n in schema.names))

    # constraints (label atoms deferred until a classifier is known)
    constraints: list[Formula] = []
    for f, checks in constraint_stmts:
        _run_checks(checks, schema, classes=None)
        constraints.append(f)
    for name in immutable_stmts:
        if name.text not in schema:
            raise UnknownName(f"unknown feature {name.text!r}", name.line, name.col)
        constraints.append(Not(Changed(name.text)))

    directional: list[DirectionRule] = []
    for name, increase in direction_stmts:
        if name.text not in schema:
            raise UnknownName(f"unknown feature {name.text!r}", name.line, name.col)
        if not schema.feature(name.text).ordered:
            kw = "only_increase" if increase else "only_decrease"
            raise SpecError(
                f"{kw} requires an ordered feature, {name.text!r} is unordered",
                name.line,
                name.col,
            )
        directional.append(DirectionRule(name.text, increase))

    marginals: dict[str, dict[str, float]] = {}
    for name, entries in marginal_stmts:
        if name.text not in schema:
            raise UnknownName(f"unknown feature {name.text!r}", name.line, name.col)
        if name.text in marginals:
            raise SpecError(f"duplicate marginal for {name.text!r}", name.line, name.col)
        domain = schema.domain(name.text)
        row: dict[str, float] = {}
        for value, vtok, prob in entries:
            if value not in domain:
                raise UnknownName(
                    f"{name.text}: value {value!r} not in domain", vtok.line, vtok.col
                )
            if value in row:
                raise SpecError(
                    f"{name.text}: duplicate marginal value {value!r}", vtok.line, vtok.col
                )
            if prob < 0:
                raise SpecError(
                    f"{name.text}: negative probability for {value!r}", vtok.line, vtok.col
                )
            row[value] = prob
        missing = [v for v in domain if v not in row]
        if missing:
            raise SpecError(
                f"marginal for {name.text!r} is missing values {missing}",
                name.line,
                name.col,
            )
        total = sum(row.values())
        if abs(total - 1.0) > PROB_TOL:
            raise SpecError(
                f"marginal for {name.text!r} sums to {total}, not 1", name.line, name.col
            )
        marginals[name.text] = row

    return SpecDocument(
        schema=schema,
        entities=entities,
        constraints=tuple(constraints),
        directional=tuple(directional),
        marginals=marginals,
    )


def format_spec(doc: SpecDocument) -> str:
    """Print a document so that reparsing yields an equal document."""
    lines = []
    for f in doc.schema.features:
        domain = ", ".join(_print_value(v) for v in f.domain)
        suffix = " ordered" if f.ordered else ""
        lines.append(f"feature {f.name} {{{domain}}}{suffix};")
    for name, entity in doc.entities.items():
        assigns = ", ".join(
            f"{n} = {_print_value(v)}" for n, v in zip(doc.schema.names, entity.values)
        )
        lines.append(f"entity {name} {{{assigns}}};")
    for c in doc.constraints:
        lines.append(f"constraint {format_formula(c)};")
    for rule in doc.directional:
        kw = "only_increase" if rule.increase else "only_decrease"
        lines.append(f"{kw} {rule.feature};")
    for name, row in doc.marginals.items():
        entries = ", ".join(
            f"{_print_value(v)}: {row[v]!r}" for v in doc.schema.domain(name)
        )
        lines.append(f"marginal {name} {{{entries}}};")
    return "\n".join(lines) + ("\n" if lines else "")
