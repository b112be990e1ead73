"""AgentSpeak subset: terms, annotated literals, plans, parser and matcher.

The language is the Jason-style fragment needed by energy-aware sensor
programs::

    e_meas_temperature(30)[persist("fram")].
    transmit_power(8)[impact(101)].

    +!broadcast(A) : transmit_power(P)[impact(E)] & A > E
        <- start_ble_adv(P).

Initial beliefs are ground literals, optionally annotated.  Plans have a
trigger (``+!g``, ``-!g``, ``+b``, ``-b``), an optional context (a
conjunction of literal patterns and numeric comparisons) and a body of
external actions, sub-goals, belief updates and the three energy-related
internal actions.  Arithmetic is limited to ``+`` and ``-``.
"""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Union

__all__ = [
    "Atom", "Number", "String", "Variable", "Structure", "BinOp", "Term",
    "Annotation", "Literal", "Comparison", "TriggerKind", "Trigger",
    "Action", "SubGoal", "InternalAction", "BeliefUpdate", "Plan",
    "AgentProgram", "PlanInstance", "AslSyntaxError", "SemanticError",
    "INTERNAL_ACTIONS", "parse_program", "parse_literal", "format_program",
    "unify", "unify_all", "solve_context", "eval_context", "evaluate",
    "substitute", "is_ground", "term_vars",
]

INTERNAL_ACTIONS = frozenset({"energy_checkpoint", "update_estimate", "deep_sleep"})
RELATIONAL_OPS = (">=", "<=", "\\==", "==", ">", "<")
PERSIST_MEDIA = ("none", "fram", "flash")


# --------------------------------------------------------------------------
# Terms
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Number:
    value: float

    def __str__(self) -> str:
        return _fmt_number(self.value)


@dataclass(frozen=True)
class String:
    value: str

    def __str__(self) -> str:
        escaped = self.value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'


@dataclass(frozen=True)
class Variable:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Structure:
    functor: str
    args: tuple

    def __post_init__(self):
        if not self.args:
            raise ValueError("structures need at least one argument; use Atom")

    def __str__(self) -> str:
        return f"{self.functor}({_fmt_args(self.args)})"


@dataclass(frozen=True)
class BinOp:
    """Unevaluated ``left op right`` with op in {'+', '-'}."""

    op: str
    left: "Term"
    right: "Term"

    def __str__(self) -> str:
        right = f"({self.right})" if isinstance(self.right, BinOp) else str(self.right)
        return f"{self.left} {self.op} {right}"


Term = Union[Atom, Number, String, Variable, Structure, BinOp]
Substitution = Mapping[str, Term]


def _fmt_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _fmt_args(args: Iterable) -> str:
    return ", ".join(str(a) for a in args)


# --------------------------------------------------------------------------
# Literals, plans, programs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Annotation:
    functor: str
    args: tuple = ()

    def __str__(self) -> str:
        return f"{self.functor}({_fmt_args(self.args)})" if self.args else self.functor


@dataclass(frozen=True)
class Literal:
    functor: str
    args: tuple = ()
    annotations: tuple = ()
    negated: bool = False

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def key(self) -> tuple[str, int]:
        return (self.functor, len(self.args))

    def annotation(self, functor: str) -> Annotation | None:
        for ann in self.annotations:
            if ann.functor == functor:
                return ann
        return None

    def without_annotations(self) -> "Literal":
        return Literal(self.functor, self.args, (), self.negated)

    def __str__(self) -> str:
        text = ("~" if self.negated else "") + self.functor
        if self.args:
            text += f"({_fmt_args(self.args)})"
        if self.annotations:
            text += f"[{_fmt_args(self.annotations)}]"
        return text


@dataclass(frozen=True)
class Comparison:
    op: str
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"{self.left} {self.op} {self.right}"


class TriggerKind(enum.Enum):
    GOAL_ADD = "+!"
    GOAL_DEL = "-!"
    BELIEF_ADD = "+"
    BELIEF_DEL = "-"

    @property
    def is_goal(self) -> bool:
        return self in (TriggerKind.GOAL_ADD, TriggerKind.GOAL_DEL)


@dataclass(frozen=True)
class Trigger:
    kind: TriggerKind
    literal: Literal

    def __str__(self) -> str:
        return f"{self.kind.value}{self.literal}"


@dataclass(frozen=True)
class Action:
    name: str
    args: tuple = ()
    line: int = field(default=0, compare=False)

    def __str__(self) -> str:
        return f"{self.name}({_fmt_args(self.args)})"


@dataclass(frozen=True)
class InternalAction:
    name: str
    args: tuple = ()
    line: int = field(default=0, compare=False)

    def __str__(self) -> str:
        return f"{self.name}({_fmt_args(self.args)})"


@dataclass(frozen=True)
class SubGoal:
    literal: Literal
    line: int = field(default=0, compare=False)

    def __str__(self) -> str:
        return f"!{self.literal}"


@dataclass(frozen=True)
class BeliefUpdate:
    add: bool
    literal: Literal
    line: int = field(default=0, compare=False)

    def __str__(self) -> str:
        return ("+" if self.add else "-") + str(self.literal)


Step = Union[Action, InternalAction, SubGoal, BeliefUpdate]


@dataclass(frozen=True)
class Plan:
    trigger: Trigger
    context: tuple = ()
    body: tuple = ()
    declaration_index: int = 0
    line: int = field(default=0, compare=False)

    def __str__(self) -> str:
        text = str(self.trigger)
        if self.context:
            text += " : " + " & ".join(str(c) for c in self.context)
        if self.body:
            text += "\n    <- " + ";\n       ".join(str(s) for s in self.body)
        return text + "."


@dataclass(frozen=True)
class AgentProgram:
    initial_beliefs: tuple = ()
    plans: tuple = ()

    def external_actions(self) -> list[Action]:
        return [s for p in self.plans for s in p.body if isinstance(s, Action)]


@dataclass(frozen=True)
class PlanInstance:
    plan: Plan
    bindings: dict


def format_program(program: AgentProgram) -> str:
    """Canonical source text; reparses to an identical program."""
    parts = [f"{b}." for b in program.initial_beliefs]
    if program.plans:
        if parts:
            parts.append("")
        parts.extend(f"{p}\n" for p in program.plans)
    return "\n".join(parts).rstrip("\n") + "\n"


# --------------------------------------------------------------------------
# Errors
# --------------------------------------------------------------------------


class AslSyntaxError(SyntaxError):
    def __init__(self, message: str, line: int, column: int, source_line: str = ""):
        super().__init__(f"{message} (line {line}, column {column})")
        self.msg = message
        self.lineno = line
        self.offset = column
        self.text = source_line

    @property
    def line(self) -> int:
        return self.lineno

    @property
    def column(self) -> int:
        return self.offset


class SemanticError(ValueError):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"{message} (line {line})" if line else message)
        self.line = line


# --------------------------------------------------------------------------
# Lexer
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<atom>[a-z][A-Za-z0-9_]*)
  | (?P<op><-|>=|<=|\\==|==|[-+!~&:;,.()\[\]<>])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise AslSyntaxError(
                f"unexpected character {source[pos]!r}", line, pos - line_start + 1,
                _line_text(source, line),
            )
        kind = m.lastgroup
        text = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, text, line, pos - line_start + 1))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


def _line_text(source: str, line: int) -> str:
    lines = source.splitlines()
    return lines[line - 1] if 0 < line <= len(lines) else ""


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0
        self._anon = itertools.count()

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> _Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def at(self, *texts: str) -> bool:
        return self.tok.kind in ("op",) and self.tok.text in texts

    def advance(self) -> _Token:
        tok = self.tok
        self.i += 1
        return tok

    def error(self, message: str, tok: _Token | None = None) -> AslSyntaxError:
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return AslSyntaxError(f"{message}, found {found}", tok.line, tok.column,
                              _line_text(self.source, tok.line))

    def expect(self, text: str) -> _Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        return self.advance()

    # program ---------------------------------------------------------

    def program(self) -> AgentProgram:
        beliefs, plans = [], []
        while self.tok.kind != "eof":
            if self.at("+", "-"):
                plans.append(self.plan(len(plans)))
            elif self.tok.kind == "atom" or self.at("~"):
                start = self.tok
                lit = self.literal()
                self.expect(".")
                _check_ground_belief(lit, start.line)
                beliefs.append(lit)
            else:
                raise self.error("expected a belief or a plan")
        return AgentProgram(tuple(beliefs), tuple(plans))

    def plan(self, index: int) -> Plan:
        start = self.advance()
        goal = False
        if self.at("!"):
            self.advance()
            goal = True
        kind = {("+", True): TriggerKind.GOAL_ADD, ("-", True): TriggerKind.GOAL_DEL,
                ("+", False): TriggerKind.BELIEF_ADD,
                ("-", False): TriggerKind.BELIEF_DEL}[(start.text, goal)]
        trigger = Trigger(kind, self.literal())
        context: tuple = ()
        body: tuple = ()
        if self.at(":"):
            self.advance()
            context = self.context()
        if self.at("<-"):
            self.advance()
            body = self.body()
        self.expect(".")
        plan = Plan(trigger, context, body, index, start.line)
        _check_plan(plan)
        return plan

    def context(self) -> tuple:
        if self.tok.kind == "atom" and self.tok.text == "true" and not self.peek().text == "(":
            self.advance()
            return ()
        items = [self.context_item()]
        while self.at("&"):
            self.advance()
            items.append(self.context_item())
        return tuple(items)

    def context_item(self):
        tok = self.tok
        if self.at("~"):
            return self.literal()
        if tok.kind == "atom":
            lit = self.literal()
            if not self.at(*RELATIONAL_OPS, "+", "-"):
                return lit
            if lit.annotations or lit.negated:
                raise self.error("annotated literal used as comparison operand")
            left = self.additive_tail(Structure(lit.functor, lit.args) if lit.args else Atom(lit.functor))
        else:
            left = self.expr()
        if not self.at(*RELATIONAL_OPS):
            raise self.error("expected a relational operator")
        op = self.advance().text
        return Comparison(op, left, self.expr())

    def body(self) -> tuple:
        steps = [self.step()]
        while self.at(";"):
            self.advance()
            steps.append(self.step())
        return tuple(steps)

    def step(self):
        tok = self.tok
        if self.at("!"):
            self.advance()
            return SubGoal(self.literal(), tok.line)
        if self.at("+", "-"):
            self.advance()
            return BeliefUpdate(tok.text == "+", self.literal(), tok.line)
        if tok.kind != "atom":
            raise self.error("expected a body step")
        name = self.advance().text
        args: tuple = ()
        if self.at("("):
            args = self.arguments(allow_empty=True)
        if name in INTERNAL_ACTIONS:
            return InternalAction(name, args, tok.line)
        return Action(name, args, tok.line)

    # literals and terms ----------------------------------------------

    def literal(self) -> Literal:
        negated = False
        if self.at("~"):
            self.advance()
            negated = True
        if self.tok.kind != "atom":
            raise self.error("expected a literal")
        functor = self.advance().text
        args: tuple = ()
        if self.at("("):
            args = self.arguments(allow_empty=False)
        annotations: tuple = ()
        if self.at("["):
            annotations = self.annotations()
        return Literal(functor, args, annotations, negated)

    def annotations(self) -> tuple:
        self.expect("[")
        items = []
        if not self.at("]"):
            items.append(self.annotation())
            while self.at(","):
                self.advance()
                items.append(self.annotation())
        self.expect("]")
        return tuple(items)

    def annotation(self) -> Annotation:
        if self.tok.kind != "atom":
            raise self.error("expected an annotation")
        functor = self.advance().text
        args: tuple = ()
        if self.at("("):
            args = self.arguments(allow_empty=False)
        return Annotation(functor, args)

    def arguments(self, allow_empty: bool) -> tuple:
        self.expect("(")
        args = []
        if self.at(")"):
            if not allow_empty:
                raise self.error("empty argument list")
        else:
            args.append(self.expr())
            while self.at(","):
                self.advance()
                args.append(self.expr())
        self.expect(")")
        return tuple(args)

    def expr(self) -> Term:
        return self.additive_tail(self.primary())

    def additive_tail(self, left: Term) -> Term:
        while self.at("+", "-"):
            op = self.advance().text
            left = BinOp(op, left, self.primary())
        return left

    def primary(self) -> Term:
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return Number(float(tok.text))
        if tok.kind == "string":
            self.advance()
            return String(re.sub(r"\\(.)", r"\1", tok.text[1:-1]))
        if tok.kind == "var":
            self.advance()
            if tok.text == "_":
                return Variable(f"_{next(self._anon)}")
            return Variable(tok.text)
        if tok.kind == "atom":
            self.advance()
            if self.at("("):
                return Structure(tok.text, self.arguments(allow_empty=False))
            return Atom(tok.text)
        if self.at("-"):
            self.advance()
            inner = self.primary()
            if isinstance(inner, Number):
                return Number(-inner.value)
            return BinOp("-", Number(0.0), inner)
        if self.at("("):
            self.advance()
            inner = self.expr()
            self.expect(")")
            return inner
        raise self.error("expected a term")


def parse_program(source: str) -> AgentProgram:
    """Parse agent source text.

    Raises :class:`AslSyntaxError` (a ``SyntaxError``) carrying line and
    column for malformed input and :class:`SemanticError` for non-ground
    initial beliefs, comparisons over unbound variables, or malformed
    ``persist``/``impact``/``update_estimate`` usage.
    """
    return _Parser(source).program()


def parse_literal(source: str) -> Literal:
    parser = _Parser(source)
    lit = parser.literal()
    if parser.tok.kind != "eof":
        raise parser.error("trailing input after literal")
    return lit


# --------------------------------------------------------------------------
# Static checks
# --------------------------------------------------------------------------


def _check_ground_belief(lit: Literal, line: int) -> None:
    if not is_ground(lit) or any(isinstance(t, BinOp) for t in _walk(lit)):
        raise SemanticError(f"initial belief {lit} is not ground", line)
    _check_annotations(lit, line)


def _check_annotations(lit: Literal, line: int) -> None:
    for ann in lit.annotations:
        if ann.functor == "persist":
            if len(ann.args) != 1 or _symbol(ann.args[0]) not in PERSIST_MEDIA:
                raise SemanticError(f"persist annotation on {lit.functor} must be one of "
                                    f"{'|'.join(PERSIST_MEDIA)}", line)
        elif ann.functor == "impact" and is_ground(ann):
            if len(ann.args) != 1 or not isinstance(ann.args[0], Number) or ann.args[0].value < 0:
                raise SemanticError(f"impact annotation on {lit.functor} needs one "
                                    f"non-negative number", line)


def _check_plan(plan: Plan) -> None:
    bound = set(term_vars(plan.trigger.literal))
    for item in plan.context:
        if isinstance(item, Comparison):
            missing = [v for v in term_vars(item) if v not in bound]
            if missing:
                raise SemanticError(
                    f"variable {missing[0]} in comparison '{item}' is not bound by an "
                    f"earlier literal", plan.line)
        else:
            _check_annotations(item, plan.line)
            bound.update(term_vars(item))
    for step in plan.body:
        if isinstance(step, InternalAction) and step.name == "update_estimate":
            if len(step.args) != 1:
                raise SemanticError("update_estimate takes exactly one belief name", step.line)
            name = _symbol(step.args[0])
            if name is None or not name.startswith("e_"):
                raise SemanticError("update_estimate needs the name of an e_ estimate "
                                    "belief", step.line)


def _symbol(term) -> str | None:
    if isinstance(term, Atom):
        return term.name
    if isinstance(term, String):
        return term.value
    return None


# --------------------------------------------------------------------------
# Term utilities
# --------------------------------------------------------------------------


def _walk(node) -> Iterator:
    yield node
    if isinstance(node, (Structure, Annotation, Literal, Action, InternalAction)):
        for arg in node.args:
            yield from _walk(arg)
    if isinstance(node, Literal):
        for ann in node.annotations:
            yield from _walk(ann)
    elif isinstance(node, (BinOp, Comparison)):
        yield from _walk(node.left)
        yield from _walk(node.right)
    elif isinstance(node, (SubGoal, BeliefUpdate)):
        yield from _walk(node.literal)


def term_vars(node) -> list[str]:
    """Variable names in first-occurrence order."""
    seen: dict[str, None] = {}
    for n in _walk(node):
        if isinstance(n, Variable):
            seen.setdefault(n.name)
    return list(seen)


def is_ground(node) -> bool:
    return not any(isinstance(n, Variable) for n in _walk(node))


def _deref(term: Term, bindings: Substitution) -> Term:
    while isinstance(term, Variable) and term.name in bindings:
        term = bindings[term.name]
    return term


def substitute(node, bindings: Substitution):
    """Apply bindings to a term, literal or annotation (arithmetic left as-is)."""
    if isinstance(node, Variable):
        value = _deref(node, bindings)
        return node if value is node else substitute(value, bindings)
    if isinstance(node, Structure):
        return Structure(node.functor, tuple(substitute(a, bindings) for a in node.args))
    if isinstance(node, BinOp):
        return BinOp(node.op, substitute(node.left, bindings), substitute(node.right, bindings))
    if isinstance(node, Annotation):
        return Annotation(node.functor, tuple(substitute(a, bindings) for a in node.args))
    if isinstance(node, Literal):
        return Literal(node.functor, tuple(substitute(a, bindings) for a in node.args),
                       tuple(substitute(a, bindings) for a in node.annotations), node.negated)
    return node


def evaluate(term: Term, bindings: Substitution) -> Term:
    """Substitute and reduce arithmetic; raises TypeError on non-numeric operands."""
    term = _deref(term, bindings)
    if isinstance(term, BinOp):
        left = evaluate(term.left, bindings)
        right = evaluate(term.right, bindings)
        if not isinstance(left, Number) or not isinstance(right, Number):
            raise TypeError(f"arithmetic on non-number in '{term}'")
        value = left.value + right.value if term.op == "+" else left.value - right.value
        return Number(value)
    if isinstance(term, Structure):
        return Structure(term.functor, tuple(evaluate(a, bindings) for a in term.args))
    return term


def ground_literal(lit: Literal, bindings: Substitution) -> Literal:
    """Substitute bindings into a literal, reducing arithmetic in its arguments."""
    return Literal(lit.functor, tuple(evaluate(a, bindings) for a in lit.args),
                   tuple(Annotation(a.functor, tuple(evaluate(x, bindings) for x in a.args))
                         for a in lit.annotations), lit.negated)


# --------------------------------------------------------------------------
# Unification
# --------------------------------------------------------------------------


def _unify_terms(a: Term, b: Term, s: dict) -> dict | None:
    a, b = _deref(a, s), _deref(b, s)
    if a == b:
        return s
    if isinstance(a, Variable):
        return {**s, a.name: b}
    if isinstance(b, Variable):
        return {**s, b.name: a}
    if isinstance(a, Structure) and isinstance(b, Structure):
        if a.functor != b.functor or len(a.args) != len(b.args):
            return None
        for x, y in zip(a.args, b.args):
            s = _unify_terms(x, y, s)
            if s is None:
                return None
        return s
    return None


def _unify_args(xs: tuple, ys: tuple, s: dict) -> dict | None:
    if len(xs) != len(ys):
        return None
    for x, y in zip(xs, ys):
        s = _unify_terms(x, y, s)
        if s is None:
            return None
    return s


def _unify_annotations(patterns: tuple, ground: tuple, s: dict) -> Iterator[dict]:
    if not patterns:
        yield s
        return
    first, rest = patterns[0], patterns[1:]
    for candidate in ground:
        if candidate.functor != first.functor:
            continue
        s1 = _unify_args(first.args, candidate.args, s)
        if s1 is not None:
            yield from _unify_annotations(rest, ground, s1)


def unify_all(pattern: Literal, ground: Literal, bindings: Substitution | None = None) -> Iterator[dict]:
    """Yield every substitution under which ``pattern`` matches ``ground``.

    Alternatives only arise from annotation choices: each pattern
    annotation must match some annotation of the ground literal.
    """
    s = dict(bindings or {})
    if pattern.functor != ground.functor or pattern.negated != ground.negated:
        return
    s = _unify_args(pattern.args, ground.args, s)
    if s is None:
        return
    yield from _unify_annotations(pattern.annotations, ground.annotations, s)


def unify(pattern: Literal, ground: Literal, bindings: Substitution | None = None) -> dict | None:
    """First substitution extending ``bindings`` that matches, or None."""
    return next(unify_all(pattern, ground, bindings), None)


# --------------------------------------------------------------------------
# Context evaluation
# --------------------------------------------------------------------------

_COMPARATORS = {
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
}


def _compare(cmp: Comparison, s: Substitution) -> bool:
    left = evaluate(cmp.left, s)
    right = evaluate(cmp.right, s)
    if cmp.op == "==":
        return left == right
    if cmp.op == "\\==":
        return left != right
    if not isinstance(left, Number) or not isinstance(right, Number):
        raise TypeError(f"comparison '{cmp}' needs numbers, got {left} and {right}")
    return _COMPARATORS[cmp.op](left.value, right.value)


def solve_context(context: tuple, beliefs: Iterable[Literal],
                  bindings: Substitution | None = None) -> Iterator[dict]:
    """Yield satisfying substitutions in left-to-right, belief-order search."""
    candidates = list(beliefs)

    def solve(i: int, s: dict) -> Iterator[dict]:
        if i == len(context):
            yield s
            return
        item = context[i]
        if isinstance(item, Comparison):
            if _compare(item, s):
                yield from solve(i + 1, s)
            return
        for belief in candidates:
            for s1 in unify_all(item, belief, s):
                yield from solve(i + 1, s1)

    yield from solve(0, dict(bindings or {}))


def eval_context(context: tuple, beliefs: Iterable[Literal],
                 bindings: Substitution | None = None) -> dict | None:
    return next(solve_context(context, beliefs, bindings), None)
