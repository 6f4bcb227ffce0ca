"""Process-knowledge DSL: ordered condition->label decision rules.

The textual format is line oriented::

    # optional comments
    conditions:
      C1: Wish to be dead
      C2: Non-Specific Active Suicidal Thoughts
    rules:
      if (C1 & C2) -> ideation
      if (C1) -> indication
      else -> none

A rule body is a pure conjunction of declared condition ids; rules are
matched first-to-last, so the most specific rule is written first.  The
optional trailing ``else`` names the fallback label.  ``NO_MATCH`` is
reserved for the outcome of rule sets without a fallback and cannot be
used as a label.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import PkSyntaxError, PkValidationError

# Reserved outcome when no rule fires and the pk declares no fallback.
NO_MATCH = "NO_MATCH"

_ID_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_CONDITION_LINE_RE = re.compile(r"^(?P<id>[A-Za-z_][A-Za-z0-9_]*)\s*:\s*(?P<text>.+)$")
_RULE_LINE_RE = re.compile(
    r"^if\s*\(\s*(?P<body>[A-Za-z0-9_]+(?:\s*&\s*[A-Za-z0-9_]+)*)\s*\)\s*->\s*(?P<label>\S+)$"
)
_ELSE_LINE_RE = re.compile(r"^else\s*->\s*(?P<label>\S+)$")


@dataclass(frozen=True)
class Condition:
    """A named natural-language criterion, e.g. ``C1: Wish to be dead``."""

    id: str
    text: str


@dataclass(frozen=True)
class Rule:
    """Conjunction of condition ids implying a label."""

    conditions: tuple[str, ...]
    label: str

    def as_source(self) -> str:
        return f"if ({' & '.join(self.conditions)}) -> {self.label}"


@dataclass(frozen=True)
class ProcessKnowledge:
    """Ordered decision rules over declared conditions.

    Rule order is contractual: the first rule whose conjunction holds
    decides the label.
    """

    conditions: tuple[Condition, ...]
    rules: tuple[Rule, ...]
    fallback_label: str | None = None
    label_set: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        labels: list[str] = []
        for rule in self.rules:
            if rule.label not in labels:
                labels.append(rule.label)
        if self.fallback_label is not None and self.fallback_label not in labels:
            labels.append(self.fallback_label)
        object.__setattr__(self, "label_set", tuple(labels))

    @property
    def condition_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.conditions)

    def condition_text(self, condition_id: str) -> str:
        for c in self.conditions:
            if c.id == condition_id:
                return c.text
        raise KeyError(condition_id)


def parse_pk(source: str) -> ProcessKnowledge:
    """Parse DSL text into a :class:`ProcessKnowledge`.

    Raises :class:`PkSyntaxError` with 1-based line/column positions for
    malformed input, undeclared or duplicate condition ids, duplicate
    identical rules, or a reserved label.
    """
    conditions: list[Condition] = []
    seen_ids: set[str] = set()
    rules: list[Rule] = []
    fallback: str | None = None
    section: str | None = None
    saw_content = False

    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        saw_content = True
        col = len(raw) - len(raw.lstrip()) + 1

        if line == "conditions:":
            section = "conditions"
            continue
        if line == "rules:":
            if section != "conditions":
                raise PkSyntaxError("rules: section before conditions:", lineno, col)
            section = "rules"
            continue

        if section == "conditions":
            m = _CONDITION_LINE_RE.match(line)
            if not m:
                raise PkSyntaxError(f"expected 'ID: text', got {line!r}", lineno, col)
            cid, text = m.group("id"), m.group("text").strip()
            if cid in seen_ids:
                raise PkSyntaxError(f"duplicate condition id {cid!r}", lineno, col)
            seen_ids.add(cid)
            conditions.append(Condition(id=cid, text=text))
        elif section == "rules":
            if fallback is not None:
                raise PkSyntaxError("no rules allowed after else clause", lineno, col)
            m = _ELSE_LINE_RE.match(line)
            if m:
                fallback = m.group("label")
                _check_label(fallback, lineno, col)
                continue
            m = _RULE_LINE_RE.match(line)
            if not m:
                raise PkSyntaxError(
                    f"expected 'if (Ck & ...) -> LABEL' or 'else -> LABEL', got {line!r}",
                    lineno,
                    col,
                )
            ids = tuple(part.strip() for part in m.group("body").split("&"))
            for cid in ids:
                if cid not in seen_ids:
                    raise PkSyntaxError(f"undeclared condition id {cid!r}", lineno, col)
            label = m.group("label")
            _check_label(label, lineno, col)
            rule = Rule(conditions=ids, label=label)
            if rule in rules:
                raise PkSyntaxError(f"duplicate rule {rule.as_source()!r}", lineno, col)
            rules.append(rule)
        else:
            raise PkSyntaxError(
                f"content outside conditions:/rules: sections: {line!r}", lineno, col
            )

    if not saw_content:
        raise PkSyntaxError("empty source", 1, 1)
    if not conditions:
        raise PkSyntaxError("no conditions declared", 1, 1)
    if not rules:
        raise PkSyntaxError("no rules declared", 1, 1)
    return ProcessKnowledge(
        conditions=tuple(conditions), rules=tuple(rules), fallback_label=fallback
    )


def _check_label(label: str, lineno: int, col: int) -> None:
    if label == NO_MATCH:
        raise PkSyntaxError(f"label {NO_MATCH!r} is reserved", lineno, col)


def serialize_pk(pk: ProcessKnowledge) -> str:
    """Render canonical DSL text; ``parse_pk`` round-trips it exactly."""
    lines = ["conditions:"]
    lines.extend(f"  {c.id}: {c.text}" for c in pk.conditions)
    lines.append("")
    lines.append("rules:")
    lines.extend(f"  {r.as_source()}" for r in pk.rules)
    if pk.fallback_label is not None:
        lines.append(f"  else -> {pk.fallback_label}")
    return "\n".join(lines) + "\n"


def validate_against_labels(pk: ProcessKnowledge, labels: set[str]) -> None:
    """Check that pk labels and dataset labels coincide.

    Every label the pk can produce must be a dataset label, and every
    dataset label must be reachable through some rule or the fallback.
    Raises :class:`PkValidationError` listing offenders on either side.
    """
    reachable = set(pk.label_set)
    extra = sorted(reachable - set(labels))
    unreachable = sorted(set(labels) - reachable)
    problems = []
    if extra:
        problems.append(f"pk labels not in dataset: {', '.join(extra)}")
    if unreachable:
        problems.append(f"dataset labels unreachable by any rule: {', '.join(unreachable)}")
    if problems:
        raise PkValidationError("; ".join(problems))
