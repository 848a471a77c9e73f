"""Rule-based decision engine with an append-only audit trail.

Events enter as Triggers (a kind plus string attributes), are matched
against a revisioned rule table, and come out as Decisions.  Every decision
the system issues is logged as a trigger/rule/decision triple so the whole
run can be replayed and checked after the fact.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

from .errors import (
    DuplicateRuleIdError,
    InvalidConfigError,
    MalformedDecisionError,
    NoApplicableRuleError,
    UnknownRuleIdError,
)

logger = logging.getLogger(__name__)

WILDCARD = "*"

ACTIONS = frozenset(
    {"select-fitness", "resume", "suspend-reassign", "accept-result", "reject-duplicate"}
)


@dataclass(frozen=True)
class Trigger:
    """An event descriptor: a kind plus free-form string attributes."""

    kind: str
    attributes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.kind:
            raise ValueError("trigger kind must be non-empty")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "attributes": dict(self.attributes)}

    @classmethod
    def from_dict(cls, data: dict) -> Trigger:
        return cls(kind=data["kind"], attributes=dict(data["attributes"]))


@dataclass(frozen=True)
class Decision:
    """The selected plan: an action from a closed set, plus parameters."""

    action: str
    parameters: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.action not in ACTIONS:
            raise ValueError(f"unknown decision action {self.action!r}")

    def to_dict(self) -> dict:
        return {"action": self.action, "parameters": dict(self.parameters)}

    @classmethod
    def from_dict(cls, data: dict) -> Decision:
        return cls(action=data["action"], parameters=dict(data["parameters"]))


@dataclass(frozen=True)
class Rule:
    """Matches triggers against a pattern; lower priority wins.

    Pattern attribute values may be the wildcard "*"; the trigger may carry
    attributes the pattern does not mention.
    """

    id: str
    priority: int
    pattern: Trigger
    decision_template: Decision

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "priority": self.priority,
            "pattern": self.pattern.to_dict(),
            "decision": self.decision_template.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Rule:
        return cls(
            id=data["id"],
            priority=int(data["priority"]),
            pattern=Trigger.from_dict(data["pattern"]),
            decision_template=Decision.from_dict(data["decision"]),
        )


def match(rule: Rule, trigger: Trigger) -> bool:
    """True iff the trigger satisfies the rule's pattern.

    Kinds must be equal; every pattern attribute must appear in the trigger
    with an equal value, or be the wildcard.
    """
    if rule.pattern.kind != trigger.kind:
        return False
    for key, want in rule.pattern.attributes.items():
        if want == WILDCARD:
            if key not in trigger.attributes:
                return False
        elif trigger.attributes.get(key) != want:
            return False
    return True


@dataclass(frozen=True)
class FixedRules:
    """An immutable rule table snapshot.

    Updates return a new snapshot with ``revision + 1``; inferences that
    began against an older snapshot keep using it.
    """

    rules: tuple[Rule, ...] = ()
    revision: int = 0

    def __post_init__(self) -> None:
        seen = set()
        for rule in self.rules:
            if rule.id in seen:
                raise DuplicateRuleIdError(rule.id)
            seen.add(rule.id)

    def ids(self) -> tuple[str, ...]:
        return tuple(rule.id for rule in self.rules)

    def add(self, rule: Rule) -> FixedRules:
        if any(r.id == rule.id for r in self.rules):
            raise DuplicateRuleIdError(rule.id)
        return FixedRules(rules=self.rules + (rule,), revision=self.revision + 1)

    def remove(self, rule_id: str) -> FixedRules:
        if not any(r.id == rule_id for r in self.rules):
            raise UnknownRuleIdError(rule_id)
        kept = tuple(r for r in self.rules if r.id != rule_id)
        return FixedRules(rules=kept, revision=self.revision + 1)

    def replace(self, rule: Rule) -> FixedRules:
        if not any(r.id == rule.id for r in self.rules):
            raise UnknownRuleIdError(rule.id)
        swapped = tuple(rule if r.id == rule.id else r for r in self.rules)
        return FixedRules(rules=swapped, revision=self.revision + 1)

    def to_list(self) -> list[dict]:
        return [rule.to_dict() for rule in self.rules]

    @classmethod
    def from_list(cls, data: list[dict], revision: int = 0) -> FixedRules:
        return cls(rules=tuple(Rule.from_dict(item) for item in data), revision=revision)


def infer(rules: FixedRules, trigger: Trigger) -> tuple[Decision, str]:
    """Return the decision of the best-matching rule and that rule's id.

    Among matching rules the lowest priority wins; priority ties break to
    the lexicographically smallest id.  Pure given (rules.revision, trigger).
    """
    best: Rule | None = None
    for rule in rules.rules:
        if not match(rule, trigger):
            continue
        if best is None or (rule.priority, rule.id) < (best.priority, best.id):
            best = rule
    if best is None:
        raise NoApplicableRuleError(f"no rule matches trigger kind {trigger.kind!r}")
    return best.decision_template, best.id


@dataclass(frozen=True)
class LogEntry:
    """One audit record: which trigger fired which rule into which decision."""

    sequence_no: int
    sim_time_ms: int
    trigger: Trigger
    rule_id: str
    decision: Decision

    def to_dict(self) -> dict:
        # Key order is part of the on-disk format.
        return {
            "sequence_no": self.sequence_no,
            "sim_time_ms": self.sim_time_ms,
            "trigger": self.trigger.to_dict(),
            "rule_id": self.rule_id,
            "decision": self.decision.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> LogEntry:
        return cls(
            sequence_no=int(data["sequence_no"]),
            sim_time_ms=int(data["sim_time_ms"]),
            trigger=Trigger.from_dict(data["trigger"]),
            rule_id=data["rule_id"],
            decision=Decision.from_dict(data["decision"]),
        )


class DecisionLog(Protocol):
    """Serialized appender assigning gap-free sequence numbers from 1."""

    def append(
        self, sim_time_ms: int, trigger: Trigger, rule_id: str, decision: Decision
    ) -> LogEntry: ...


def infer_and_log(
    rules: FixedRules, trigger: Trigger, log: DecisionLog, sim_time_ms: int
) -> tuple[Decision, str, LogEntry]:
    """Run inference and record the triple; the only sanctioned way to decide."""
    decision, rule_id = infer(rules, trigger)
    entry = log.append(sim_time_ms, trigger, rule_id, decision)
    return decision, rule_id, entry


def problem_descriptor(num_objectives: int, constrained: bool) -> Trigger:
    """The submission trigger built from a problem's shape."""
    return Trigger(
        kind="problem-submitted",
        attributes={
            "objectives": str(num_objectives),
            "constrained": "true" if constrained else "false",
        },
    )


def select_fitness_function(
    rules: FixedRules, descriptor: Trigger, log: DecisionLog, sim_time_ms: int = 0
) -> str:
    """Pick the fitness strategy for a submitted problem and log the decision."""
    decision, rule_id, _ = infer_and_log(rules, descriptor, log, sim_time_ms)
    if decision.action != "select-fitness":
        raise MalformedDecisionError(
            f"rule {rule_id!r} produced action {decision.action!r} for a submission"
        )
    fitness_id = decision.parameters.get("fitness_id")
    if not fitness_id:
        raise MalformedDecisionError(f"rule {rule_id!r} decision lacks fitness_id")
    return fitness_id


def default_rules() -> FixedRules:
    """The shipped rule table.

    Fitness selection: single-objective problems score on the raw objective;
    everything else uses a weighted sum, with a feasibility-aware variant for
    constrained problems.  Watchdog: one deadline extension while the
    generation budget allows, suspension afterwards.  Result collection:
    fresh results are accepted, anything else rejected as a duplicate.
    """
    rules = (
        Rule(
            id="fitness-single-objective",
            priority=10,
            pattern=Trigger("problem-submitted", {"objectives": "1"}),
            decision_template=Decision("select-fitness", {"fitness_id": "scalar-direct"}),
        ),
        Rule(
            id="fitness-unconstrained",
            priority=20,
            pattern=Trigger(
                "problem-submitted", {"objectives": WILDCARD, "constrained": "false"}
            ),
            decision_template=Decision("select-fitness", {"fitness_id": "weighted-sum"}),
        ),
        Rule(
            id="fitness-constrained",
            priority=20,
            pattern=Trigger(
                "problem-submitted", {"objectives": WILDCARD, "constrained": "true"}
            ),
            decision_template=Decision(
                "select-fitness", {"fitness_id": "weighted-sum-feasibility"}
            ),
        ),
        Rule(
            id="overdue-resume",
            priority=10,
            pattern=Trigger("job-overdue", {"budget": "available"}),
            decision_template=Decision("resume"),
        ),
        Rule(
            id="overdue-suspend",
            priority=20,
            pattern=Trigger("job-overdue", {"budget": "exhausted"}),
            decision_template=Decision("suspend-reassign"),
        ),
        Rule(
            id="result-accept",
            priority=10,
            pattern=Trigger("result-received", {"fresh": "true"}),
            decision_template=Decision("accept-result"),
        ),
        Rule(
            id="result-reject",
            priority=10,
            pattern=Trigger("result-received", {"fresh": "false"}),
            decision_template=Decision("reject-duplicate"),
        ),
    )
    return FixedRules(rules=rules, revision=0)


def load_rules_file(path: str | Path) -> FixedRules:
    """Parse and validate a rules file: a JSON array of rule objects."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfigError(f"cannot read rules file {path}: {exc}") from exc
    if not isinstance(data, list):
        raise InvalidConfigError("rules file must be a JSON array")
    try:
        rules = FixedRules.from_list(data)
    except DuplicateRuleIdError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidConfigError(f"malformed rule in {path}: {exc}") from exc
    logger.info("loaded %d rules from %s", len(rules.rules), path)
    return rules


def replay_log(rules: FixedRules, entries: Iterable[LogEntry]) -> list[str]:
    """Re-infer every logged trigger and report mismatches.

    Returns one message per entry whose recorded (rule_id, decision) the
    current table does not reproduce; an empty list means the log replays
    exactly.
    """
    problems = []
    for entry in entries:
        try:
            decision, rule_id = infer(rules, entry.trigger)
        except NoApplicableRuleError:
            problems.append(f"entry {entry.sequence_no}: no applicable rule on replay")
            continue
        if rule_id != entry.rule_id or decision != entry.decision:
            problems.append(
                f"entry {entry.sequence_no}: replay chose {rule_id!r}/{decision.action!r},"
                f" log has {entry.rule_id!r}/{entry.decision.action!r}"
            )
    return problems
