"""Append-only audit sink shared by every module.

Each control-plane mutation and each access decision lands here as exactly one
event.  Sequence numbers are gapless and strictly increasing, and nothing ever
mutates or deletes an event once appended; those two facts are what the
invariant checker and the acceptance suite lean on.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator

CONTROL_PLANE = "control-plane"


class Outcome(str, Enum):
    SUCCESS = "success"
    FAILURE = "failure"


class Category(str, Enum):
    """What kind of fact an event records.

    MUTATION:  directory / cloud / vault state changed.
    DECISION:  an access attempt was evaluated (vault read, token mint,
               authorization check).
    CONTROL:   the control plane itself reporting (tick aborts, rejections).
    """

    MUTATION = "mutation"
    DECISION = "decision"
    CONTROL = "control"


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    at: int
    actor: str
    action: str
    target: str
    outcome: Outcome
    category: Category
    tick_id: int | None = None
    job_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "at": self.at,
            "actor": self.actor,
            "action": self.action,
            "target": self.target,
            "outcome": self.outcome.value,
            "category": self.category.value,
            "tick_id": self.tick_id,
            "job_id": self.job_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AuditEvent":
        return cls(
            seq=data["seq"],
            at=data["at"],
            actor=data["actor"],
            action=data["action"],
            target=data["target"],
            outcome=Outcome(data["outcome"]),
            category=Category(data["category"]),
            tick_id=data.get("tick_id"),
            job_id=data.get("job_id"),
        )

    def render(self) -> str:
        tick = f" tick={self.tick_id}" if self.tick_id is not None else ""
        job = f" job={self.job_id}" if self.job_id is not None else ""
        return (
            f"#{self.seq} t={self.at}{tick}{job} {self.outcome.value:7s} "
            f"{self.action} actor={self.actor} target={self.target}"
        )


class AuditLog:
    """In-memory append-only event store with gapless sequence numbers."""

    def __init__(self) -> None:
        self._events: list[AuditEvent] = []

    def emit(
        self,
        *,
        at: int,
        actor: str,
        action: str,
        target: str,
        outcome: Outcome,
        category: Category,
        tick_id: int | None = None,
        job_id: str | None = None,
    ) -> AuditEvent:
        event = AuditEvent(
            seq=len(self._events) + 1,
            at=at,
            actor=actor,
            action=action,
            target=target,
            outcome=outcome,
            category=category,
            tick_id=tick_id,
            job_id=job_id,
        )
        self._events.append(event)
        return event

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[AuditEvent]:
        return iter(self._events)

    def events(self) -> tuple[AuditEvent, ...]:
        return tuple(self._events)

    def tail(self, n: int = 10) -> list[AuditEvent]:
        return self._events[-n:]

    def query(
        self,
        *,
        actor: str | None = None,
        action: str | None = None,
        target: str | None = None,
        tick_id: int | None = None,
        job_id: str | None = None,
        since: int | None = None,
        until: int | None = None,
    ) -> list[AuditEvent]:
        """Return matching events in sequence order.

        ``action`` matches on prefix so ``authorize`` finds both
        ``authorize.read`` and ``authorize.write``; the other filters are
        exact.  ``since``/``until`` bound the logical timestamp inclusively.
        """
        out = []
        for ev in self._events:
            if actor is not None and ev.actor != actor:
                continue
            if action is not None and not ev.action.startswith(action):
                continue
            if target is not None and ev.target != target:
                continue
            if tick_id is not None and ev.tick_id != tick_id:
                continue
            if job_id is not None and ev.job_id != job_id:
                continue
            if since is not None and ev.at < since:
                continue
            if until is not None and ev.at > until:
                continue
            out.append(ev)
        return out

    def to_dict(self) -> list[dict]:
        return [ev.to_dict() for ev in self._events]

    @classmethod
    def from_dict(cls, data: list[dict]) -> "AuditLog":
        log = cls()
        log._events = [AuditEvent.from_dict(item) for item in data]
        return log
