"""On-premise directory: users, groups, HDFS homes.

This is the source of truth the reconciler reads.  Directory operations never
touch cloud or vault state; the reconciler observes changes by diffing the
source-of-truth group against existing mirrors on its next tick.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .audit import CONTROL_PLANE, AuditLog, Category, Outcome
from .errors import (
    DuplicateName,
    GroupEmpty,
    GroupMissing,
    InvalidName,
    UnknownGroup,
    UnknownPrincipal,
)

SOURCE_OF_TRUTH_GROUP = "mirror-account-users"

# Principal names follow LDAP/cloud naming limits.  Group names additionally
# allow dots because reader groups are derived from bucket ids
# ("reader-user.<name>.dp.domain").
PRINCIPAL_NAME_RE = re.compile(r"^[a-z0-9_-]{1,63}$")
GROUP_NAME_RE = re.compile(r"^[a-z0-9_.-]{1,63}$")


class PrincipalKind(str, Enum):
    HUMAN = "human"
    HEADLESS = "headless"


@dataclass
class PrincipalRecord:
    """One on-premise identity; LDAP and UNIX sides are modeled as one record."""

    name: str
    kind: PrincipalKind
    has_workspace_identity: bool
    hdfs_home: str | None
    created_at: int
    org_unit: str = "general"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "has_workspace_identity": self.has_workspace_identity,
            "hdfs_home": self.hdfs_home,
            "created_at": self.created_at,
            "org_unit": self.org_unit,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PrincipalRecord":
        return cls(
            name=data["name"],
            kind=PrincipalKind(data["kind"]),
            has_workspace_identity=data["has_workspace_identity"],
            hdfs_home=data.get("hdfs_home"),
            created_at=data["created_at"],
            org_unit=data.get("org_unit", "general"),
        )


@dataclass
class DirectoryGroup:
    name: str
    members: list[str] = field(default_factory=list)  # insertion-ordered, unique

    def to_dict(self) -> dict:
        return {"name": self.name, "members": list(self.members)}

    @classmethod
    def from_dict(cls, data: dict) -> "DirectoryGroup":
        return cls(name=data["name"], members=list(data["members"]))


class Directory:
    """Single-writer registry of principals and groups."""

    def __init__(self, audit: AuditLog, now: Callable[[], int]) -> None:
        self._audit = audit
        self._now = now
        self._principals: dict[str, PrincipalRecord] = {}
        self._groups: dict[str, DirectoryGroup] = {}

    # -- introspection --------------------------------------------------

    def has_principal(self, name: str) -> bool:
        return name in self._principals

    def principal(self, name: str) -> PrincipalRecord:
        try:
            return self._principals[name]
        except KeyError:
            raise UnknownPrincipal(f"no principal named {name!r}") from None

    def principals(self) -> list[PrincipalRecord]:
        return [self._principals[name] for name in sorted(self._principals)]

    def has_group(self, name: str) -> bool:
        return name in self._groups

    def group(self, name: str) -> DirectoryGroup:
        try:
            return self._groups[name]
        except KeyError:
            raise UnknownGroup(f"no group named {name!r}") from None

    def groups(self) -> list[DirectoryGroup]:
        return [self._groups[name] for name in sorted(self._groups)]

    # -- mutations ------------------------------------------------------

    def add_principal(
        self,
        name: str,
        kind: PrincipalKind,
        hdfs_home: str | None = None,
        org_unit: str = "general",
    ) -> PrincipalRecord:
        if not PRINCIPAL_NAME_RE.match(name or ""):
            raise InvalidName(f"illegal principal name {name!r}")
        if name in self._principals:
            raise DuplicateName(f"principal {name!r} already exists")
        record = PrincipalRecord(
            name=name,
            kind=kind,
            has_workspace_identity=(kind is PrincipalKind.HUMAN),
            hdfs_home=hdfs_home,
            created_at=self._now(),
            org_unit=org_unit,
        )
        self._principals[name] = record
        self._audit.emit(
            at=self._now(),
            actor=CONTROL_PLANE,
            action="directory.add_principal",
            target=name,
            outcome=Outcome.SUCCESS,
            category=Category.MUTATION,
        )
        return record

    def add_group(self, name: str) -> DirectoryGroup:
        if not GROUP_NAME_RE.match(name or ""):
            raise InvalidName(f"illegal group name {name!r}")
        if name in self._groups:
            raise DuplicateName(f"group {name!r} already exists")
        group = DirectoryGroup(name=name)
        self._groups[name] = group
        self._audit.emit(
            at=self._now(),
            actor=CONTROL_PLANE,
            action="directory.add_group",
            target=name,
            outcome=Outcome.SUCCESS,
            category=Category.MUTATION,
        )
        return group

    def join_group(self, group_name: str, principal: str) -> DirectoryGroup:
        """Add ``principal`` to the group; re-joining is a no-op."""
        group = self.group(group_name)
        if principal not in self._principals:
            raise UnknownPrincipal(f"no principal named {principal!r}")
        if principal not in group.members:
            group.members.append(principal)
            self._audit.emit(
                at=self._now(),
                actor=CONTROL_PLANE,
                action="directory.join_group",
                target=f"{group_name}:{principal}",
                outcome=Outcome.SUCCESS,
                category=Category.MUTATION,
            )
        return group

    def leave_group(self, group_name: str, principal: str) -> DirectoryGroup:
        """Remove ``principal`` from the group; leaving twice is a no-op."""
        group = self.group(group_name)
        if principal not in self._principals:
            raise UnknownPrincipal(f"no principal named {principal!r}")
        if principal in group.members:
            group.members.remove(principal)
            self._audit.emit(
                at=self._now(),
                actor=CONTROL_PLANE,
                action="directory.leave_group",
                target=f"{group_name}:{principal}",
                outcome=Outcome.SUCCESS,
                category=Category.MUTATION,
            )
        return group

    def remove_principal(self, name: str) -> dict:
        """Drop the principal and scrub it from every group.

        The removal itself is one audited mutation; the next reconcile tick
        picks it up and decommissions the mirror.
        """
        if name not in self._principals:
            raise UnknownPrincipal(f"no principal named {name!r}")
        removed_from = []
        for group in self._groups.values():
            if name in group.members:
                group.members.remove(name)
                removed_from.append(group.name)
        del self._principals[name]
        self._audit.emit(
            at=self._now(),
            actor=CONTROL_PLANE,
            action="directory.remove_principal",
            target=name,
            outcome=Outcome.SUCCESS,
            category=Category.MUTATION,
        )
        return {"principal": name, "removed_from_groups": sorted(removed_from)}

    # -- reconciler entry point ------------------------------------------

    def verify_source_group(self) -> list[str]:
        """Return the source-of-truth member list, or fail the precondition.

        GroupMissing/GroupEmpty abort the caller's tick before any cloud
        mutation happens.
        """
        if SOURCE_OF_TRUTH_GROUP not in self._groups:
            raise GroupMissing(f"group {SOURCE_OF_TRUTH_GROUP!r} does not exist")
        members = self._groups[SOURCE_OF_TRUTH_GROUP].members
        if not members:
            raise GroupEmpty(f"group {SOURCE_OF_TRUTH_GROUP!r} has no members")
        return list(members)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "principals": [p.to_dict() for p in self.principals()],
            "groups": [g.to_dict() for g in self.groups()],
        }

    @classmethod
    def from_dict(cls, data: dict, audit: AuditLog, now: Callable[[], int]) -> "Directory":
        directory = cls(audit, now)
        for item in data["principals"]:
            record = PrincipalRecord.from_dict(item)
            directory._principals[record.name] = record
        for item in data["groups"]:
            group = DirectoryGroup.from_dict(item)
            directory._groups[group.name] = group
        return directory
