"""Account-creator control loop.

Each tick diffs the source-of-truth group against cloud state and converges:
creates missing mirror accounts (quota-aware placement, underscore names
rejected), stores and rotates vault keys, grants ActAs to human owners, and
decommissions mirrors whose source identity went away.  A tick that finds
nothing to do reports no changes, which is the convergence fixed point the
property tests assert.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .audit import CONTROL_PLANE, AuditLog, Category, Outcome
from .cloud import Cloud, NodeKind, Role, mirror_email, workspace_principal
from .directory import Directory, PrincipalRecord
from .durations import DAY, MINUTE, format_duration
from .errors import (
    ControlPlaneError,
    GroupEmpty,
    GroupMissing,
    NoMirror,
    UnderscoreNotSupported,
)
from .vault import SecretSource, Vault

IAM_FOLDER = "IAMSTORE"
DEFAULT_BASE_PROJECT = "service-accounts-project"


class ShardingMode(str, Enum):
    SINGLE_PROJECT = "single-project"
    PER_ORG_UNIT = "per-org-unit"


@dataclass
class ReconcileConfig:
    tick_interval: int = 15 * MINUTE
    rotation_age: int = 7 * DAY
    retiring_grace: int = 2 * DAY
    sharding_mode: ShardingMode = ShardingMode.SINGLE_PROJECT
    base_project: str = DEFAULT_BASE_PROJECT
    quota_default: int = 100

    def validate(self) -> None:
        if self.rotation_age <= self.tick_interval:
            raise ValueError("rotation_age must exceed tick_interval")
        if self.retiring_grace <= 0:
            raise ValueError("retiring_grace must be positive")
        if self.quota_default < 1:
            raise ValueError("quota_default must be positive")

    def to_dict(self) -> dict:
        return {
            "tick_interval": self.tick_interval,
            "rotation_age": self.rotation_age,
            "retiring_grace": self.retiring_grace,
            "sharding_mode": self.sharding_mode.value,
            "base_project": self.base_project,
            "quota_default": self.quota_default,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReconcileConfig":
        config = cls(
            tick_interval=data["tick_interval"],
            rotation_age=data["rotation_age"],
            retiring_grace=data["retiring_grace"],
            sharding_mode=ShardingMode(data["sharding_mode"]),
            base_project=data["base_project"],
            quota_default=data["quota_default"],
        )
        config.validate()
        return config

    def describe(self) -> str:
        return (
            f"tick_interval={format_duration(self.tick_interval)} "
            f"rotation_age={format_duration(self.rotation_age)} "
            f"retiring_grace={format_duration(self.retiring_grace)} "
            f"sharding_mode={self.sharding_mode.value} "
            f"base_project={self.base_project} "
            f"quota_default={self.quota_default}"
        )


@dataclass
class ReconcileReport:
    tick_id: int
    at: int
    created: list[str] = field(default_factory=list)
    rotated: list[str] = field(default_factory=list)
    actas_granted: list[str] = field(default_factory=list)
    decommissioned: list[str] = field(default_factory=list)
    rejected: list[dict] = field(default_factory=list)  # {"principal", "reason"}
    errors: list[dict] = field(default_factory=list)  # {"principal", "error", "message"}

    @property
    def has_changes(self) -> bool:
        # Rejections recur every tick (the loop re-encounters underscore
        # names); they are advisories, not state changes.
        return bool(
            self.created
            or self.rotated
            or self.actas_granted
            or self.decommissioned
            or self.errors
        )

    def to_dict(self) -> dict:
        return {
            "tick_id": self.tick_id,
            "at": self.at,
            "created": list(self.created),
            "rotated": list(self.rotated),
            "actas_granted": list(self.actas_granted),
            "decommissioned": list(self.decommissioned),
            "rejected": [dict(r) for r in self.rejected],
            "errors": [dict(e) for e in self.errors],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReconcileReport":
        return cls(
            tick_id=data["tick_id"],
            at=data["at"],
            created=list(data["created"]),
            rotated=list(data["rotated"]),
            actas_granted=list(data["actas_granted"]),
            decommissioned=list(data["decommissioned"]),
            rejected=[dict(r) for r in data["rejected"]],
            errors=[dict(e) for e in data["errors"]],
        )

    def render(self) -> str:
        lines = [f"tick {self.tick_id} at t={self.at}"]
        for label, items in (
            ("created", self.created),
            ("rotated", self.rotated),
            ("actas_granted", self.actas_granted),
            ("decommissioned", self.decommissioned),
        ):
            lines.append(f"  {label}: {len(items)}")
            for item in items:
                lines.append(f"    {item}")
        lines.append(f"  rejected: {len(self.rejected)}")
        for item in self.rejected:
            lines.append(f"    {item['principal']}: {item['reason']}")
        lines.append(f"  errors: {len(self.errors)}")
        for item in self.errors:
            lines.append(f"    {item.get('principal', '-')}: {item['error']}: {item['message']}")
        return "\n".join(lines)


def derive_mirror_name(principal: str, target_project: str) -> str:
    """Mirror email for a principal, or UnderscoreNotSupported.

    Underscore names are rejected outright: substituting a hyphen would make
    e.g. ``data_pipeline`` and ``data-pipeline`` share one mirror name.
    """
    if "_" in principal:
        raise UnderscoreNotSupported(
            f"{principal!r} contains an underscore, which cloud service-account "
            "names do not allow"
        )
    return mirror_email(f"{principal}-mirror", target_project)


class Reconciler:
    def __init__(
        self,
        directory: Directory,
        cloud: Cloud,
        vault: Vault,
        secrets: SecretSource,
        config: ReconcileConfig,
        audit: AuditLog,
        now: Callable[[], int],
    ) -> None:
        self.directory = directory
        self.cloud = cloud
        self.vault = vault
        self.secrets = secrets
        self.config = config
        self._audit = audit
        self._now = now
        self.tick_count = 0
        self.last_report: ReconcileReport | None = None

    # -- placement ---------------------------------------------------------

    def _ensure_org(self) -> str:
        org = self.cloud.organization()
        if org is None:
            raise ControlPlaneError("cloud has no organization node")
        return org.id

    def _ensure_folder(self, folder: str, tick_id: int | None) -> str:
        if not self.cloud.has_node(folder):
            self.cloud.create_node(NodeKind.FOLDER, folder, self._ensure_org(), tick_id)
        return folder

    def _ensure_project(self, project: str, folder: str, tick_id: int | None) -> str:
        if not self.cloud.has_node(project):
            self.cloud.create_node(NodeKind.PROJECT, project, folder, tick_id)
        return project

    def placement_base(self, record: PrincipalRecord) -> tuple[str, str]:
        """(folder, base project id) the record's mirror belongs under."""
        if self.config.sharding_mode is ShardingMode.SINGLE_PROJECT:
            return IAM_FOLDER, self.config.base_project
        ou = record.org_unit
        return f"{ou.upper()}IAM", f"{ou}-service-accounts-project"

    def select_project(self, record: PrincipalRecord, tick_id: int | None = None) -> str:
        """Pick the project for a new mirror, sharding past full projects.

        Projects are created on demand as ``base``, ``base-2``, ``base-3``...
        under one folder, so placement never fails on quota.
        """
        folder, base = self.placement_base(record)
        self._ensure_folder(folder, tick_id)
        suffix = 1
        while True:
            project = base if suffix == 1 else f"{base}-{suffix}"
            self._ensure_project(project, folder, tick_id)
            quota = self.cloud.quota(project)
            if quota.current_count < quota.max_service_accounts:
                return project
            suffix += 1

    # -- decommission --------------------------------------------------------

    def decommission(self, principal: str, tick_id: int | None = None) -> dict:
        """Disable the principal's mirror, kill its keys, strip ActAs grants."""
        email = self.cloud.active_mirror_for(principal)
        if email is None:
            raise NoMirror(f"{principal!r} has no active mirror account")
        self.cloud.disable_service_account(email, tick_id)
        revoked = self.vault.revoke_all(email, tick_id) if self.vault.has_entry(email) else 0
        removed = []
        node = self.cloud.node(email)
        for binding in [b for b in node.bindings if b.role is Role.ACT_AS]:
            self.cloud.unbind_role(email, Role.ACT_AS, binding.principal, tick_id)
            removed.append(binding.principal)
        return {"account": email, "keys_invalidated": revoked, "actas_removed": removed}

    # -- the tick --------------------------------------------------------------

    def reconcile_tick(self) -> ReconcileReport:
        now = self._now()
        tick_id = self.tick_count + 1
        report = ReconcileReport(tick_id=tick_id, at=now)

        # (1) Source-group verification gates the whole tick.
        try:
            members = self.directory.verify_source_group()
        except (GroupMissing, GroupEmpty) as exc:
            self._audit.emit(
                at=now,
                actor=CONTROL_PLANE,
                action="reconcile.abort",
                target="mirror-account-users",
                outcome=Outcome.FAILURE,
                category=Category.CONTROL,
                tick_id=tick_id,
            )
            report.errors.append({"error": exc.name, "message": str(exc)})
            self._finish(report)
            return report

        # (2) Converge each member, isolating per-account failures.
        for member in members:
            try:
                self._converge_member(member, now, tick_id, report)
            except UnderscoreNotSupported:
                report.rejected.append(
                    {"principal": member, "reason": "UnderscoreNotSupported"}
                )
                self._audit.emit(
                    at=now,
                    actor=CONTROL_PLANE,
                    action="reconcile.reject_underscore",
                    target=member,
                    outcome=Outcome.FAILURE,
                    category=Category.CONTROL,
                    tick_id=tick_id,
                )
            except ControlPlaneError as exc:
                report.errors.append(
                    {"principal": member, "error": exc.name, "message": str(exc)}
                )
                self._audit.emit(
                    at=now,
                    actor=CONTROL_PLANE,
                    action="reconcile.error",
                    target=member,
                    outcome=Outcome.FAILURE,
                    category=Category.CONTROL,
                    tick_id=tick_id,
                )

        # (3) Decommission mirrors whose source left the group or the directory.
        current = set(members)
        for acct in self.cloud.accounts():
            if acct.status.value != "active":
                continue
            src = acct.source_principal
            if src not in current or not self.directory.has_principal(src):
                self.decommission(src, tick_id)
                report.decommissioned.append(acct.email)

        # (4) Phase out retiring keys whose grace window elapsed.
        self.vault.expire_versions(now, self.config.retiring_grace, tick_id)

        self._finish(report)
        return report

    def run_ticks(self, count: int, advance: Callable[[int], int]) -> list[ReconcileReport]:
        """Simulate the scheduler: tick, then advance one interval, repeated."""
        reports = []
        for _ in range(count):
            reports.append(self.reconcile_tick())
            advance(self.config.tick_interval)
        return reports

    def _finish(self, report: ReconcileReport) -> None:
        self.tick_count = report.tick_id
        self.last_report = report

    def _converge_member(
        self, member: str, now: int, tick_id: int, report: ReconcileReport
    ) -> None:
        record = self.directory.principal(member)
        email = self.cloud.active_mirror_for(member)

        if email is None:
            # Underscore check happens before any placement side effects.
            derive_mirror_name(member, self.config.base_project)
            project = self.select_project(record, tick_id)
            email = derive_mirror_name(member, project)
            self.cloud.create_service_account(
                project, f"{member}-mirror", source_principal=member, tick_id=tick_id
            )
            self.vault.store_key(email, member, self.secrets.next_secret(), tick_id)
            report.created.append(email)

        # Alg-style unconditional ActAs grant for humans; the binding is
        # idempotent and only a genuinely new grant is reported.
        if record.has_workspace_identity:
            principal = workspace_principal(member)
            newly = not self.cloud.has_binding(email, Role.ACT_AS, principal)
            self.cloud.bind_role(email, Role.ACT_AS, principal, tick_id)
            if newly:
                report.actas_granted.append(email)

        active = self.vault.active_version(email)
        if active is not None and now - active.created_at >= self.config.rotation_age:
            self.vault.store_key(email, member, self.secrets.next_secret(), tick_id)
            report.rotated.append(email)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "tick_count": self.tick_count,
            "last_report": self.last_report.to_dict() if self.last_report else None,
        }

    def load_state(self, data: dict) -> None:
        self.tick_count = data["tick_count"]
        last = data.get("last_report")
        self.last_report = ReconcileReport.from_dict(last) if last else None
