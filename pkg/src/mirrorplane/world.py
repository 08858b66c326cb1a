"""One world: every module's state wired together behind a logical clock.

The canonical serialization is key-sorted, two-space-indented JSON with
integer timestamps, so snapshots diff cleanly and export -> import -> export
is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

from .audit import AuditLog
from .authz import AuthzEngine, TokenStore
from .cloud import Cloud, NodeKind
from .directory import Directory
from .errors import SchemaError
from .onboarder import Onboarder
from .reconciler import ReconcileConfig, Reconciler
from .vault import SecretSource, Vault

SCHEMA_VERSION = 1
ORGANIZATION_ID = "org"

_REQUIRED_KEYS = (
    "schema_version",
    "clock",
    "config",
    "secrets",
    "directory",
    "cloud",
    "vault",
    "onboarder",
    "tokens",
    "reconcile",
    "authz",
    "audit",
)


def canonical_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def compact_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class World:
    """Aggregate root; all module objects share its audit log and clock."""

    def __init__(self, seed: int = 0, config: ReconcileConfig | None = None) -> None:
        self.clock = 0
        self.config = config or ReconcileConfig()
        self.config.validate()
        self.audit = AuditLog()
        self.secrets = SecretSource(seed)
        now: Callable[[], int] = lambda: self.clock
        self.directory = Directory(self.audit, now)
        self.cloud = Cloud(self.audit, now, default_quota=self.config.quota_default)
        self.vault = Vault(self.audit, now, self.directory.has_principal)
        self.reconciler = Reconciler(
            self.directory, self.cloud, self.vault, self.secrets,
            self.config, self.audit, now,
        )
        self.tokens = TokenStore()
        self.onboarder = Onboarder(self.directory, self.cloud, self.audit, now)
        self.authz = AuthzEngine(self.cloud, self.vault, self.tokens, self.audit, now)

    @classmethod
    def new(cls, seed: int = 0, config: ReconcileConfig | None = None) -> "World":
        """Fresh world with the organization root already in place."""
        world = cls(seed=seed, config=config)
        world.cloud.create_node(NodeKind.ORGANIZATION, ORGANIZATION_ID, None)
        return world

    # -- clock -------------------------------------------------------------

    def now(self) -> int:
        return self.clock

    def advance(self, minutes: int) -> int:
        if minutes < 0:
            raise ValueError("the clock only moves forward")
        self.clock += minutes
        return self.clock

    # -- serialization -------------------------------------------------------

    def to_dict(self, reveal_secrets: bool = True) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "clock": self.clock,
            "config": self.config.to_dict(),
            "secrets": self.secrets.to_dict(),
            "directory": self.directory.to_dict(),
            "cloud": self.cloud.to_dict(),
            "vault": self.vault.to_dict(reveal_secrets),
            "onboarder": self.onboarder.to_dict(),
            "tokens": self.tokens.to_dict(),
            "reconcile": self.reconciler.to_dict(),
            "authz": self.authz.to_dict(),
            "audit": self.audit.to_dict(),
        }

    def export_text(self, reveal_secrets: bool = False) -> str:
        return canonical_json(self.to_dict(reveal_secrets))

    @classmethod
    def from_dict(cls, data) -> "World":
        if not isinstance(data, dict):
            raise SchemaError("state document must be a JSON object (at /)")
        for key in _REQUIRED_KEYS:
            if key not in data:
                raise SchemaError(f"missing required key (at /{key})")
        if data["schema_version"] != SCHEMA_VERSION:
            raise SchemaError(
                f"unsupported schema_version {data['schema_version']!r} "
                "(at /schema_version)"
            )

        def load(section: str, loader):
            try:
                return loader(data[section])
            except SchemaError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"malformed section (at /{section}): {exc}") from exc

        config = load("config", ReconcileConfig.from_dict)
        world = cls(seed=0, config=config)
        if not isinstance(data["clock"], int) or data["clock"] < 0:
            raise SchemaError("clock must be a non-negative integer (at /clock)")
        world.clock = data["clock"]
        now = world.now
        world.secrets = load("secrets", SecretSource.from_dict)
        world.audit = load("audit", AuditLog.from_dict)
        world.directory = load(
            "directory", lambda d: Directory.from_dict(d, world.audit, now)
        )
        world.cloud = load("cloud", lambda d: Cloud.from_dict(d, world.audit, now))
        world.vault = load(
            "vault",
            lambda d: Vault.from_dict(d, world.audit, now, world.directory.has_principal),
        )
        world.tokens = load("tokens", TokenStore.from_dict)
        world.onboarder = load(
            "onboarder",
            lambda d: Onboarder.from_dict(d, world.directory, world.cloud, world.audit, now),
        )
        world.reconciler = Reconciler(
            world.directory, world.cloud, world.vault, world.secrets,
            world.config, world.audit, now,
        )
        load("reconcile", world.reconciler.load_state)
        world.authz = AuthzEngine(world.cloud, world.vault, world.tokens, world.audit, now)
        load("authz", world.authz.load_state)
        return world

    # -- files ---------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.export_text(reveal_secrets=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "World":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"state file is not valid JSON: {exc}") from exc
        return cls.from_dict(data)
