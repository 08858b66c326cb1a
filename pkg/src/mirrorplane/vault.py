"""On-premise vault holding mirror-account key files.

Custody rules, not cryptography: secrets are opaque 128-bit hex tokens from a
seeded deterministic source.  The owner (the mirror's source principal) may
read the newest active version and nothing else; nobody, owner included, may
modify a stored version.  Writes happen only on the control-plane path
(store / expire / revoke) so every lifecycle transition is forced through the
audited state machine active -> retiring -> invalid.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .audit import CONTROL_PLANE, AuditLog, Category, Outcome
from .errors import (
    NoActiveKey,
    OwnerMismatch,
    PermissionDenied,
    UnknownEntry,
    UnknownOwner,
)

REDACTED = "[redacted]"
SECRET_HEX_CHARS = 32  # 128 bits


class KeyState(str, Enum):
    ACTIVE = "active"
    RETIRING = "retiring"
    INVALID = "invalid"


class SecretSource:
    """Deterministic stream of 128-bit hex secrets.

    A hash of ``seed:counter`` stands in for real key material so identical
    (seed, script) runs produce byte-identical state.
    """

    def __init__(self, seed: int, counter: int = 0) -> None:
        self.seed = seed
        self.counter = counter

    def next_secret(self) -> str:
        digest = hashlib.sha256(f"{self.seed}:{self.counter}".encode()).hexdigest()
        self.counter += 1
        return digest[:SECRET_HEX_CHARS]

    def to_dict(self) -> dict:
        return {"seed": self.seed, "counter": self.counter}

    @classmethod
    def from_dict(cls, data: dict) -> "SecretSource":
        return cls(seed=data["seed"], counter=data["counter"])


@dataclass
class KeyVersion:
    key_id: str
    account_email: str
    secret: str
    state: KeyState
    created_at: int
    retiring_since: int | None = None
    # Every state this version has been in, oldest first; lets the invariant
    # checker prove transitions never ran backwards.
    state_history: list[str] = field(default_factory=lambda: [KeyState.ACTIVE.value])

    def _transition(self, new_state: KeyState) -> None:
        self.state = new_state
        self.state_history.append(new_state.value)

    def to_dict(self, reveal_secrets: bool = True) -> dict:
        return {
            "key_id": self.key_id,
            "account_email": self.account_email,
            "secret": self.secret if reveal_secrets else REDACTED,
            "state": self.state.value,
            "created_at": self.created_at,
            "retiring_since": self.retiring_since,
            "state_history": list(self.state_history),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KeyVersion":
        return cls(
            key_id=data["key_id"],
            account_email=data["account_email"],
            secret=data["secret"],
            state=KeyState(data["state"]),
            created_at=data["created_at"],
            retiring_since=data.get("retiring_since"),
            state_history=list(data["state_history"]),
        )


@dataclass
class VaultEntry:
    account_email: str
    owner_principal: str
    versions: list[KeyVersion] = field(default_factory=list)  # newest first
    next_serial: int = 1

    def active_version(self) -> KeyVersion | None:
        for version in self.versions:
            if version.state is KeyState.ACTIVE:
                return version
        return None

    def to_dict(self, reveal_secrets: bool = True) -> dict:
        return {
            "account_email": self.account_email,
            "owner_principal": self.owner_principal,
            "versions": [v.to_dict(reveal_secrets) for v in self.versions],
            "next_serial": self.next_serial,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VaultEntry":
        return cls(
            account_email=data["account_email"],
            owner_principal=data["owner_principal"],
            versions=[KeyVersion.from_dict(v) for v in data["versions"]],
            next_serial=data["next_serial"],
        )


class Vault:
    """Secret store with owner-only read and control-plane-only write."""

    def __init__(
        self,
        audit: AuditLog,
        now: Callable[[], int],
        owner_exists: Callable[[str], bool],
    ) -> None:
        self._audit = audit
        self._now = now
        self._owner_exists = owner_exists
        self._entries: dict[str, VaultEntry] = {}

    # -- queries ----------------------------------------------------------

    def has_entry(self, account_email: str) -> bool:
        return account_email in self._entries

    def entry(self, account_email: str) -> VaultEntry:
        try:
            return self._entries[account_email]
        except KeyError:
            raise UnknownEntry(f"no vault entry for {account_email!r}") from None

    def entries(self) -> list[VaultEntry]:
        return [self._entries[e] for e in sorted(self._entries)]

    def active_version(self, account_email: str) -> KeyVersion | None:
        entry = self._entries.get(account_email)
        return entry.active_version() if entry else None

    def find_version(self, key_id: str) -> KeyVersion | None:
        email = key_id.split("#", 1)[0]
        entry = self._entries.get(email)
        if entry is None:
            return None
        for version in entry.versions:
            if version.key_id == key_id:
                return version
        return None

    # -- control-plane writes ---------------------------------------------

    def store_key(
        self,
        account_email: str,
        owner: str,
        secret: str,
        tick_id: int | None = None,
    ) -> KeyVersion:
        """Prepend a fresh active version; the prior active one starts retiring.

        Only the reconciler calls this; there is no user-facing write path.
        """
        if not self._owner_exists(owner):
            raise UnknownOwner(f"no principal named {owner!r}")
        now = self._now()
        entry = self._entries.get(account_email)
        if entry is None:
            entry = VaultEntry(account_email=account_email, owner_principal=owner)
            self._entries[account_email] = entry
        elif entry.owner_principal != owner:
            # All versions of an entry share one owner; a mismatch means the
            # 1:1 mapping is corrupt and this account's tick work must stop.
            raise OwnerMismatch(
                f"entry for {account_email!r} is owned by "
                f"{entry.owner_principal!r}, not {owner!r}"
            )
        prior = entry.active_version()
        if prior is not None:
            prior._transition(KeyState.RETIRING)
            prior.retiring_since = now
        version = KeyVersion(
            key_id=f"{account_email}#v{entry.next_serial}",
            account_email=account_email,
            secret=secret,
            state=KeyState.ACTIVE,
            created_at=now,
        )
        entry.next_serial += 1
        entry.versions.insert(0, version)
        self._audit.emit(
            at=now,
            actor=CONTROL_PLANE,
            action="vault.store_key",
            target=version.key_id,
            outcome=Outcome.SUCCESS,
            category=Category.MUTATION,
            tick_id=tick_id,
        )
        return version

    def expire_versions(
        self, now: int, grace: int, tick_id: int | None = None
    ) -> list[tuple[str, str, str]]:
        """Invalidate every retiring version whose grace window has elapsed.

        The boundary is inclusive: a version retiring since t expires at
        exactly t + grace.  Returns (key_id, from_state, to_state) triples.
        """
        transitions: list[tuple[str, str, str]] = []
        for email in sorted(self._entries):
            for version in self._entries[email].versions:
                if version.state is KeyState.RETIRING:
                    assert version.retiring_since is not None
                    if now - version.retiring_since >= grace:
                        version._transition(KeyState.INVALID)
                        transitions.append(
                            (version.key_id, KeyState.RETIRING.value, KeyState.INVALID.value)
                        )
                        self._audit.emit(
                            at=now,
                            actor=CONTROL_PLANE,
                            action="vault.expire_key",
                            target=version.key_id,
                            outcome=Outcome.SUCCESS,
                            category=Category.MUTATION,
                            tick_id=tick_id,
                        )
        return transitions

    def revoke_all(self, account_email: str, tick_id: int | None = None) -> int:
        """Invalidate every non-invalid version of the entry (decommission)."""
        entry = self.entry(account_email)
        count = 0
        for version in entry.versions:
            if version.state is not KeyState.INVALID:
                version._transition(KeyState.INVALID)
                count += 1
                self._audit.emit(
                    at=self._now(),
                    actor=CONTROL_PLANE,
                    action="vault.revoke_key",
                    target=version.key_id,
                    outcome=Outcome.SUCCESS,
                    category=Category.MUTATION,
                    tick_id=tick_id,
                )
        return count

    # -- principal-facing access -------------------------------------------

    def read_key(
        self, account_email: str, caller: str, job_id: str | None = None
    ) -> KeyVersion:
        """Owner-gated read of the newest active version.  Reads are audited."""
        now = self._now()

        def denied(exc_type, message: str):
            self._audit.emit(
                at=now,
                actor=caller,
                action="vault.read_key",
                target=account_email,
                outcome=Outcome.FAILURE,
                category=Category.DECISION,
                job_id=job_id,
            )
            return exc_type(message)

        entry = self._entries.get(account_email)
        if entry is None:
            raise denied(NoActiveKey, f"no vault entry for {account_email!r}")
        if caller != entry.owner_principal:
            raise denied(
                PermissionDenied,
                f"{caller!r} does not own the key file for {account_email!r}",
            )
        version = entry.active_version()
        if version is None:
            raise denied(NoActiveKey, f"no active key for {account_email!r}")
        self._audit.emit(
            at=now,
            actor=caller,
            action="vault.read_key",
            target=version.key_id,
            outcome=Outcome.SUCCESS,
            category=Category.DECISION,
            job_id=job_id,
        )
        return version

    def modify_key(self, account_email: str, caller: str) -> None:
        """Unconditionally denied, for everyone including the owner."""
        self._audit.emit(
            at=self._now(),
            actor=caller,
            action="vault.modify_key",
            target=account_email,
            outcome=Outcome.FAILURE,
            category=Category.DECISION,
        )
        raise PermissionDenied(
            f"key files are immutable; {caller!r} may not modify {account_email!r}"
        )

    # -- serialization -------------------------------------------------------

    def to_dict(self, reveal_secrets: bool = True) -> dict:
        return {"entries": [e.to_dict(reveal_secrets) for e in self.entries()]}

    @classmethod
    def from_dict(
        cls,
        data: dict,
        audit: AuditLog,
        now: Callable[[], int],
        owner_exists: Callable[[str], bool],
    ) -> "Vault":
        vault = cls(audit, now, owner_exists)
        for item in data["entries"]:
            entry = VaultEntry.from_dict(item)
            vault._entries[entry.account_email] = entry
        return vault
