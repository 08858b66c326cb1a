"""Data-plane simulation: token minting and access decisions.

Tokens are minted either by reading one's own vault key (headless path) or
through an ActAs grant (human workspace path).  A token stays valid while the
key version it was minted from is active or retiring and the subject account
is active, so rotation grace and decommission fall out of key/account
lifecycle with no token TTLs.  Every attempt, allowed or denied, is audited.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .audit import AuditLog, Category, Outcome
from .cloud import (
    AccountStatus,
    Cloud,
    NodeKind,
    Role,
    sa_principal,
    workspace_principal,
)
from .errors import (
    AuthFailure,
    InvalidJobSpec,
    NoActiveKey,
    PermissionDenied,
    UnknownBucket,
    UnknownNode,
)
from .vault import KeyState, Vault

WORKSPACE_PREFIX = "workspace:"


class AccessAction(str, Enum):
    READ = "read"
    WRITE = "write"


class Decision(str, Enum):
    ALLOW = "allow"
    DENY = "deny"


class DecisionReason(str, Enum):
    OWNER = "Owner"
    READER_GROUP = "ReaderGroup"
    NOT_AUTHORIZED = "NotAuthorized"
    INVALID_TOKEN = "InvalidToken"
    DISABLED_ACCOUNT = "DisabledAccount"


ALLOW_REASONS = {DecisionReason.OWNER, DecisionReason.READER_GROUP}


@dataclass(frozen=True)
class AccessDecision:
    decision: Decision
    reason: DecisionReason

    @property
    def allowed(self) -> bool:
        return self.decision is Decision.ALLOW

    def render(self) -> str:
        return f"{self.decision.value.upper()} {self.reason.value}"

    def to_dict(self) -> dict:
        return {"decision": self.decision.value, "reason": self.reason.value}


@dataclass
class Token:
    token_id: str
    subject: str  # mirror account email
    minted_from: str  # key_id
    issued_at: int
    via_actas: str | None = None

    def to_dict(self) -> dict:
        return {
            "token_id": self.token_id,
            "subject": self.subject,
            "minted_from": self.minted_from,
            "issued_at": self.issued_at,
            "via_actas": self.via_actas,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Token":
        return cls(
            token_id=data["token_id"],
            subject=data["subject"],
            minted_from=data["minted_from"],
            issued_at=data["issued_at"],
            via_actas=data.get("via_actas"),
        )


class TokenStore:
    def __init__(self) -> None:
        self._tokens: dict[str, Token] = {}
        self._next = 1

    def mint(self, subject: str, minted_from: str, issued_at: int, via_actas: str | None) -> Token:
        token = Token(
            token_id=f"tok-{self._next:06d}",
            subject=subject,
            minted_from=minted_from,
            issued_at=issued_at,
            via_actas=via_actas,
        )
        self._next += 1
        self._tokens[token.token_id] = token
        return token

    def get(self, token_id: str) -> Token | None:
        return self._tokens.get(token_id)

    def tokens(self) -> list[Token]:
        return [self._tokens[t] for t in sorted(self._tokens)]

    def to_dict(self) -> dict:
        return {"next": self._next, "tokens": [t.to_dict() for t in self.tokens()]}

    @classmethod
    def from_dict(cls, data: dict) -> "TokenStore":
        store = cls()
        store._next = data["next"]
        for item in data["tokens"]:
            token = Token.from_dict(item)
            store._tokens[token.token_id] = token
        return store


@dataclass
class JobResult:
    job_id: str
    subject: str
    results: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "subject": self.subject,
            "results": [dict(r) for r in self.results],
        }

    def render(self) -> str:
        lines = [f"{self.job_id} as {self.subject}"]
        for r in self.results:
            outcome = r.get("error") or f"{r['decision'].upper()} {r['reason']}"
            lines.append(f"  {r['action']} {r['bucket']}: {outcome}")
        return "\n".join(lines)


class AuthzEngine:
    def __init__(
        self,
        cloud: Cloud,
        vault: Vault,
        tokens: TokenStore,
        audit: AuditLog,
        now: Callable[[], int],
    ) -> None:
        self.cloud = cloud
        self.vault = vault
        self.tokens = tokens
        self._audit = audit
        self._now = now
        self._next_job = 1

    # -- authentication --------------------------------------------------

    def authenticate(self, caller: str, account_email: str, job_id: str | None = None) -> Token:
        """Mint a token by reading the caller's own vault key.

        The vault's owner gate does the heavy lifting: any non-owner caller is
        denied there, which is the impersonation threat path.
        """
        now = self._now()

        def fail(exc: Exception) -> Exception:
            self._audit.emit(
                at=now,
                actor=caller,
                action="authn.token",
                target=account_email,
                outcome=Outcome.FAILURE,
                category=Category.DECISION,
                job_id=job_id,
            )
            return exc

        try:
            key = self.vault.read_key(account_email, caller, job_id=job_id)
        except PermissionDenied as exc:
            raise fail(PermissionDenied(str(exc))) from None
        except NoActiveKey as exc:
            raise fail(AuthFailure(str(exc))) from None
        if not self._account_is_active(account_email):
            raise fail(AuthFailure(f"account {account_email!r} is not active"))
        token = self.tokens.mint(account_email, key.key_id, now, via_actas=None)
        self._audit.emit(
            at=now,
            actor=caller,
            action="authn.token",
            target=account_email,
            outcome=Outcome.SUCCESS,
            category=Category.DECISION,
            job_id=job_id,
        )
        return token

    def impersonate(self, workspace_identity: str, account_email: str, job_id: str | None = None) -> Token:
        """Mint a token through an ActAs grant.

        Humans only ever hold ActAs on their own mirror, so every
        human-to-headless attempt lands in PermissionDenied here.
        """
        identity = workspace_identity.removeprefix(WORKSPACE_PREFIX)
        principal = workspace_principal(identity)
        now = self._now()

        def fail(exc: Exception) -> Exception:
            self._audit.emit(
                at=now,
                actor=principal,
                action="authn.impersonate",
                target=account_email,
                outcome=Outcome.FAILURE,
                category=Category.DECISION,
                job_id=job_id,
            )
            return exc

        if not self.cloud.has_account(account_email):
            raise fail(PermissionDenied(f"no ActAs grant on {account_email!r}"))
        if self.cloud.account(account_email).status is AccountStatus.DISABLED:
            raise fail(AuthFailure(f"account {account_email!r} is disabled"))
        if not self.cloud.has_binding(account_email, Role.ACT_AS, principal):
            raise fail(
                PermissionDenied(
                    f"{principal!r} has no ActAs grant on {account_email!r}"
                )
            )
        key = self.vault.active_version(account_email)
        if key is None:
            raise fail(AuthFailure(f"no active key for {account_email!r}"))
        token = self.tokens.mint(account_email, key.key_id, now, via_actas=identity)
        self._audit.emit(
            at=now,
            actor=principal,
            action="authn.impersonate",
            target=account_email,
            outcome=Outcome.SUCCESS,
            category=Category.DECISION,
            job_id=job_id,
        )
        return token

    def _account_is_active(self, email: str) -> bool:
        return (
            self.cloud.has_account(email)
            and self.cloud.account(email).status is AccountStatus.ACTIVE
        )

    # -- authorization -----------------------------------------------------

    def token_status(self, token: Token) -> DecisionReason | None:
        """None if the token is usable, else the Deny reason."""
        if not self._account_is_active(token.subject):
            return DecisionReason.DISABLED_ACCOUNT
        key = self.vault.find_version(token.minted_from)
        if key is None or key.state is KeyState.INVALID:
            return DecisionReason.INVALID_TOKEN
        return None

    def authorize(
        self,
        token: Token | str,
        bucket_id: str,
        action: AccessAction,
        job_id: str | None = None,
    ) -> AccessDecision:
        """Decide one (token, bucket, action) triple and audit it.

        Owners read and write their bucket; reader-group members read only.
        Group membership is evaluated now, not at mint time, so a sync that
        just ran is immediately visible.
        """
        try:
            bucket = self.cloud.node(bucket_id)
        except UnknownNode:
            raise UnknownBucket(f"no bucket {bucket_id!r}") from None
        if bucket.kind is not NodeKind.BUCKET:
            raise UnknownBucket(f"{bucket_id!r} is not a bucket")

        if isinstance(token, str):
            resolved = self.tokens.get(token)
        else:
            resolved = token
        if resolved is None:
            # Unknown token id: deniable without a subject to attribute.
            return self._decide(
                str(token), bucket.id, action,
                AccessDecision(Decision.DENY, DecisionReason.INVALID_TOKEN),
                job_id,
            )

        bad = self.token_status(resolved)
        if bad is not None:
            return self._decide(
                resolved.subject, bucket.id, action,
                AccessDecision(Decision.DENY, bad), job_id,
            )

        subject = sa_principal(resolved.subject)
        if self.cloud.has_binding(bucket.id, Role.BUCKET_OWNER, subject):
            return self._decide(
                resolved.subject, bucket.id, action,
                AccessDecision(Decision.ALLOW, DecisionReason.OWNER), job_id,
            )
        if action is AccessAction.READ and self._in_reader_group(bucket.id, subject):
            return self._decide(
                resolved.subject, bucket.id, action,
                AccessDecision(Decision.ALLOW, DecisionReason.READER_GROUP), job_id,
            )
        return self._decide(
            resolved.subject, bucket.id, action,
            AccessDecision(Decision.DENY, DecisionReason.NOT_AUTHORIZED), job_id,
        )

    def _in_reader_group(self, bucket_id: str, subject: str) -> bool:
        for binding in self.cloud.node(bucket_id).bindings:
            if binding.role is not Role.BUCKET_READER:
                continue
            if not binding.principal.startswith("group:"):
                continue
            group_id = binding.principal.removeprefix("group:")
            if not self.cloud.has_node(group_id):
                continue
            if self.cloud.has_binding(group_id, Role.GROUP_MEMBER, subject):
                return True
        return False

    def _decide(
        self,
        actor: str,
        bucket_id: str,
        action: AccessAction,
        decision: AccessDecision,
        job_id: str | None,
    ) -> AccessDecision:
        self._audit.emit(
            at=self._now(),
            actor=actor,
            action=f"authorize.{action.value}",
            target=bucket_id,
            outcome=Outcome.SUCCESS if decision.allowed else Outcome.FAILURE,
            category=Category.DECISION,
            job_id=job_id,
        )
        return decision

    # -- jobs -------------------------------------------------------------

    def submit_job(
        self,
        caller: str,
        account_email: str,
        bucket_paths: list[str],
        actions: list[AccessAction],
    ) -> JobResult:
        """Authenticate once, then authorize every (bucket, action) pair.

        Callers prefixed ``workspace:`` go through impersonation.  Auth
        failures propagate before any authorization runs; per-path failures
        (unknown buckets, denials) are recorded and do not stop the rest.
        """
        if not bucket_paths or len(bucket_paths) != len(actions):
            raise InvalidJobSpec("job needs equal, nonempty path and action lists")
        job_id = f"job-{self._next_job:04d}"
        self._next_job += 1
        if caller.startswith(WORKSPACE_PREFIX):
            token = self.impersonate(caller, account_email, job_id=job_id)
        else:
            token = self.authenticate(caller, account_email, job_id=job_id)
        result = JobResult(job_id=job_id, subject=token.subject)
        for bucket_id, action in zip(bucket_paths, actions):
            entry = {"bucket": bucket_id, "action": action.value}
            try:
                decision = self.authorize(token, bucket_id, action, job_id=job_id)
            except UnknownBucket as exc:
                entry["error"] = f"UnknownBucket: {exc}"
            else:
                entry["decision"] = decision.decision.value
                entry["reason"] = decision.reason.value
            result.results.append(entry)
        return result

    def to_dict(self) -> dict:
        return {"next_job": self._next_job}

    def load_state(self, data: dict) -> None:
        self._next_job = data["next_job"]
