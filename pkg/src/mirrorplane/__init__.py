"""Simulated hybrid-cloud identity control plane.

On-premise identities are reconciled into 1:1 cloud mirror service accounts
with vault-held keys, least-privilege bindings, reader-group sharing,
quota-aware sharding, and a gapless audit trail.
"""

from .audit import AuditEvent, AuditLog, Category, Outcome
from .authz import AccessAction, AccessDecision, AuthzEngine, Decision, DecisionReason, Token
from .cloud import Cloud, MirrorAccount, NodeKind, ResourceNode, Role, RoleBinding
from .directory import Directory, DirectoryGroup, PrincipalKind, PrincipalRecord
from .onboarder import BucketMapping, Onboarder, ReaderGroupPair, map_hdfs_path
from .reconciler import ReconcileConfig, ReconcileReport, Reconciler, ShardingMode, derive_mirror_name
from .vault import KeyState, KeyVersion, SecretSource, Vault, VaultEntry
from .verify import Violation, verify_world
from .world import World

__version__ = "0.1.0"

__all__ = [
    "AccessAction",
    "AccessDecision",
    "AuditEvent",
    "AuditLog",
    "AuthzEngine",
    "BucketMapping",
    "Category",
    "Cloud",
    "Decision",
    "DecisionReason",
    "Directory",
    "DirectoryGroup",
    "KeyState",
    "KeyVersion",
    "MirrorAccount",
    "NodeKind",
    "Onboarder",
    "Outcome",
    "PrincipalKind",
    "PrincipalRecord",
    "ReaderGroupPair",
    "ReconcileConfig",
    "ReconcileReport",
    "Reconciler",
    "ResourceNode",
    "Role",
    "RoleBinding",
    "SecretSource",
    "ShardingMode",
    "Token",
    "Vault",
    "VaultEntry",
    "Violation",
    "World",
    "derive_mirror_name",
    "map_hdfs_path",
    "verify_world",
]
