import pytest

from mirrorplane import (
    KeyState,
    PrincipalKind,
    ReconcileConfig,
    Role,
    ShardingMode,
    World,
    derive_mirror_name,
)
from mirrorplane.cloud import AccountStatus, workspace_principal
from mirrorplane.directory import SOURCE_OF_TRUTH_GROUP
from mirrorplane.errors import NoMirror, UnderscoreNotSupported

from conftest import POSTS_HOME, SAP, mirror


def test_derive_mirror_name_examples():
    assert derive_mirror_name("helen", SAP) == mirror("helen")
    assert derive_mirror_name("posts-analyze", SAP) == mirror("posts-analyze")
    with pytest.raises(UnderscoreNotSupported):
        derive_mirror_name("data_pipeline", SAP)


def test_config_validation():
    with pytest.raises(ValueError):
        ReconcileConfig(rotation_age=10, tick_interval=15).validate()
    with pytest.raises(ValueError):
        ReconcileConfig(retiring_grace=0).validate()
    ReconcileConfig().validate()


def test_select_project_single_mode_creates_base_on_demand(populated):
    reconciler = populated.reconciler
    record = populated.directory.principal("helen")
    assert reconciler.select_project(record) == SAP
    assert populated.cloud.node(SAP).parent == "IAMSTORE"
    assert populated.cloud.node("IAMSTORE").parent == "org"


def test_select_project_per_org_unit(world):
    world.config.sharding_mode = ShardingMode.PER_ORG_UNIT
    record = world.directory.add_principal(
        "dev1", PrincipalKind.HUMAN, None, org_unit="dev"
    )
    project = world.reconciler.select_project(record)
    assert project == "dev-service-accounts-project"
    assert world.cloud.node(project).parent == "DEVIAM"


def test_select_project_overflows_past_full_projects(world):
    world.config.sharding_mode = ShardingMode.PER_ORG_UNIT
    world.config.quota_default = 2
    world.cloud.default_quota = 2
    world.directory.add_group(SOURCE_OF_TRUTH_GROUP)
    for i in range(5):
        world.directory.add_principal(f"dev-{i}", PrincipalKind.HEADLESS, None, org_unit="dev")
        world.directory.join_group(SOURCE_OF_TRUTH_GROUP, f"dev-{i}")
    report = world.reconciler.reconcile_tick()
    assert len(report.created) == 5 and not report.errors
    counts = {
        q.project: q.current_count
        for q in world.cloud.quotas()
        if q.current_count
    }
    assert counts == {
        "dev-service-accounts-project": 2,
        "dev-service-accounts-project-2": 2,
        "dev-service-accounts-project-3": 1,
    }
    for project in counts:
        assert world.cloud.node(project).parent == "DEVIAM"


def test_first_tick_converges_fresh_world(populated):
    report = populated.reconciler.reconcile_tick()
    assert sorted(report.created) == [mirror("helen"), mirror("posts-analyze")]
    assert report.actas_granted == [mirror("helen")]  # humans only
    assert report.rotated == report.decommissioned == []
    assert populated.vault.entry(mirror("helen")).owner_principal == "helen"
    assert populated.vault.entry(mirror("posts-analyze")).owner_principal == "posts-analyze"
    assert populated.cloud.has_binding(
        mirror("helen"), Role.ACT_AS, workspace_principal("helen")
    )
    assert populated.cloud.node(mirror("posts-analyze")).bindings == []


def test_second_tick_is_empty_and_silent(converged):
    events = len(converged.audit)
    report = converged.reconciler.reconcile_tick()
    assert not report.has_changes
    assert report.created == report.rotated == report.actas_granted == []
    assert len(converged.audit) == events  # no-op convergence emits nothing


def test_rotation_at_exact_boundary(converged):
    age = converged.config.rotation_age
    converged.advance(age - 1)
    assert converged.reconciler.reconcile_tick().rotated == []
    converged.advance(1)
    report = converged.reconciler.reconcile_tick()
    assert sorted(report.rotated) == [mirror("helen"), mirror("posts-analyze")]
    for email in report.rotated:
        states = [v.state for v in converged.vault.entry(email).versions]
        assert states == [KeyState.ACTIVE, KeyState.RETIRING]


def test_retiring_keys_phase_out_after_grace(converged):
    converged.advance(converged.config.rotation_age)
    converged.reconciler.reconcile_tick()
    converged.advance(converged.config.retiring_grace - 1)
    converged.reconciler.reconcile_tick()
    states = [v.state for v in converged.vault.entry(mirror("helen")).versions]
    assert states == [KeyState.ACTIVE, KeyState.RETIRING]
    converged.advance(1)
    converged.reconciler.reconcile_tick()
    states = [v.state for v in converged.vault.entry(mirror("helen")).versions]
    assert states == [KeyState.ACTIVE, KeyState.INVALID]


def test_leaving_group_decommissions(converged):
    converged.directory.leave_group(SOURCE_OF_TRUTH_GROUP, "posts-analyze")
    report = converged.reconciler.reconcile_tick()
    assert report.decommissioned == [mirror("posts-analyze")]
    assert converged.cloud.account(mirror("posts-analyze")).status is AccountStatus.DISABLED
    assert all(
        v.state is KeyState.INVALID
        for v in converged.vault.entry(mirror("posts-analyze")).versions
    )


def test_removing_principal_decommissions_and_strips_actas(converged):
    converged.directory.remove_principal("helen")
    report = converged.reconciler.reconcile_tick()
    assert report.decommissioned == [mirror("helen")]
    assert converged.cloud.node(mirror("helen")).bindings == []


def test_decommission_requires_active_mirror(converged):
    with pytest.raises(NoMirror):
        converged.reconciler.decommission("ghost")
    converged.reconciler.decommission("helen")
    with pytest.raises(NoMirror):
        converged.reconciler.decommission("helen")


def test_removed_then_readded_principal_gets_fresh_mirror(converged):
    converged.directory.remove_principal("posts-analyze")
    converged.reconciler.reconcile_tick()
    old_versions = [
        v.key_id for v in converged.vault.entry(mirror("posts-analyze")).versions
    ]

    converged.advance(60)
    converged.directory.add_principal("posts-analyze", PrincipalKind.HEADLESS, POSTS_HOME)
    converged.directory.join_group(SOURCE_OF_TRUTH_GROUP, "posts-analyze")
    report = converged.reconciler.reconcile_tick()
    assert report.created == [mirror("posts-analyze")]

    entry = converged.vault.entry(mirror("posts-analyze"))
    assert converged.cloud.account(mirror("posts-analyze")).status is AccountStatus.ACTIVE
    # Old credentials stay dead; only the fresh version is live.
    for version in entry.versions:
        if version.key_id in old_versions:
            assert version.state is KeyState.INVALID
    assert entry.active_version().key_id not in old_versions


def test_underscore_members_rejected_every_tick(populated):
    populated.directory.add_principal("ads_report", PrincipalKind.HEADLESS, None)
    populated.directory.join_group(SOURCE_OF_TRUTH_GROUP, "ads_report")
    first = populated.reconciler.reconcile_tick()
    assert first.rejected == [
        {"principal": "ads_report", "reason": "UnderscoreNotSupported"}
    ]
    assert populated.cloud.active_mirror_for("ads_report") is None
    second = populated.reconciler.reconcile_tick()
    assert second.rejected == first.rejected  # still a member, still rejected
    assert not second.has_changes


def test_tick_aborts_cleanly_without_source_group():
    world = World.new(seed=5)
    before = (world.cloud.to_dict(), world.vault.to_dict(), world.directory.to_dict())
    report = world.reconciler.reconcile_tick()
    assert len(report.errors) == 1
    assert report.errors[0]["error"] == "GroupMissing"
    assert (world.cloud.to_dict(), world.vault.to_dict(), world.directory.to_dict()) == before

    world.directory.add_group(SOURCE_OF_TRUTH_GROUP)
    report = world.reconciler.reconcile_tick()
    assert report.errors[0]["error"] == "GroupEmpty"
    assert report.tick_id == 2


def test_member_errors_do_not_abort_tick(populated):
    # Corrupt helen's would-be vault entry so her store fails mid-tick.
    populated.directory.add_principal("mallory", PrincipalKind.HUMAN, None)
    populated.vault.store_key(mirror("helen"), "mallory", "ee" * 16)
    report = populated.reconciler.reconcile_tick()
    assert [e["principal"] for e in report.errors] == ["helen"]
    assert report.errors[0]["error"] == "OwnerMismatch"
    # The other member still converged.
    assert report.created == [mirror("posts-analyze")]


def test_report_entries_map_to_audit_events(converged):
    converged.advance(converged.config.rotation_age)
    converged.directory.add_principal("newbie", PrincipalKind.HUMAN, None)
    converged.directory.join_group(SOURCE_OF_TRUTH_GROUP, "newbie")
    converged.directory.leave_group(SOURCE_OF_TRUTH_GROUP, "posts-analyze")
    report = converged.reconciler.reconcile_tick()
    tick_events = converged.audit.query(tick_id=report.tick_id)

    def targets(action_prefix):
        return [e.target for e in tick_events if e.action.startswith(action_prefix)]

    for email in report.created:
        assert email in targets("cloud.create_service_account")
    for email in report.rotated:
        assert any(t.startswith(email) for t in targets("vault.store_key"))
    for email in report.actas_granted:
        assert any(t.startswith(email) for t in targets("cloud.bind_role.act-as"))
    for email in report.decommissioned:
        assert email in targets("cloud.disable_service_account")


def test_run_ticks_advances_between_ticks(populated):
    reports = populated.reconciler.run_ticks(3, populated.advance)
    assert [r.tick_id for r in reports] == [1, 2, 3]
    assert populated.clock == 3 * populated.config.tick_interval
    assert reports[1].at == populated.config.tick_interval
