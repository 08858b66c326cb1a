"""Command-line entry point wiring every module over one persisted world.

State lives in a single canonical JSON file (``--state``, default
``./world.json``); the audit log additionally appends to a line-delimited
sidecar next to it.  Exit codes: 0 success, 1 command error, 2 verify found
violations.
"""

from __future__ import annotations

import io
import json
from contextlib import redirect_stdout
from pathlib import Path

import click

from .authz import AccessAction
from .cloud import Cloud, MirrorAccount
from .directory import PrincipalKind
from .durations import parse_duration
from .errors import ControlPlaneError, NotFound, ParseError, StateFileMissing
from .reconciler import ReconcileConfig, ShardingMode
from .scenario import run_script
from .verify import verify_world
from .world import World, canonical_json, compact_json


class VerificationFailed(ControlPlaneError):
    """Raised by ``verify`` when violations exist; maps to exit code 2."""


class Session:
    """World handle plus persistence policy for one CLI invocation."""

    def __init__(
        self,
        state_path: str | Path | None = None,
        world: World | None = None,
        persist: bool = True,
    ) -> None:
        self.state_path = Path(state_path) if state_path is not None else None
        self._world = world
        self.persist = persist and self.state_path is not None
        self._rewrite_sidecar = False

    @property
    def audit_path(self) -> Path:
        assert self.state_path is not None
        return Path(f"{self.state_path}.audit.jsonl")

    @property
    def world(self) -> World:
        if self._world is None:
            if self.state_path is None or not self.state_path.exists():
                raise StateFileMissing(
                    f"no state file at {self.state_path}; run 'init' first"
                )
            self._world = World.load(self.state_path)
        return self._world

    def replace(self, world: World) -> None:
        self._world = world
        self._rewrite_sidecar = True

    def commit(self) -> None:
        if not self.persist:
            return
        self.world.save(self.state_path)
        self._sync_audit_sidecar()

    def _sync_audit_sidecar(self) -> None:
        """Mirror audit events into the append-only line-delimited sidecar."""
        events = self.world.audit.events()
        path = self.audit_path
        existing = 0
        if path.exists() and not self._rewrite_sidecar:
            with open(path, encoding="utf-8") as handle:
                existing = sum(1 for _ in handle)
        if self._rewrite_sidecar or existing > len(events):
            path.write_text(
                "".join(compact_json(e.to_dict()) + "\n" for e in events),
                encoding="utf-8",
            )
            self._rewrite_sidecar = False
            return
        if existing < len(events):
            with open(path, "a", encoding="utf-8") as handle:
                for event in events[existing:]:
                    handle.write(compact_json(event.to_dict()) + "\n")


def _load_config_file(path: str) -> ReconcileConfig:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return _config_from_mapping(raw)


def _config_from_mapping(raw: dict) -> ReconcileConfig:
    known = {
        "tick_interval", "rotation_age", "retiring_grace",
        "sharding_mode", "base_project", "quota_default",
    }
    unknown = set(raw) - known
    if unknown:
        raise ParseError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key in ("tick_interval", "rotation_age", "retiring_grace"):
        if key in raw:
            value = raw[key]
            kwargs[key] = value if isinstance(value, int) else parse_duration(value)
    if "sharding_mode" in raw:
        kwargs["sharding_mode"] = ShardingMode(raw["sharding_mode"])
    if "base_project" in raw:
        kwargs["base_project"] = raw["base_project"]
    if "quota_default" in raw:
        kwargs["quota_default"] = int(raw["quota_default"])
    config = ReconcileConfig(**kwargs)
    config.validate()
    return config


@click.group()
@click.option(
    "--state",
    "state_path",
    default="world.json",
    show_default=True,
    help="Path of the world state file.",
)
@click.pass_context
def cli(ctx: click.Context, state_path: str) -> None:
    """Simulated hybrid-cloud identity control plane."""
    if ctx.obj is None:
        ctx.obj = Session(state_path)


@cli.command()
@click.option("--seed", default=0, show_default=True, help="Seed for secret generation.")
@click.option("--config", "config_file", type=click.Path(exists=True), default=None,
              help="JSON config file (durations accept 15m/2h/7d forms).")
@click.option("--sharding-mode", type=click.Choice([m.value for m in ShardingMode]),
              default=None, help="Override sharding mode.")
@click.option("--base-project", default=None, help="Override base project id.")
@click.option("--quota-default", type=int, default=None,
              help="Override per-project service-account limit.")
@click.option("--force", is_flag=True, help="Overwrite an existing state file.")
@click.pass_obj
def init(session: Session, seed: int, config_file: str | None,
         sharding_mode: str | None, base_project: str | None,
         quota_default: int | None, force: bool) -> None:
    """Create a fresh world (organization root only)."""
    if session.state_path is not None and session.state_path.exists() and not force:
        raise ControlPlaneError(
            f"state file {session.state_path} exists; use --force to overwrite"
        )
    config = _load_config_file(config_file) if config_file else ReconcileConfig()
    if sharding_mode is not None:
        config.sharding_mode = ShardingMode(sharding_mode)
    if base_project is not None:
        config.base_project = base_project
    if quota_default is not None:
        config.quota_default = quota_default
    config.validate()
    session.replace(World.new(seed=seed, config=config))
    session.commit()
    click.echo(f"initialized world (seed={seed}, {config.describe()})")


# -- directory ----------------------------------------------------------------

@cli.group("dir")
def dir_group() -> None:
    """On-premise directory operations."""


@dir_group.command("add-user")
@click.argument("name")
@click.option("--kind", type=click.Choice([k.value for k in PrincipalKind]), required=True)
@click.option("--hdfs-home", default=None)
@click.option("--org-unit", default="general", show_default=True)
@click.pass_obj
def dir_add_user(session: Session, name: str, kind: str, hdfs_home: str | None,
                 org_unit: str) -> None:
    record = session.world.directory.add_principal(
        name, PrincipalKind(kind), hdfs_home, org_unit
    )
    session.commit()
    click.echo(
        f"added {record.kind.value} principal {record.name} "
        f"(workspace={str(record.has_workspace_identity).lower()})"
    )


@dir_group.command("add-group")
@click.argument("name")
@click.pass_obj
def dir_add_group(session: Session, name: str) -> None:
    group = session.world.directory.add_group(name)
    session.commit()
    click.echo(f"added group {group.name}")


@dir_group.command("join")
@click.argument("group")
@click.argument("principal")
@click.pass_obj
def dir_join(session: Session, group: str, principal: str) -> None:
    result = session.world.directory.join_group(group, principal)
    session.commit()
    click.echo(f"{result.name}: {len(result.members)} member(s)")


@dir_group.command("remove")
@click.argument("name")
@click.pass_obj
def dir_remove(session: Session, name: str) -> None:
    result = session.world.directory.remove_principal(name)
    session.commit()
    groups = ", ".join(result["removed_from_groups"]) or "-"
    click.echo(f"removed {name} (was in: {groups})")


@dir_group.command("show")
@click.argument("name", required=False)
@click.pass_obj
def dir_show(session: Session, name: str | None) -> None:
    directory = session.world.directory
    if name is not None:
        if directory.has_principal(name):
            record = directory.principal(name)
            click.echo(
                f"{record.name}: kind={record.kind.value} "
                f"workspace={str(record.has_workspace_identity).lower()} "
                f"hdfs_home={record.hdfs_home or '-'} org_unit={record.org_unit} "
                f"created_at={record.created_at}"
            )
        else:
            group = directory.group(name)
            click.echo(f"{group.name}: {', '.join(group.members) or '(empty)'}")
        return
    click.echo(f"principals: {len(directory.principals())}")
    for record in directory.principals():
        click.echo(f"  {record.name} ({record.kind.value})")
    click.echo(f"groups: {len(directory.groups())}")
    for group in directory.groups():
        click.echo(f"  {group.name}: {len(group.members)} member(s)")


# -- cloud ---------------------------------------------------------------------

@cli.group("cloud")
def cloud_group() -> None:
    """Cloud hierarchy queries and quota control."""


@cloud_group.command("tree")
@click.pass_obj
def cloud_tree(session: Session) -> None:
    click.echo(session.world.cloud.render_tree())


@cloud_group.command("show")
@click.argument("ident")
@click.pass_obj
def cloud_show(session: Session, ident: str) -> None:
    found = session.world.cloud.lookup(ident)
    if isinstance(found, MirrorAccount):
        click.echo(
            f"service account {found.email}: source={found.source_principal} "
            f"project={found.project} status={found.status.value}"
        )
        node = session.world.cloud.node(found.email)
    else:
        node = found
        click.echo(f"{node.kind.value} {node.id} (parent={node.parent or '-'})")
    for binding in node.bindings:
        click.echo(f"  {binding.role.value} -> {binding.principal}")


@cloud_group.command("set-quota")
@click.argument("project")
@click.argument("limit", type=int)
@click.pass_obj
def cloud_set_quota(session: Session, project: str, limit: int) -> None:
    quota = session.world.cloud.set_quota(project, limit)
    session.commit()
    click.echo(
        f"{quota.project}: {quota.current_count}/{quota.max_service_accounts} accounts"
    )


# -- vault ----------------------------------------------------------------------

@cli.group("vault")
def vault_group() -> None:
    """On-premise secret store (owner-gated reads)."""


@vault_group.command("ls")
@click.pass_obj
def vault_ls(session: Session) -> None:
    entries = session.world.vault.entries()
    if not entries:
        click.echo("(vault empty)")
        return
    for entry in entries:
        states = ",".join(v.state.value for v in entry.versions)
        click.echo(
            f"{entry.account_email} owner={entry.owner_principal} "
            f"versions=[{states}]"
        )


@vault_group.command("read")
@click.option("--as", "caller", required=True, help="Principal performing the read.")
@click.argument("email")
@click.pass_obj
def vault_read(session: Session, caller: str, email: str) -> None:
    try:
        version = session.world.vault.read_key(email, caller)
    finally:
        session.commit()  # the attempt is audited either way
    click.echo(f"{version.key_id} state={version.state.value} secret={version.secret}")


# -- clock / reconcile -------------------------------------------------------------

@cli.group("clock")
def clock_group() -> None:
    """Logical clock control (1 tick = 1 minute)."""


@clock_group.command("advance")
@click.argument("duration")
@click.pass_obj
def clock_advance(session: Session, duration: str) -> None:
    minutes = parse_duration(duration)
    now = session.world.advance(minutes)
    session.commit()
    click.echo(f"clock advanced {minutes}m to t={now}")


@clock_group.command("show")
@click.pass_obj
def clock_show(session: Session) -> None:
    click.echo(f"t={session.world.clock}")


@cli.command()
@click.option("--once", is_flag=True, help="Run a single tick (default).")
@click.option("--ticks", type=int, default=None,
              help="Run N ticks, advancing one tick_interval after each.")
@click.pass_obj
def reconcile(session: Session, once: bool, ticks: int | None) -> None:
    """Run the account-creator loop."""
    world = session.world
    if ticks is not None and once:
        raise ControlPlaneError("use either --once or --ticks, not both")
    if ticks is not None:
        reports = world.reconciler.run_ticks(ticks, world.advance)
    else:
        reports = [world.reconciler.reconcile_tick()]
    session.commit()
    for report in reports:
        click.echo(report.render())


@cli.group("report")
def report_group() -> None:
    """Reconcile reports."""


@report_group.command("last")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
@click.pass_obj
def report_last(session: Session, fmt: str) -> None:
    report = session.world.reconciler.last_report
    if report is None:
        click.echo("no reconcile report yet")
        return
    if fmt == "json":
        click.echo(canonical_json(report.to_dict()), nl=False)
    else:
        click.echo(report.render())


# -- onboarder ----------------------------------------------------------------------

@cli.group("onboard")
def onboard_group() -> None:
    """Bucket provisioning and reader-group sync."""


@onboard_group.command("bucket")
@click.argument("principal")
@click.pass_obj
def onboard_bucket(session: Session, principal: str) -> None:
    mapping = session.world.onboarder.provision_bucket(principal)
    session.commit()
    click.echo(f"gs://{mapping.bucket_id} <- {mapping.hdfs_home} (owner: {principal})")


@onboard_group.command("sync-readers")
@click.pass_obj
def onboard_sync(session: Session) -> None:
    report = session.world.onboarder.sync_reader_groups()
    session.commit()
    click.echo(report.render())


@cli.group("readers")
def readers_group() -> None:
    """Membership of per-bucket reader groups."""


def _reader_pair(session: Session, bucket: str):
    bucket_id = Cloud.strip_scheme(bucket)
    pair = session.world.onboarder.pair_for(bucket_id)
    if pair is None:
        raise NotFound(f"no reader group pair for bucket {bucket!r}")
    return pair


@readers_group.command("join")
@click.argument("bucket")
@click.argument("principal")
@click.pass_obj
def readers_join(session: Session, bucket: str, principal: str) -> None:
    pair = _reader_pair(session, bucket)
    group = session.world.directory.join_group(pair.ldap_group, principal)
    session.commit()
    click.echo(f"{group.name}: {', '.join(group.members) or '(empty)'}")


@readers_group.command("leave")
@click.argument("bucket")
@click.argument("principal")
@click.pass_obj
def readers_leave(session: Session, bucket: str, principal: str) -> None:
    pair = _reader_pair(session, bucket)
    group = session.world.directory.leave_group(pair.ldap_group, principal)
    session.commit()
    click.echo(f"{group.name}: {', '.join(group.members) or '(empty)'}")


# -- authz -----------------------------------------------------------------------

@cli.group("authz")
def authz_group() -> None:
    """Token minting and access checks."""


@authz_group.command("token")
@click.option("--as", "caller", required=True,
              help="Principal name, or workspace:<name> to impersonate via ActAs.")
@click.argument("email")
@click.pass_obj
def authz_token(session: Session, caller: str, email: str) -> None:
    engine = session.world.authz
    try:
        if caller.startswith("workspace:"):
            token = engine.impersonate(caller, email)
        else:
            token = engine.authenticate(caller, email)
    finally:
        session.commit()
    via = f" via_actas={token.via_actas}" if token.via_actas else ""
    click.echo(f"{token.token_id} subject={token.subject}{via}")


@authz_group.command("check")
@click.argument("token")
@click.argument("bucket")
@click.argument("action", type=click.Choice([a.value for a in AccessAction]))
@click.pass_obj
def authz_check(session: Session, token: str, bucket: str, action: str) -> None:
    engine = session.world.authz
    try:
        decision = engine.authorize(token, bucket, AccessAction(action))
    finally:
        session.commit()
    click.echo(decision.render())


@authz_group.command("job")
@click.option("--as", "caller", required=True)
@click.argument("email")
@click.option("--access", "accesses", multiple=True, required=True,
              metavar="BUCKET:ACTION", help="Repeatable bucket:action pair.")
@click.pass_obj
def authz_job(session: Session, caller: str, email: str, accesses: tuple[str, ...]) -> None:
    buckets: list[str] = []
    actions: list[AccessAction] = []
    for item in accesses:
        bucket, sep, action = item.rpartition(":")
        if not sep or action not in (a.value for a in AccessAction):
            raise ControlPlaneError(f"bad --access {item!r}; expected BUCKET:read|write")
        buckets.append(bucket)
        actions.append(AccessAction(action))
    engine = session.world.authz
    try:
        result = engine.submit_job(caller, email, buckets, actions)
    finally:
        session.commit()
    click.echo(result.render())


# -- audit -----------------------------------------------------------------------

@cli.group("audit")
def audit_group() -> None:
    """Append-only audit log."""


@audit_group.command("tail")
@click.option("-n", "count", type=int, default=10, show_default=True)
@click.pass_obj
def audit_tail(session: Session, count: int) -> None:
    events = session.world.audit.tail(count)
    if not events:
        click.echo("(audit log empty)")
        return
    for event in events:
        click.echo(event.render())


@audit_group.command("query")
@click.option("--actor", default=None)
@click.option("--action", default=None, help="Action prefix, e.g. 'authorize'.")
@click.option("--target", default=None)
@click.option("--tick", type=int, default=None)
@click.option("--job", default=None)
@click.option("--since", type=int, default=None, help="Inclusive lower bound on t.")
@click.option("--until", type=int, default=None, help="Inclusive upper bound on t.")
@click.pass_obj
def audit_query(session: Session, actor: str | None, action: str | None,
                target: str | None, tick: int | None, job: str | None,
                since: int | None, until: int | None) -> None:
    events = session.world.audit.query(
        actor=actor, action=action, target=target,
        tick_id=tick, job_id=job, since=since, until=until,
    )
    click.echo(f"{len(events)} event(s)")
    for event in events:
        click.echo(event.render())


# -- verify / state ----------------------------------------------------------------

@cli.command()
@click.option("--converged", is_flag=True,
              help="Also check the set-equalities that hold only at a fixed point.")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
@click.pass_obj
def verify(session: Session, converged: bool, fmt: str) -> None:
    """Check every invariant; exit 2 when violations are found."""
    violations = verify_world(session.world, include_convergence=converged)
    if fmt == "json":
        click.echo(
            canonical_json({"violations": [v.to_dict() for v in violations]}),
            nl=False,
        )
    elif not violations:
        click.echo("ok: no violations")
    else:
        for violation in violations:
            click.echo(violation.render())
    if violations:
        raise VerificationFailed(f"{len(violations)} violation(s)")


@cli.group("state")
def state_group() -> None:
    """Canonical snapshot export/import."""


@state_group.command("export")
@click.option("--reveal-secrets", is_flag=True,
              help="Include raw secrets (default output is redacted).")
@click.option("--output", "-o", type=click.Path(), default=None,
              help="Write to a file instead of stdout.")
@click.pass_obj
def state_export(session: Session, reveal_secrets: bool, output: str | None) -> None:
    text = session.world.export_text(reveal_secrets=reveal_secrets)
    if output is None:
        click.echo(text, nl=False)
    else:
        Path(output).write_text(text, encoding="utf-8")
        click.echo(f"exported to {output}")


@state_group.command("import")
@click.argument("path", type=click.Path(exists=True))
@click.pass_obj
def state_import(session: Session, path: str) -> None:
    session.replace(World.load(path))
    session.commit()
    click.echo(f"imported {path}")


# -- scenarios -----------------------------------------------------------------------

@cli.group("scenario")
def scenario_group() -> None:
    """Replay scripted command sequences."""


@scenario_group.command("run")
@click.argument("script", type=click.Path(exists=True))
@click.option("--strict", is_flag=True, help="Stop at the first failing command.")
@click.option("--transcript", "transcript_out", type=click.Path(), default=None,
              help="Write the transcript as canonical JSON.")
@click.pass_obj
def scenario_run(session: Session, script: str, strict: bool,
                 transcript_out: str | None) -> None:
    text = Path(script).read_text(encoding="utf-8")
    entries = run_script(text, lambda argv: dispatch(session, argv), strict=strict)
    for entry in entries:
        click.echo(entry.render())
    if transcript_out is not None:
        Path(transcript_out).write_text(
            canonical_json({"entries": [e.to_dict() for e in entries]}),
            encoding="utf-8",
        )
    failed = [e for e in entries if e.status == "error"]
    if strict and failed:
        raise ControlPlaneError(
            f"strict scenario aborted at line {failed[0].line_no}"
        )


# -- dispatch / entry point ------------------------------------------------------------

def dispatch(session: Session, argv: list[str]) -> tuple[str, str | None]:
    """Run one command against an existing session.

    Returns (captured stdout, error string or None); used by the scenario
    runner so scripts share the interactive command tree.
    """
    buffer = io.StringIO()
    try:
        with redirect_stdout(buffer):
            cli.main(args=argv, standalone_mode=False, obj=session)
    except VerificationFailed as exc:
        return buffer.getvalue(), f"VerificationFailed: {exc}"
    except ControlPlaneError as exc:
        return buffer.getvalue(), f"{exc.name}: {exc}"
    except click.exceptions.Exit as exc:
        if exc.exit_code == 0:
            return buffer.getvalue(), None
        return buffer.getvalue(), f"Exit: code {exc.exit_code}"
    except click.ClickException as exc:
        return buffer.getvalue(), f"UsageError: {exc.format_message()}"
    return buffer.getvalue(), None


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except VerificationFailed:
        return 2
    except ControlPlaneError as exc:
        click.echo(f"error: {exc.name}: {exc}", err=True)
        return 1
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    return 0
