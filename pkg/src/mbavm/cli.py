"""Command-line entry points: database synthesis, obfuscation, fuzz
verification, attack orchestration, benchmark suites, and the HTTP service."""

from __future__ import annotations

import random
import sys

import click

from .attacks import (
    AttackTarget,
    Dynamic,
    Static,
    SynthBudget,
    backward_slice,
    cegar_key_recovery,
    symex_simplify,
    synthesize_semantics,
    taint_forward,
    write_reports,
)
from .bench import run_suite, verify_obfuscation
from .bytecode import load_lvm, load_sidecar, save_lvm, save_sidecar
from .eqdb import BudgetExceeded, load_db, store_db, synthesize_classes
from .obfuscate import HandlerSet, ObfuscationConfig, obfuscate
from .rewrite import RewriteConfig
from .tac import parse_tac
from .vm import run_traced

KNOWN_ATTACKS = ("taint", "slice", "symex", "synth", "cegar")


@click.group()
def main() -> None:
    """Obfuscation workbench: VM obfuscator and automated attack suite."""


@main.command("synth-db")
@click.option("--depth", type=int, default=7, show_default=True)
@click.option("--vectors", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def synth_db(depth: int, vectors: int, seed: int, workers: int, out_path: str):
    """Enumerate the expression grammar and store verified equivalence classes."""
    try:
        db = synthesize_classes(depth, vectors, seed, workers)
    except BudgetExceeded as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    store_db(db, out_path)
    click.echo(
        f"depth {depth}: {len(db.classes)} classes, {db.member_count} members -> {out_path}"
    )


def _parse_bounds(text: str | None) -> tuple[int, int] | None:
    if text is None:
        return None
    try:
        a, b = (int(p) for p in text.split(","))
    except ValueError:
        raise click.BadParameter("expected two comma-separated integers, e.g. 20,30")
    return a, b


@main.command()
@click.argument("program", type=click.Path(exists=True))
@click.option("--db", "db_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--no-mba", is_flag=True, help="Skip MBA rewriting of handlers.")
@click.option("--no-superops", is_flag=True, help="Keep one instruction per handler step.")
@click.option("--bounds", default=None, help="MBA rewrite bounds, e.g. 20,30.")
@click.option("--handler-count", type=int, default=64, show_default=True)
@click.option("--prime-bits", type=int, default=16, show_default=True)
def obfuscate_cmd(
    program: str,
    db_path: str | None,
    seed: int,
    out_path: str,
    no_mba: bool,
    no_superops: bool,
    bounds: str | None,
    handler_count: int,
    prime_bits: int,
):
    """Compile a .tac program into keyed-VM bytecode plus handler sidecar."""
    with open(program, encoding="utf-8") as fh:
        p = parse_tac(fh.read())
    db = load_db(db_path) if db_path else None
    if db is None and not no_mba:
        raise click.UsageError("--db is required unless --no-mba is given")
    rw = RewriteConfig(seed=seed)
    b = _parse_bounds(bounds)
    if b is not None:
        rw = RewriteConfig(bound_min=b[0], bound_max=b[1], seed=seed)
    cfg = ObfuscationConfig(
        handler_count=handler_count,
        rewrite=rw,
        prime_bits=prime_bits,
        use_mba=not no_mba,
        use_superops=not no_superops,
        seed=seed,
    )
    bp, hs, _rp = obfuscate(p, db, cfg)
    save_lvm(bp, out_path)
    save_sidecar(hs, out_path + ".json")
    click.echo(
        f"{program} -> {out_path} ({len(bp.steps)} steps, "
        f"{len(hs.handlers)} handlers, sidecar {out_path}.json)"
    )


@main.command()
@click.argument("program", type=click.Path(exists=True))
@click.argument("lvm", type=click.Path(exists=True))
@click.option("--handlers", "sidecar", type=click.Path(exists=True))
@click.option("--inputs", type=int, default=10_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def verify(program: str, lvm: str, sidecar: str | None, inputs: int, seed: int):
    """Fuzz-compare a .tac program against its obfuscated bytecode."""
    with open(program, encoding="utf-8") as fh:
        p = parse_tac(fh.read())
    bp = load_lvm(lvm)
    hs = load_sidecar(sidecar or lvm + ".json")
    tested, mismatch = verify_obfuscation(p, bp, hs, inputs, seed)
    if mismatch is not None:
        click.echo(f"FAIL after {tested} inputs at {tuple(hex(v) for v in mismatch)}")
        sys.exit(1)
    click.echo(f"PASS: {tested} inputs")


def _resolve_targets(
    bp, hs: HandlerSet, mode: str, seed: int
) -> list[AttackTarget]:
    """Stage 1: enumerate handler instances from the bytecode and resolve
    their parameters (trace-driven in dynamic mode)."""
    rng = random.Random(seed)
    args = [rng.getrandbits(64) for _ in bp.param_regs]
    _, trace = run_traced(bp, hs, args)
    targets = []
    for step, tstep in zip(bp.steps, trace):
        if step.handler_id == hs.exit_handler_id:
            continue
        h = hs.by_id(step.handler_id)
        k = bp.key_pool[step.key_idx]
        si, sem = next(
            (i, s) for i, (enc, s) in enumerate(h.slots) if enc.select(k) == 1
        )
        m = Dynamic(k=k, x=tstep.x, y=tstep.y, c=tstep.c) if mode == "dynamic" else Static()
        targets.append(AttackTarget(h, m, sem, slot_index=si))
    return targets


@main.command()
@click.argument("lvm", type=click.Path(exists=True))
@click.option("--handlers", "sidecar", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["static", "dynamic"]), default="dynamic", show_default=True)
@click.option("--attacks", default="taint,slice,symex", show_default=True)
@click.option("--db", "db_path", type=click.Path(exists=True), help="Rule database for symex.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--synth-budget", type=int, default=50_000, show_default=True)
@click.option("--cegar-budget", type=int, default=1_000_000, show_default=True)
@click.option("--report", "report_path", type=click.Path())
def attack(
    lvm: str,
    sidecar: str,
    mode: str,
    attacks: str,
    db_path: str | None,
    seed: int,
    synth_budget: int,
    cegar_budget: int,
    report_path: str | None,
):
    """Run stage-2 attack plugins against every handler instance."""
    names = [a.strip() for a in attacks.split(",") if a.strip()]
    for name in names:
        if name not in KNOWN_ATTACKS:
            click.echo(f"error: unknown attack {name!r} (known: {', '.join(KNOWN_ATTACKS)})", err=True)
            sys.exit(2)
    bp = load_lvm(lvm)
    hs = load_sidecar(sidecar)
    db = load_db(db_path) if db_path else None
    targets = _resolve_targets(bp, hs, mode, seed)
    reports = []
    for i, t in enumerate(targets):
        for name in names:
            if name == "taint":
                reports.append(taint_forward(t, seed=seed + i))
            elif name == "slice":
                reports.append(backward_slice(t, seed=seed + i))
            elif name == "symex":
                reports.append(symex_simplify(t, db, seed=seed + i))
            elif name == "synth":
                if isinstance(t.mode, Static):
                    continue  # needs an observed key
                reports.append(
                    synthesize_semantics(
                        t, SynthBudget(iterations=synth_budget), seed=seed + i
                    )
                )
            else:  # cegar
                st = (
                    t
                    if isinstance(t.mode, Static)
                    else AttackTarget(t.handler, Static(), t.ground_truth, t.slot_index)
                )
                codebook = [s.expr for _, s in t.handler.slots]
                reports.append(
                    cegar_key_recovery(st, codebook, budget=cegar_budget, seed=seed + i)
                )
    by_attack: dict[str, list] = {}
    for r in reports:
        by_attack.setdefault(r.attack, []).append(r)
    for name, rs in sorted(by_attack.items()):
        succ = sum(r.success for r in rs)
        extra = ""
        fracs = [r.unmarked_fraction for r in rs if r.unmarked_fraction is not None]
        if fracs:
            extra = f", mean unmarked {sum(fracs) / len(fracs):.3f}"
        click.echo(f"{name}: {succ}/{len(rs)} succeeded{extra}")
    if report_path:
        write_reports(report_path, reports)
        click.echo(f"wrote {len(reports)} reports -> {report_path}")


@main.command()
@click.argument("suite", type=click.Path(exists=True))
@click.option("--out", "out_csv", type=click.Path(), default=None)
def bench(suite: str, out_csv: str | None):
    """Run the experiment suite described by a flat key-value TOML file."""
    run = run_suite(suite, out_csv)
    for r in run.rows:
        status = "PASS" if r["passed"] else "FAIL"
        click.echo(f"[{status}] {r['experiment']}: {r['metric']} = {r['value']} (target {r['target']})")
    if out_csv:
        click.echo(f"wrote {len(run.rows)} rows -> {out_csv}")
    if not run.passed:
        sys.exit(1)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host: str, port: int):
    """Serve the workbench as an HTTP API."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":  # pragma: no cover
    main()
