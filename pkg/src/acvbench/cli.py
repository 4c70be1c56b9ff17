"""Command-line entry point.

Exit codes:
  0  success (benchmark runs completed, whatever their pass rate)
  1  replay re-grade differs from the stored records
  2  configuration error (bad arguments, unknown task, missing rules, empty goal)
  3  policy backend unavailable
  4  harness error (environment setup failed, corrupt run log)
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from acvbench.agent.policies import LlmConfig
from acvbench.agent.runtime import Agent, Transcript
from acvbench.bench.catalog import SERVICES, Level, RequestLevel, load_catalog, select
from acvbench.bench.experiment import (
    Experiment,
    LlmBackend,
    ScriptedBackend,
    build_cluster,
    records_of,
    warm_up,
)
from acvbench.bench.fixtures import rules_dir
from acvbench.bench.report import emit_report
from acvbench.bench.runlog import replay, write_runlog
from acvbench.bus import MessageBus
from acvbench.cluster.model import TrafficProfile
from acvbench.cluster.scenario import Scenario, sock_shop
from acvbench.errors import AcvError, BackendUnavailable, CatalogCorrupt, HarnessError, InvalidSpec, RulesParseError
from acvbench.manager import GroupManager
from acvbench.metrics.engine import query
from acvbench.ops.gateway import Gateway

EXIT_OK = 0
EXIT_REPLAY_DIFF = 1
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_HARNESS = 4

CONFIG_KEYS = ("scenario", "task", "level", "request_level", "backend", "rules", "seed", "out", "repeats")


class ConfigError(Exception):
    pass


# -- shared helpers ---------------------------------------------------------------------

def _load_scenario(path: Optional[str]) -> Scenario:
    if path is None:
        return sock_shop()
    try:
        return Scenario.load(path)
    except (OSError, ValueError, KeyError, InvalidSpec) as exc:
        raise ConfigError(f"cannot load scenario {path}: {exc}") from None


def _rules_paths(rules: Optional[list]) -> list[Path]:
    if not rules:
        return [rules_dir() / "reference.yaml"]
    out = []
    for name in rules:
        path = Path(name)
        if not path.exists() and (rules_dir() / name).exists():
            path = rules_dir() / name
        if not path.exists():
            raise ConfigError(f"rules file not found: {name}")
        out.append(path)
    return out


def make_backend(kind: str, rules: Optional[list], seed: Optional[int]):
    if kind == "scripted":
        try:
            return ScriptedBackend(_rules_paths(rules))
        except RulesParseError as exc:
            raise ConfigError(str(exc)) from None
    return LlmBackend(LlmConfig.from_env(seed=seed))


def _write_transcripts(out: Path, stem: str, outcome) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(outcome, Transcript):
        outcome.write(out / f"{stem}.{outcome.agent}.jsonl")
        return
    if outcome.manager_transcript is not None:
        outcome.manager_transcript.write(out / f"{stem}.manager.jsonl")
    for rnd, transcript in outcome.agent_transcripts:
        transcript.write(out / f"{stem}.r{rnd}.{transcript.agent}.jsonl")


def print_transcript(t: Transcript, out=None) -> None:
    out = out or sys.stdout
    for e in t.entries:
        if e.role == "system":
            continue
        print(f"--- {e.role} @{e.tick}", file=out)
        print(e.content, file=out)
    print(f"=== steps={t.steps} exec_errors={t.steps_with_exec_error} terminated={int(t.terminated)}", file=out)


def print_outcome(outcome, out=None) -> None:
    out = out or sys.stdout
    if isinstance(outcome, Transcript):
        print_transcript(outcome, out)
        return
    for rec in outcome.round_records:
        print(f"=== round {rec.index} manager_steps={rec.manager_steps}", file=out)
        for comp, text in rec.assignments:
            print(f"assign {comp}: {text}", file=out)
        for env in rec.responses:
            print(f"{env.kind} from {env.sender}: {env.body}", file=out)
        for comp in rec.missing:
            print(f"missing response from {comp}", file=out)
    steps = ",".join(str(s) for s in outcome.steps_tuple(list(SERVICES)))
    print(f"=== rounds={outcome.rounds} steps=[{steps}] terminated={int(outcome.terminated)}", file=out)


# -- subcommands -----------------------------------------------------------------------

def _apply_config(args: argparse.Namespace) -> None:
    defaults = {"backend": "scripted", "out": "acv-out", "repeats": 3}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(data) - set(CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if isinstance(data.get("rules"), str):
            data["rules"] = [data["rules"]]
        defaults.update(data)
    for key, value in defaults.items():
        if getattr(args, key) is None:
            setattr(args, key, value)
    if args.backend not in ("scripted", "llm"):
        raise ConfigError(f"unknown backend {args.backend!r}")
    if not isinstance(args.repeats, int) or args.repeats < 1:
        raise ConfigError("--repeats must be a positive integer")


def _selected(args) -> list:
    try:
        tasks = select(
            load_catalog(),
            task=args.task,
            level=Level(args.level) if args.level else None,
            request_level=RequestLevel(args.request_level) if args.request_level else None,
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad task selection: {exc}") from None
    if not tasks:
        raise ConfigError("the selection matches no task")
    return tasks


def cmd_bench(args) -> int:
    _apply_config(args)
    tasks = _selected(args)
    scenario = _load_scenario(args.scenario)
    backend = make_backend(args.backend, args.rules, args.seed)
    out = Path(args.out)
    runs = out / "runs"
    transcripts = out / "transcripts"
    runs.mkdir(parents=True, exist_ok=True)
    results = []
    for task in tasks:
        for inst in task.instances():
            for trial in range(1, args.repeats + 1):
                result = Experiment(inst, backend, trial, scenario).run()
                results.append(result)
                stem = f"{inst.id}.t{trial}"
                write_runlog(runs / f"{stem}.jsonl", result)
                for i, outcome in enumerate(result.outcomes, start=1):
                    _write_transcripts(transcripts, f"{stem}.e{i}", outcome)
                for rec in result.records:
                    print(f"{inst.id} trial={trial} eval={rec.eval_index} reason={rec.reason or 'ok'}")
    with open(out / "envelopes.jsonl", "w") as fh:
        for result in results:
            for env in result.envelopes:
                fh.write(env.to_json() + "\n")
    csv_path, md_path = emit_report(records_of(results), load_catalog(), out)
    print(f"wrote {csv_path}")
    print(f"wrote {md_path}")
    return EXIT_OK


def cmd_task(args) -> int:
    goal = (args.goal or "").strip()
    if not goal:
        raise ConfigError("the goal text must not be empty")
    target = args.target
    if target != "manager" and target not in SERVICES:
        raise ConfigError(f"unknown agent {target!r}; choose one of {', '.join(SERVICES + ('manager',))}")
    scenario = _load_scenario(args.scenario)
    backend = make_backend(args.backend, args.rules, args.seed)
    cluster = scenario.build()
    for item in args.traffic or []:
        name, _, level = item.partition("=")
        try:
            cluster.set_traffic(name, TrafficProfile.for_service(name, level), actor="setup")
        except (AcvError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad --traffic {item!r}: {exc}") from None
    warm_up(cluster)
    bus = MessageBus(clock=lambda: cluster.tick_count, advance=cluster.advance)
    bus.create_queue(bus.manager_id)
    agents = [Agent(n, cluster, bus, backend.agent_policy(cluster, n)) for n in SERVICES]
    if target == "manager":
        outcome = GroupManager(cluster, bus, backend.manager_policy(list(SERVICES)), agents).run_managed_task(goal)
    else:
        outcome = next(a for a in agents if a.name == target).run_task(goal)
    print_outcome(outcome)
    return EXIT_OK


def cmd_replay(args) -> int:
    status = EXIT_OK
    for path in args.paths:
        result = replay(path)
        for rec in result.regraded:
            print(f"{rec.task_id} trial={rec.trial} eval={rec.eval_index} reason={rec.reason or 'ok'}")
        if result.identical:
            print(f"{path}: identical")
        else:
            status = EXIT_REPLAY_DIFF
            print(f"{path}: differs")
        for line in result.diff():
            print(f"  {line}")
    return status


def _inspect_cluster(args):
    scenario = _load_scenario(args.scenario)
    if args.task:
        tasks = [t for t in _selected(args) if not t.is_template]
        if len(tasks) != 1:
            raise ConfigError("inspect needs exactly one concrete task id")
        cluster = build_cluster(tasks[0], scenario)
    else:
        cluster = scenario.build()
    cluster.advance(args.ticks)
    return cluster


def cmd_inspect(args) -> int:
    args.level = args.request_level = None
    cluster = _inspect_cluster(args)
    if args.what == "pods":
        print(Gateway(cluster, "inspect", read_only=True).run_line(f"kubectl get pods -n {cluster.namespace}").text())
    elif args.what == "metrics":
        if not args.query:
            raise ConfigError("inspect metrics needs --query")
        try:
            print(query(cluster.store, args.query, cluster.tick_count, duration=args.duration, step=args.step))
        except AcvError as exc:
            raise ConfigError(f"bad query: {exc}") from None
    else:
        bus = MessageBus(clock=lambda: cluster.tick_count)
        for name in (bus.manager_id,) + SERVICES:
            bus.create_queue(name)
        print(f"{'QUEUE':<12} DEPTH")
        for name in bus.queues():
            print(f"{name:<12} {bus.depth(name)}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------

def _add_backend(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=("scripted", "llm"), default=None)
    p.add_argument("--rules", action="append", metavar="PATH",
                   help="scripted rules file; repeat to layer files, earlier ones first")
    p.add_argument("--seed", type=int, default=None, help="passed to the llm backend; scripted runs are fixed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acvbench", description="Microservice management agent testbed.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="run benchmark tasks and write reports")
    p.add_argument("--config", help="JSON file with default values for the flags below")
    p.add_argument("--scenario")
    p.add_argument("--task", help="comma-separated task or template ids")
    p.add_argument("--level", choices=[lv.value for lv in Level])
    p.add_argument("--request-level", dest="request_level", choices=[r.value for r in RequestLevel])
    _add_backend(p)
    p.add_argument("--out")
    p.add_argument("--repeats", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("task", help="send one goal to an agent or the manager")
    p.add_argument("target", help="catalogue, front-end or manager")
    p.add_argument("goal")
    p.add_argument("--scenario")
    p.add_argument("--traffic", action="append", metavar="SERVICE=LEVEL")
    _add_backend(p)
    p.set_defaults(func=cmd_task, backend="scripted")

    p = sub.add_parser("replay", help="re-grade stored run logs")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("inspect", help="render cluster state")
    p.add_argument("what", choices=("pods", "metrics", "queues"))
    p.add_argument("--scenario")
    p.add_argument("--task", help="set up the initial state of this task")
    p.add_argument("--ticks", type=int, default=120)
    p.add_argument("--query")
    p.add_argument("--duration", default="2m")
    p.add_argument("--step", default="1m")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CatalogCorrupt) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendUnavailable as exc:
        print(f"backend unavailable: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HARNESS


if __name__ == "__main__":
    sys.exit(main())
