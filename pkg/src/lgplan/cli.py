"""Command-line surface: plan, replay, check, bench, gen, viz.

Exit codes: 0 success, 1 usage or validation error, 2 replay failure,
3 goal-check failure, 4 planning failure.  Every failure writes exactly
one JSON object to stderr.  Flag precedence is CLI over config file over
built-in default.
"""

import argparse
import json
import os
import sys

from lgplan.bench import (
    BenchError,
    evaluate,
    gen_suite,
    load_suite,
    save_report,
    save_suite,
    write_csv,
)
from lgplan.config import ConfigError, RunConfig, apply_overrides, load_config
from lgplan.execution import check_goal, replay, save_replay_report
from lgplan.instruction import (
    DslSyntaxError,
    GoalValidationError,
    InstructionError,
    LlmConfig,
    LlmError,
    ReplayTransport,
    llm_to_goal,
    load_goal,
    parse_dsl,
    validate_goal,
)
from lgplan.patterns import PatternDatabase, PatternError, pattern_db_from_entries
from lgplan.planner import PlanningFailed, build_subgoal_states, load_plan, mcts_plan, save_plan
from lgplan.scene import SceneError, load_scene
from lgplan.viz import render_plan_frames, render_svg, save_svg

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REPLAY = 2
EXIT_GOAL = 3
EXIT_PLANNING = 4


def _fail(code: int, kind: str, message, **extra):
    payload = {"error": kind, "message": str(message)}
    payload.update(extra)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    raise SystemExit(code)


class _Parser(argparse.ArgumentParser):
    """argparse with the JSON-on-stderr error contract."""

    def error(self, message):
        _fail(EXIT_USAGE, "usage", message, command=self.prog)


# -- shared plumbing ---------------------------------------------------------------


def _run_config(args, **overrides) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides.setdefault("seed", getattr(args, "seed", None))
    overrides.setdefault("out", getattr(args, "out", None))
    return apply_overrides(config, **overrides)


def _pattern_db(config: RunConfig) -> PatternDatabase:
    if not config.patterns:
        return PatternDatabase()
    entries = []
    for name in sorted(config.patterns):
        body = config.patterns[name]
        if not isinstance(body, dict):
            raise ConfigError(f"pattern override {name!r} must be an object")
        entries.append({"name": name, **body})
    return pattern_db_from_entries(entries)


def _out_dir(config: RunConfig) -> str:
    out = config.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _resolve_goal(value: str, db, scene):
    """Goal from inline DSL text, a DSL file, or a GoalSpec JSON file."""
    if os.path.exists(value):
        if value.endswith(".json"):
            goal = load_goal(value)
            validate_goal(goal, scene, db)
            return goal
        with open(value, "r", encoding="utf-8") as fh:
            value = fh.read()
    return parse_dsl(value, db, scene)


def _goal_from_args(args, db, scene):
    if args.llm is not None:
        llm = LlmConfig(
            endpoint=args.llm_endpoint or "replay://fixture",
            model=args.llm_model,
        )
        transport = ReplayTransport(args.llm_replay) if args.llm_replay else None
        if transport is None and not args.llm_endpoint:
            _fail(EXIT_USAGE, "usage",
                  "--llm needs --llm-endpoint (or --llm-replay for fixtures)")
        return llm_to_goal(scene, args.llm, llm, db, transport=transport)
    return _resolve_goal(args.goal, db, scene)


# -- subcommands ---------------------------------------------------------------


def cmd_plan(args) -> int:
    config = _run_config(
        args,
        budget=args.budget,
        exploration=args.exploration,
        action_width=args.width,
        pose_tries=args.pose_tries,
        relocation_tries=args.reloc_tries,
        check_tolerance=args.tol,
    )
    db = _pattern_db(config)
    scene = load_scene(args.scene)
    goal = _goal_from_args(args, db, scene)
    out = _out_dir(config)
    try:
        plan = mcts_plan(scene, goal, config.planner(), seed=config.seed, db=db)
    except PlanningFailed as exc:
        _fail(EXIT_PLANNING, "planning", exc,
              best_reward=exc.best_reward, steps_used=exc.steps_used)
    plan_path = os.path.join(out, "plan.json")
    save_plan(plan, plan_path)
    report = replay(scene, plan)
    replay_path = os.path.join(out, "replay.json")
    save_replay_report(report, replay_path)
    if args.frames:
        for i, frame in enumerate(render_plan_frames(scene, plan)):
            save_svg(frame, os.path.join(out, f"frame_{i:03d}.svg"))
    if not report.ok:
        _fail(EXIT_REPLAY, "replay", report.reason or "replay failed",
              failed_step=report.failed_step)
    check = check_goal(report.final_scene, goal, db, config.check_tolerance)
    if not check.satisfied:
        _fail(EXIT_GOAL, "goal", "final arrangement fails the goal check",
              report=check.to_json())
    print(json.dumps({
        "ok": True,
        "actions": len(plan.actions),
        "steps_used": plan.steps_used,
        "plan": plan_path,
        "replay": replay_path,
    }, sort_keys=True))
    return EXIT_OK


def cmd_replay(args) -> int:
    config = _run_config(args)
    scene = load_scene(args.scene)
    plan = load_plan(args.plan)
    report = replay(scene, plan)
    path = os.path.join(_out_dir(config), "replay.json")
    save_replay_report(report, path)
    if not report.ok:
        _fail(EXIT_REPLAY, "replay", report.reason or "replay failed",
              failed_step=report.failed_step)
    print(json.dumps({"ok": True, "steps": report.steps, "report": path},
                     sort_keys=True))
    return EXIT_OK


def cmd_check(args) -> int:
    config = _run_config(args, check_tolerance=args.tol)
    db = _pattern_db(config)
    scene = load_scene(args.scene)
    goal = _resolve_goal(args.goal, db, scene)
    report = check_goal(scene, goal, db, config.check_tolerance)
    path = os.path.join(_out_dir(config), "check.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not report.satisfied:
        _fail(EXIT_GOAL, "goal", "scene fails the goal check",
              report=report.to_json())
    print(json.dumps({"satisfied": True, "report": path}, sort_keys=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _run_config(args, budget=args.budget, jobs=args.jobs)
    db = _pattern_db(config)
    if args.suite:
        tasks, _, _ = load_suite(args.suite)
    else:
        if args.tasks is None:
            _fail(EXIT_USAGE, "usage", "bench needs --suite or --tasks")
        if args.tasks < 1:
            raise ConfigError("tasks must be >= 1")
        suite_seed = config.seed if config.seed is not None else 0
        tasks = gen_suite(config.bench, args.tasks, suite_seed, db)
    report = evaluate(tasks, config.planner(), pmcts=args.pmcts,
                      jobs=config.jobs, db=db)
    out = _out_dir(config)
    save_report(report, os.path.join(out, "report.json"))
    write_csv(report, os.path.join(out, "report.csv"))
    print(f"SR_p={report.sr_p:.3f} SR_ep={report.sr_ep:.3f} "
          f"tasks={len(report.outcomes)}")
    return EXIT_OK


def cmd_gen(args) -> int:
    config = _run_config(args)
    db = _pattern_db(config)
    if args.tasks < 1:
        raise ConfigError("tasks must be >= 1")
    suite_seed = config.seed if config.seed is not None else 0
    tasks = gen_suite(config.bench, args.tasks, suite_seed, db)
    manifest = save_suite(tasks, config.bench, _out_dir(config), suite_seed)
    print(json.dumps({"manifest": manifest, "tasks": len(tasks)},
                     sort_keys=True))
    return EXIT_OK


def cmd_viz(args) -> int:
    config = _run_config(args)
    db = _pattern_db(config)
    scene = load_scene(args.scene)
    plan = load_plan(args.plan) if args.plan else None
    ctx = None
    if args.goal is not None:
        goal = _resolve_goal(args.goal, db, scene)
        states = build_subgoal_states(goal, db)
        if not 0 <= args.subgoal < len(states):
            _fail(EXIT_USAGE, "usage",
                  f"--subgoal out of range (goal has {len(states)} sub-goals)")
        state = states[args.subgoal]
        if args.prior_k > len(state.objects):
            _fail(EXIT_USAGE, "usage",
                  f"--prior-k exceeds the sub-goal's {len(state.objects)} objects")
        for oid in state.objects[:args.prior_k]:
            state = state.with_placed(oid, scene.pose(oid))
        ctx = state.context(scene)
    path = os.path.join(_out_dir(config), "viz.svg")
    save_svg(render_svg(scene, plan=plan, prior_ctx=ctx), path)
    print(json.dumps({"svg": path}, sort_keys=True))
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="RNG seed (default: scene seed / 0 for suites)")
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("--out", default=None, help="output directory")

    parser = _Parser(prog="lgplan",
                     description="semantic tabletop rearrangement planner")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("plan", parents=[common],
                       help="plan a rearrangement and replay it")
    p.add_argument("scene", help="scene JSON file")
    p.add_argument("--goal", help="goal DSL text, DSL file, or goal JSON file")
    p.add_argument("--llm", metavar="REQUEST",
                   help="translate a natural-language request via an LLM")
    p.add_argument("--llm-endpoint", default=None)
    p.add_argument("--llm-model", default="local")
    p.add_argument("--llm-replay", default=None,
                   help="canned LLM replies (JSON fixture) instead of HTTP")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--exploration", type=float, default=None)
    p.add_argument("--width", type=int, default=None,
                   help="actions expanded per node")
    p.add_argument("--pose-tries", type=int, default=None)
    p.add_argument("--reloc-tries", type=int, default=None)
    p.add_argument("--tol", type=float, default=None,
                   help="goal-check tolerance in sigma multiples")
    p.add_argument("--frames", action="store_true",
                   help="write per-step SVG frames")
    p.set_defaults(func=cmd_plan, need_goal=True)

    p = sub.add_parser("replay", parents=[common],
                       help="replay a saved plan on a scene")
    p.add_argument("scene")
    p.add_argument("plan")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("check", parents=[common],
                       help="check whether a scene satisfies a goal")
    p.add_argument("scene")
    p.add_argument("--goal", required=True)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", parents=[common],
                       help="run the benchmark and report SR_p / SR_ep")
    p.add_argument("--suite", default=None, help="suite manifest JSON")
    p.add_argument("--tasks", type=int, default=None,
                   help="generate this many tasks instead of loading a suite")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--pmcts", action="store_true",
                   help="fixed-goal-pose baseline instead of the sampler")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", parents=[common],
                       help="generate a benchmark suite")
    p.add_argument("--tasks", type=int, required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("viz", parents=[common],
                       help="render a scene (plus plan arrows / prior heatmap)")
    p.add_argument("scene")
    p.add_argument("--plan", default=None)
    p.add_argument("--goal", default=None,
                   help="goal whose prior should be drawn")
    p.add_argument("--subgoal", type=int, default=0,
                   help="index of the sub-goal to draw")
    p.add_argument("--prior-k", type=int, default=0,
                   help="treat the first K objects as already placed")
    p.set_defaults(func=cmd_viz)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "need_goal", False) and (args.goal is None) == (args.llm is None):
        _fail(EXIT_USAGE, "usage", "plan needs exactly one of --goal or --llm")
    try:
        return args.func(args)
    except DslSyntaxError as exc:
        _fail(EXIT_USAGE, "dsl", exc, line=exc.line, column=exc.col)
    except GoalValidationError as exc:
        _fail(EXIT_USAGE, "goal-spec", exc)
    except LlmError as exc:
        _fail(EXIT_USAGE, "llm", exc)
    except InstructionError as exc:
        _fail(EXIT_USAGE, "instruction", exc)
    except ConfigError as exc:
        _fail(EXIT_USAGE, "config", exc)
    except SceneError as exc:
        _fail(EXIT_USAGE, "scene", exc)
    except PatternError as exc:
        _fail(EXIT_USAGE, "pattern", exc)
    except BenchError as exc:
        _fail(EXIT_USAGE, "bench", exc)
    except json.JSONDecodeError as exc:
        _fail(EXIT_USAGE, "format", exc)
    except OSError as exc:
        _fail(EXIT_USAGE, "io", exc)


if __name__ == "__main__":
    raise SystemExit(main())
