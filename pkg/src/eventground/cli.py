"""Command line entry point: ``eventground simulate|run|eval|ablate|suite``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from . import plotting, report
from .metrics import MatchConfig, Recording, ablate_delta, score_suite
from .pipeline import MODES, run_pipeline
from .reasoner import dumps_diagnostics
from .simulator import (
    InvalidScript,
    Noise,
    ScenarioScript,
    builtin,
    builtin_names,
    builtin_suite,
    dumps_script,
    generate,
    load_script,
    write_generated,
)
from .streams import FormatError, dumps_events, read_events, read_frames, read_ground_truth, read_registry
from .vlm import FaultClient, FaultConfig, RemoteClient, ScriptedClient

log = logging.getLogger("eventground")

ENDPOINT_ENV = "EVENTGROUND_ENDPOINT"
TOKEN_ENV = "EVENTGROUND_TOKEN"

FORMATS_HELP = """\
file formats (full field reference in docs/formats.md):
  *.frames.jsonl   one frame per line:
                   {"frame", "time", "actions": {actor: verb}, "person_crops": {actor: ref}, "scene_crop"?}
  *.objects.json   {"objects": [{"id", "crop", "first_seen", "label_hint"?}]}
  *.events.jsonl   optional first line {"meta": {"scenario", "constellation"}} (required for ground truth),
                   then one event per line:
                   {"actor", "action", "object", "relation"?: {"rho", "target"}, "robot_interaction", "time"}
  *.oracle.jsonl   same as *.events.jsonl; answers for the scripted backend
"""


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    frames: Path
    objects: Path
    backend: str
    out: Path
    oracle: Optional[Path] = None
    fault: FaultConfig = FaultConfig()
    endpoint: Optional[str] = None
    token: Optional[str] = None
    timeout: float = 30.0
    retries: int = 2
    crop_root: Optional[Path] = None
    min_hold: int = 2
    inflight: int = 2
    mode: str = "trigger"
    scene_input: bool = True
    delta: float = 5.0
    seed: int = 0

    def validate(self) -> None:
        if self.backend in ("scripted", "fault") and self.oracle is None:
            raise ConfigError(f"backend {self.backend} needs --oracle")
        if self.backend == "remote" and not self.endpoint:
            raise ConfigError(f"backend remote needs --endpoint or ${ENDPOINT_ENV}")
        if self.min_hold < 1:
            raise ConfigError("--min-hold must be >= 1")
        if self.inflight < 1:
            raise ConfigError("--inflight must be >= 1")
        if not self.delta > 0:
            raise ConfigError("--delta must be > 0")


def _stem(path: Path, suffixes: Sequence[str]) -> str:
    name = path.name
    for s in suffixes:
        if name.endswith(s):
            return name[: -len(s)]
    return path.stem


def make_client(cfg: RunConfig):
    if cfg.backend == "remote":
        return RemoteClient(cfg.endpoint, cfg.token, timeout=cfg.timeout, retries=cfg.retries,
                            crop_root=cfg.crop_root)
    client = ScriptedClient(read_events(cfg.oracle), delta=cfg.delta)
    if cfg.backend == "fault":
        client = FaultClient(client, replace(cfg.fault, seed=cfg.seed))
    return client


def execute_run(cfg: RunConfig):
    cfg.validate()
    frames = read_frames(cfg.frames)
    registry = read_registry(cfg.objects)
    result = run_pipeline(frames, registry, make_client(cfg), min_hold=cfg.min_hold,
                          inflight=cfg.inflight, mode=cfg.mode, scene_input=cfg.scene_input)
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    cfg.out.write_text(dumps_events(result.predictions), encoding="utf-8")
    prefix = cfg.out.with_name(_stem(cfg.out, (".events.jsonl", ".jsonl")))
    Path(f"{prefix}.diagnostics.jsonl").write_text(dumps_diagnostics(result.diagnostics), encoding="utf-8")
    Path(f"{prefix}.stats.json").write_text(json.dumps(result.stats.to_dict(), indent=2) + "\n",
                                            encoding="utf-8")
    return result


# -- subcommands -------------------------------------------------------------------

def _noise_override(args, base: Noise) -> Noise:
    return Noise(
        base.label_flip_prob if args.label_flip is None else args.label_flip,
        base.timing_jitter_std_s if args.jitter is None else args.jitter,
        base.drop_prob if args.drop is None else args.drop,
    )


def cmd_simulate(args) -> int:
    if args.export_builtins:
        out = Path(args.export_builtins)
        out.mkdir(parents=True, exist_ok=True)
        for s in builtin_suite() + [builtin("sorting_example_s3")]:
            (out / f"{s.name}.json").write_text(dumps_script(s), encoding="utf-8")
        print(f"wrote {len(builtin_suite()) + 1} scripts to {out}")
        return 0
    if bool(args.builtin) == bool(args.script):
        raise ConfigError("give exactly one of --builtin, --script or --export-builtins")
    if args.builtin:
        try:
            script = builtin(args.builtin)
        except KeyError:
            raise ConfigError(f"unknown builtin {args.builtin!r}; choose from: {', '.join(builtin_names())}")
        stem = script.name
    else:
        script = load_script(Path(args.script))
        stem = _stem(Path(args.script), (".script.json", ".json"))
    script = script.with_noise(_noise_override(args, script.noise), args.seed)
    paths = write_generated(generate(script), args.out, stem)
    for kind, p in paths.items():
        print(f"{kind}: {p}")
    return 0


def cmd_run(args) -> int:
    fault = FaultConfig(args.p_object, args.p_action, args.p_relation, args.p_flag, args.p_malformed)
    cfg = RunConfig(
        frames=Path(args.frames), objects=Path(args.objects), backend=args.backend, out=Path(args.out),
        oracle=Path(args.oracle) if args.oracle else None, fault=fault,
        endpoint=args.endpoint or os.environ.get(ENDPOINT_ENV),
        token=args.token or os.environ.get(TOKEN_ENV),
        timeout=args.timeout, retries=args.retries,
        crop_root=Path(args.crop_root) if args.crop_root else None,
        min_hold=args.min_hold, inflight=args.inflight, mode=args.mode,
        scene_input=not args.cropped, delta=args.delta, seed=args.seed,
    )
    result = execute_run(cfg)
    s = result.stats
    print(f"frames {s.frames_seen}  triggers {s.triggers_fired}  calls {s.vlm_calls}  "
          f"tuples {s.tuples_emitted}  dropped {s.diagnostics}")
    return 0


def _recordings(args) -> list[Recording]:
    if len(args.gt) != len(args.pred):
        raise ConfigError("--gt and --pred need the same number of files")
    return [Recording(read_ground_truth(Path(g)), read_events(Path(p)), _stem(Path(g), (".events.jsonl",)))
            for g, p in zip(args.gt, args.pred)]


def _emit_report(rep, prefix: Optional[str], per_role: bool, verbose: bool, figures: bool) -> None:
    text = report.render_report(rep, per_role=per_role, verbose=verbose)
    sys.stdout.write(text)
    if prefix:
        base = Path(prefix)
        paths = report.write_outputs(base, text, report.report_tsv(rep), rep.to_dict())
        if figures:
            paths.append(plotting.plot_cells(rep, base.with_suffix(".png")))
            if per_role:
                paths.append(plotting.plot_roles(rep, base.with_name(base.name + ".roles.png")))
        for p in paths:
            print(f"wrote {p}")


def cmd_eval(args) -> int:
    rep = score_suite(_recordings(args), MatchConfig(args.delta), mode=args.role_mode)
    _emit_report(rep, args.report, args.per_role, args.verbose, not args.no_figures)
    return 0


def _parse_deltas(text: str) -> list[float]:
    try:
        deltas = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--deltas must be comma-separated numbers, got {text!r}") from None
    if not deltas or any(not d > 0 for d in deltas):
        raise ConfigError("--deltas must be positive")
    return deltas


def cmd_ablate(args) -> int:
    table = ablate_delta(_recordings(args), _parse_deltas(args.deltas))
    text = report.render_ablation(table)
    sys.stdout.write(text)
    if args.report:
        base = Path(args.report)
        paths = report.write_outputs(base, text, report.ablation_tsv(table), report.ablation_json(table))
        if not args.no_figures:
            paths.append(plotting.plot_ablation(table, base.with_suffix(".png")))
        for p in paths:
            print(f"wrote {p}")
    return 0


def _suite_one(index: int, script: ScenarioScript, args, out: Path) -> Recording:
    seed = args.seed + index
    script = script.with_noise(_noise_override(args, script.noise), seed)
    paths = write_generated(generate(script), out / "recordings", script.name)
    fault = FaultConfig(args.p_object, args.p_action, args.p_relation, args.p_flag, args.p_malformed)
    cfg = RunConfig(frames=paths["frames"], objects=paths["objects"], backend=args.backend,
                    out=out / "predictions" / f"{script.name}.events.jsonl", oracle=paths["oracle"],
                    fault=fault, min_hold=args.min_hold, inflight=args.inflight,
                    delta=args.delta, seed=seed)
    execute_run(cfg)
    return Recording(read_ground_truth(paths["ground_truth"]), read_events(cfg.out), script.name)


def cmd_suite(args) -> int:
    out = Path(args.out)
    scripts = builtin_suite()
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        recs = list(pool.map(lambda item: _suite_one(item[0], item[1], args, out), enumerate(scripts)))
    rep = score_suite(recs, MatchConfig(args.delta), mode=args.role_mode)
    _emit_report(rep, str(out / "suite"), True, args.verbose, not args.no_figures)
    table = ablate_delta(recs, _parse_deltas(args.deltas))
    text = report.render_ablation(table)
    sys.stdout.write("\n" + text)
    report.write_outputs(out / "ablation", text, report.ablation_tsv(table), report.ablation_json(table))
    if not args.no_figures:
        plotting.plot_ablation(table, out / "ablation.png")
    return 0


# -- parser ------------------------------------------------------------------------

def _add_fault_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("fault backend")
    for name in ("object", "action", "relation", "flag", "malformed"):
        g.add_argument(f"--p-{name}", type=float, default=0.0, metavar="P",
                       help=f"probability of corrupting the {name}" if name != "malformed"
                       else "probability of a malformed answer")


def _add_noise_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("noise overrides")
    g.add_argument("--label-flip", type=float, help="per-frame label flip probability")
    g.add_argument("--jitter", type=float, help="std of event start jitter in seconds")
    g.add_argument("--drop", type=float, help="per-frame drop probability")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eventground", description="Trigger-gated event grounding and grounding-score evaluation.",
        epilog=FORMATS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)
    raw = argparse.RawDescriptionHelpFormatter

    p = sub.add_parser("simulate", help="generate frames, registry, ground truth and oracle script",
                       epilog=FORMATS_HELP, formatter_class=raw)
    p.add_argument("--builtin", help="builtin script name")
    p.add_argument("--script", help="scenario script JSON file")
    p.add_argument("--export-builtins", metavar="DIR", help="write every builtin script as JSON and exit")
    p.add_argument("--seed", type=int, default=None, help="noise seed (default: the script's)")
    p.add_argument("--out", default=".", help="output directory")
    _add_noise_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="stream frames through trigger and reasoner",
                       epilog=FORMATS_HELP, formatter_class=raw)
    p.add_argument("--frames", required=True)
    p.add_argument("--objects", required=True)
    p.add_argument("--backend", choices=("scripted", "fault", "remote"), default="scripted")
    p.add_argument("--oracle", help="oracle event file for scripted/fault backends")
    p.add_argument("--delta", type=float, default=5.0,
                   help="scripted backend answers events within 2*delta seconds (default 5)")
    p.add_argument("--endpoint", help=f"remote endpoint URL (or ${ENDPOINT_ENV})")
    p.add_argument("--token", help=f"remote bearer token (or ${TOKEN_ENV})")
    p.add_argument("--timeout", type=float, default=30.0, help="remote per-attempt timeout in seconds")
    p.add_argument("--retries", type=int, default=2, help="remote retries after the first attempt")
    p.add_argument("--crop-root", help="directory crop references are resolved against (remote)")
    p.add_argument("--min-hold", type=int, default=2, help="frames a new label must persist (default 2)")
    p.add_argument("--inflight", type=int, default=2, help="concurrent reasoner calls (default 2)")
    p.add_argument("--mode", choices=MODES, default="trigger",
                   help="trigger-gated (default) or frame-by-frame baseline")
    p.add_argument("--cropped", action="store_true", help="send person crops instead of scene frames")
    p.add_argument("--out", required=True, help="predictions file (*.events.jsonl)")
    p.add_argument("--seed", type=int, default=0, help="fault backend seed")
    _add_fault_flags(p)
    p.set_defaults(func=cmd_run)

    for name, helptext in (("eval", "grounding score report"), ("ablate", "grounding score per tolerance")):
        p = sub.add_parser(name, help=helptext, epilog=FORMATS_HELP, formatter_class=raw)
        p.add_argument("--gt", nargs="+", required=True, help="ground-truth event files")
        p.add_argument("--pred", nargs="+", required=True, help="prediction files, paired with --gt")
        p.add_argument("--report", metavar="PREFIX", help="write PREFIX.txt/.tsv/.json and figures")
        p.add_argument("--no-figures", action="store_true")
        if name == "eval":
            p.add_argument("--delta", type=float, default=5.0, help="temporal tolerance in seconds")
            p.add_argument("--per-role", action="store_true", help="add the x/o/r/i role table")
            p.add_argument("--role-mode", choices=("rematch", "within"), default="rematch")
            p.add_argument("--verbose", action="store_true", help="also show per-recording rows")
            p.set_defaults(func=cmd_eval)
        else:
            p.add_argument("--deltas", default="1,3,5", help="comma-separated tolerances")
            p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("suite", help="simulate, run and score all sixteen builtin recordings")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=("scripted", "fault"), default="scripted")
    p.add_argument("--delta", type=float, default=5.0)
    p.add_argument("--deltas", default="1,3,5")
    p.add_argument("--role-mode", choices=("rematch", "within"), default="rematch")
    p.add_argument("--min-hold", type=int, default=2)
    p.add_argument("--inflight", type=int, default=2)
    p.add_argument("--jobs", type=int, default=4, help="recordings processed in parallel")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    _add_noise_flags(p)
    _add_fault_flags(p)
    p.set_defaults(func=cmd_suite)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FormatError as exc:
        # malformed input data is a runtime failure, not a usage error
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, InvalidScript, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
