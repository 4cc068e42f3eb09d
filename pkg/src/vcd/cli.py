"""Command-line entry points.

    vcd latency  --profile paper-2023
    vcd windows  --manifest manifest.json --window-s 2 --sample-hz 2
    vcd replay   --fixtures <dir> --mock responses.json --out runs/
    vcd eval     confusion|icc|timeline ...
    vcd serve    --runs runs/ --listen 127.0.0.1:8000
    vcd synth    --out fixtures/
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, metrics, replay, synth
from .ingest import load_manifest
from .risk import (
    GuardConfig,
    HttpCompletionService,
    MockCompletionService,
    load_service_config,
    report_from_wire,
)


def _cmd_latency(args: argparse.Namespace) -> int:
    profile = replay.load_profile(args.profile)
    total = replay.total_latency(profile)
    print(f"{total:.2f} s")
    if args.ttc_floor is not None:
        verdict, margin = replay.check_reaction_budget(total, args.ttc_floor, args.horizon)
        print(f"{verdict} (margin {margin:+.2f} s vs {args.ttc_floor:.2f} s floor)")
    return 0


def _cmd_windows(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    windows = replay.cut_windows(
        manifest, args.window_s, args.sample_hz, n_frames=args.n_frames
    )
    doc = [
        {
            "interval": w.interval_label,
            "sampled_frames": list(w.sampled_frames),
            "sample_rate": w.sample_rate,
        }
        for w in windows
    ]
    print(json.dumps(doc, indent=2))
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    if args.mock:
        service = MockCompletionService.from_file(args.mock)
    elif args.endpoint:
        config = load_service_config(args.service_config)
        config = type(config)(**{**config.__dict__, "endpoint": args.endpoint})
        service = HttpCompletionService(config)
    else:
        print("error: pass --mock <responses.json> or --endpoint <url>", file=sys.stderr)
        return 2
    summary = replay.run_replay(
        args.fixtures,
        args.out,
        service,
        window_s=args.window_s,
        sample_hz=args.sample_hz,
        guard_cfg=GuardConfig(),
    )
    profile = replay.load_profile(args.profile) if args.profile else None
    print(f"video {summary.video_id}: {summary.completed} windows ok, {summary.errored} errored")
    if profile is not None:
        print(f"modeled latency [{profile.label}]: {replay.total_latency(profile):.2f} s")
    print(f"run directory: {summary.out_dir}")
    return 0 if summary.errored == 0 else 1


def _cmd_eval_confusion(args: argparse.Namespace) -> int:
    counts = metrics.ConfusionCounts(tp=args.tp, fp=args.fp, fn=args.fn, tn=args.tn)
    precision, recall = metrics.precision_recall(counts)
    print(f"precision {100 * precision:.1f}%")
    print(f"recall    {100 * recall:.1f}%")
    return 0


def _cmd_eval_icc(args: argparse.Namespace) -> int:
    rows = []
    for line in Path(args.matrix).read_text().splitlines():
        line = line.strip()
        if line:
            rows.append([float(v) for v in line.split(",")])
    value = metrics.icc_two_way_random(rows)
    print(f"ICC(2,1) = {value:.3f}")
    return 0


def _cmd_eval_timeline(args: argparse.Namespace) -> int:
    run = Path(args.run)
    reports = []
    for risks_path in sorted(run.glob("window_*/risks.json")):
        reports.append(report_from_wire(json.loads(risks_path.read_text())))
    timeline = metrics.build_timeline(reports, args.fps)
    doc = {
        str(s): sorted(timeline.risky_by_second[s]) for s in timeline.seconds()
    }
    print(json.dumps(doc, indent=2))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .gateway import serve

    listen = args.listen or os.environ.get("VCD_LISTEN", "127.0.0.1:8000")
    serve(args.runs, listen, fixtures_root=args.fixtures)
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    root = synth.demo_fixture(args.out, seconds=args.seconds)
    print(f"fixture written to {root}")
    print(f"mock responses at {Path(args.out) / 'responses.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vcd", description=__doc__)
    parser.add_argument("--version", action="version", version=f"vcd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("latency", help="total pipeline latency for a profile")
    p.add_argument("--profile", required=True, help="builtin name or profile JSON path")
    p.add_argument("--ttc-floor", type=float, default=None, help="reaction floor in seconds")
    p.add_argument("--horizon", type=float, default=4.0, help="event horizon in seconds")
    p.set_defaults(func=_cmd_latency)

    p = sub.add_parser("windows", help="cut a clip into causal windows")
    p.add_argument("--manifest", required=True)
    p.add_argument("--window-s", type=float, default=2.0)
    p.add_argument("--sample-hz", type=float, default=2.0)
    p.add_argument("--n-frames", type=int, default=None)
    p.set_defaults(func=_cmd_windows)

    p = sub.add_parser("replay", help="run the pipeline over a fixture directory")
    p.add_argument("--fixtures", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mock", default=None, help="mock responses JSON")
    p.add_argument("--endpoint", default=None, help="completion service URL")
    p.add_argument("--service-config", default=None)
    p.add_argument("--profile", default=None, help="latency profile to report")
    p.add_argument("--window-s", type=float, default=2.0)
    p.add_argument("--sample-hz", type=float, default=2.0)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("eval", help="measurement utilities")
    esub = p.add_subparsers(dest="eval_command", required=True)

    e = esub.add_parser("confusion", help="precision/recall from confusion counts")
    e.add_argument("--tp", type=float, required=True)
    e.add_argument("--fp", type=float, required=True)
    e.add_argument("--fn", type=float, required=True)
    e.add_argument("--tn", type=float, default=0.0)
    e.set_defaults(func=_cmd_eval_confusion)

    e = esub.add_parser("icc", help="two-way random-effects agreement, raters x items CSV")
    e.add_argument("--matrix", required=True)
    e.set_defaults(func=_cmd_eval_icc)

    e = esub.add_parser("timeline", help="second-by-second risky ids from a run")
    e.add_argument("--run", required=True, help="run directory of one video")
    e.add_argument("--fps", type=float, default=30.0)
    e.set_defaults(func=_cmd_eval_timeline)

    p = sub.add_parser("serve", help="gateway service for the viewer")
    p.add_argument("--runs", required=True, help="directory of replay runs")
    p.add_argument("--fixtures", default=None, help="override fixtures root")
    p.add_argument("--listen", default=None, help="host:port (or env VCD_LISTEN)")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("synth", help="generate the demo fixture clip")
    p.add_argument("--out", required=True)
    p.add_argument("--seconds", type=float, default=10.0)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
