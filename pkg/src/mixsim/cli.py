"""Command-line entry points.

    mixsim run   --scenario FILE... --agent {modular|constant|external=ADDR}
                 [--stream DIR | --synthetic] [--seed N[,N...]] [--ticks-hz 10]
                 [--out DIR] [--realtime] [--dump-frames] [--assets DIR]
    mixsim suite --config FILE
    mixsim gap   --real DIR --sim DIR [--out FILE]
    mixsim report --in DIR
    mixsim teleop --scenario FILE [--stream DIR | --synthetic] [--port 8700]
                  [--realtime] [--assets DIR]

Exit codes: 0 success, 2 validation error, 3 runtime episode failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _load_images(directory: Path):
    from PIL import Image

    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise ValueError(f"no PNG images in {directory}")
    return paths, [np.asarray(Image.open(p).convert("RGB"), dtype=np.uint8) for p in paths]


def cmd_run(args) -> int:
    from .evaluation import aggregate, render_latency_table
    from .harness import EpisodeError, RunConfig, run_episode
    from .render.mesh import AssetLibrary
    from .scenario import ScenarioError, load_scenario

    try:
        config = RunConfig(
            scenario_paths=args.scenario,
            agent=args.agent,
            seeds=[int(s) for s in args.seed.split(",")],
            tick_rate=args.ticks_hz,
            out_dir=args.out,
            stream_dir=args.stream,
            realtime=args.realtime,
            dump_frames=args.dump_frames,
            asset_root=args.assets,
        )
        assets = AssetLibrary(config.asset_root)
        scenarios = [
            load_scenario(Path(p).read_text(), assets=assets) for p in config.scenario_paths
        ]
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    reports = []
    try:
        for scenario in scenarios:
            for seed in config.seeds:
                report, lines = run_episode(config, scenario, seed, assets=assets)
                reports.append(report)
                print(
                    f"{scenario.name} seed={seed}: collided={report.collided} "
                    f"time_to_goal={report.time_to_goal:.2f}s ticks={report.tick_count}"
                )
                if config.out_dir:
                    out = Path(config.out_dir)
                    out.mkdir(parents=True, exist_ok=True)
                    stem = f"{scenario.name}__seed{seed}"
                    (out / f"{stem}.report.json").write_text(report.to_json())
                    (out / f"{stem}.ticks.jsonl").write_text("\n".join(lines) + "\n")
    except EpisodeError as exc:
        print(f"episode failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    if reports:
        print()
        print(aggregate(reports).render_text())
        if reports[0].latency:
            print()
            print(render_latency_table(reports[0].latency))
    return EXIT_OK


def cmd_suite(args) -> int:
    from .harness import EpisodeError, RunConfig, run_suite
    from .scenario import ScenarioError

    try:
        config = RunConfig.from_json(Path(args.config).read_text())
    except (ValueError, OSError) as exc:
        print(f"error: bad suite config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        table, reports = run_suite(config)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except EpisodeError as exc:
        print(f"suite failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(table.render_text())
    print(f"\n{len(reports)} episodes complete", end="")
    print(f"; artifacts in {config.out_dir}" if config.out_dir else "")
    return EXIT_OK


def cmd_gap(args) -> int:
    from .evaluation import reality_gap

    try:
        real_paths, real = _load_images(Path(args.real))
        sim_paths, sim = _load_images(Path(args.sim))
        if len(real) != len(sim):
            raise ValueError(
                f"image counts differ: {len(real)} real vs {len(sim)} sim"
            )
        reports = [reality_gap(a, b) for a, b in zip(real, sim)]
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    summary = {
        "pairs": len(reports),
        "psnr_db": float(np.mean([r.psnr_db for r in reports])),
        "ssim": float(np.mean([r.ssim for r in reports])),
        "outlier_pct": float(np.mean([r.outlier_pct for r in reports])),
        "per_pair": [json.loads(r.to_json()) for r in reports],
    }
    text = json.dumps(summary, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return EXIT_OK


def cmd_report(args) -> int:
    from .evaluation import BenchmarkTable

    root = Path(args.indir)
    bench = root / "benchmark.json"
    if not bench.exists():
        print(f"error: {bench} not found", file=sys.stderr)
        return EXIT_VALIDATION
    cells = {}
    for key, stats in json.loads(bench.read_text()).items():
        agent, kind = key.split("|", 1)
        cells[(agent, kind)] = stats
    print(BenchmarkTable(cells).render_text())
    latency = root / "latency.txt"
    if latency.exists():
        print()
        print(latency.read_text().rstrip())
    return EXIT_OK


def cmd_teleop(args) -> int:
    from .harness import EpisodeError, RunConfig
    from .render.mesh import AssetLibrary
    from .scenario import ScenarioError, load_scenario
    from .teleop import TeleopConfig, TeleopServer

    try:
        run_config = RunConfig(
            scenario_paths=[args.scenario],
            agent="human",
            tick_rate=args.ticks_hz,
            stream_dir=args.stream,
            realtime=args.realtime,
            asset_root=args.assets,
        )
        assets = AssetLibrary(args.assets)
        scenario = load_scenario(Path(args.scenario).read_text(), assets=assets)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    server = TeleopServer(TeleopConfig(port=args.port), run_config)
    print(f"teleop serving on ws://127.0.0.1:{server.port} - drive with the browser UI")
    try:
        report, _ = server.serve(scenario, seed=args.seed, assets=assets)
    except EpisodeError as exc:
        print(f"episode failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        server.close()
    print(
        f"episode over: collided={report.collided} time_to_goal={report.time_to_goal:.2f}s"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run episodes for one or more scenarios")
    run.add_argument("--scenario", nargs="+", required=True)
    run.add_argument("--agent", default="modular")
    run.add_argument("--stream", default=None, help="replay stream directory")
    run.add_argument("--synthetic", action="store_true", help="procedural frames (default)")
    run.add_argument("--seed", default="0", help="comma-separated seeds")
    run.add_argument("--ticks-hz", type=float, default=10.0)
    run.add_argument("--out", default=None)
    run.add_argument("--realtime", action="store_true")
    run.add_argument("--dump-frames", action="store_true")
    run.add_argument("--assets", default=None)
    run.set_defaults(fn=cmd_run)

    suite = sub.add_parser("suite", help="run a scenario x variation x seed grid")
    suite.add_argument("--config", required=True)
    suite.set_defaults(fn=cmd_suite)

    gap = sub.add_parser("gap", help="reality-gap metrics between two image dirs")
    gap.add_argument("--real", required=True)
    gap.add_argument("--sim", required=True)
    gap.add_argument("--out", default=None)
    gap.set_defaults(fn=cmd_gap)

    report = sub.add_parser("report", help="re-render tables from a suite output dir")
    report.add_argument("--in", dest="indir", required=True)
    report.set_defaults(fn=cmd_report)

    teleop = sub.add_parser("teleop", help="serve the human-driver mode")
    teleop.add_argument("--scenario", required=True)
    teleop.add_argument("--stream", default=None)
    teleop.add_argument("--synthetic", action="store_true")
    teleop.add_argument("--port", type=int, default=8700)
    teleop.add_argument("--ticks-hz", type=float, default=10.0)
    teleop.add_argument("--seed", type=int, default=0)
    teleop.add_argument("--realtime", action="store_true")
    teleop.add_argument("--assets", default=None)
    teleop.set_defaults(fn=cmd_teleop)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
