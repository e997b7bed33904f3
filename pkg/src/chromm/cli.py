"""Command-line interface.

Subcommands: simulate (write a scenario file), pipeline (run the full
reconstruction pipeline on a scenario or observations file), evaluate
(metrics against a scenario), ablate (sweep a config axis into a CSV), and
describe-config (print the embedded defaults).

Exit codes: 0 success, 2 configuration error, 3 pipeline failure,
4 evaluation failure. Log level comes from the CHROMM_LOG env var.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys

from . import config as config_mod
from . import io as io_mod
from . import synth
from .errors import ChrommError, ConfigError, EvaluationError
from .evaluate import evaluate
from .pipeline import run_chunked_pipeline, run_pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PIPELINE = 3
EXIT_EVALUATION = 4

log = logging.getLogger("chromm")


def _setup_logging():
    level = os.environ.get("CHROMM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config(args) -> config_mod.Config:
    return config_mod.load_config(args.config, args.set or [])


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    scenario = synth.generate(cfg.scenario)
    io_mod.save_scenario(scenario, args.out)
    log.info("wrote scenario with %d observations to %s",
             len(scenario.observations), args.out)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    if args.threads is not None:
        cfg = dataclasses.replace(
            cfg, pipeline=dataclasses.replace(cfg.pipeline, threads=args.threads)
        )
        config_mod.validate(cfg)
    observations, cams, skeleton, points, _scenario = io_mod.load_pipeline_input(args.input)
    if cfg.pipeline.chunk_size > 0 and cams:
        result, _stitched = run_chunked_pipeline(observations, cams, cfg, skeleton, points)
    else:
        result = run_pipeline(observations, cams, cfg, skeleton, points)
    io_mod.save_result(result, cfg, args.out)
    log.info("wrote result with %d humans to %s", len(result.humans), args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    result = io_mod.load_result(args.result)
    scenario = io_mod.load_scenario(args.scenario)
    evaluation = evaluate(result, scenario, args.protocol)
    io_mod.save_metrics(evaluation.to_dict(), args.out)
    fields = evaluation.report.to_dict()
    for name in ("waMpjpe", "wMpjpe", "rte", "wMpjpeDagger", "gaMpjpe", "paMpjpe"):
        value = fields[name]
        if value is not None:
            print(f"{name}: {value:.6g}")
    return EXIT_OK


_ABLATION_AXES = {
    "fusion": [("fusion_strategy", v) for v in config_mod.FUSION_STRATEGIES],
    "association": [("association_mode", v) for v in config_mod.ASSOCIATION_MODES],
    "scale": [("scale_adjustment", v) for v in (True, False)],
}


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    scenario = io_mod.load_scenario(args.scenario)
    rows = []
    for field, value in _ABLATION_AXES[args.axis]:
        variant_cfg = dataclasses.replace(
            cfg, pipeline=dataclasses.replace(cfg.pipeline, **{field: value})
        )
        config_mod.validate(variant_cfg)
        result = run_pipeline(scenario.observations, dict(scenario.cams),
                              variant_cfg, scenario.skeleton)
        evaluation = evaluate(result, scenario, "all")
        report = evaluation.report.to_dict()
        assoc = evaluation.association.to_dict() if evaluation.association else {}
        rows.append({
            "variant": f"{field}={value}",
            "waMpjpe": report["waMpjpe"],
            "wMpjpe": report["wMpjpe"],
            "rte": report["rte"],
            "wMpjpeDagger": report["wMpjpeDagger"],
            "gaMpjpe": report["gaMpjpe"],
            "paMpjpe": report["paMpjpe"],
            "assocAccuracy": assoc.get("accuracy"),
            "assocPrecision": assoc.get("precision"),
            "assocRecall": assoc.get("recall"),
        })
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return EXIT_OK


def cmd_describe_config(_args) -> int:
    print(config_mod.describe(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chromm",
        description="Multi-person multi-view human-scene reconstruction "
                    "test-time pipeline on structured observations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")

    p = sub.add_parser("simulate", help="generate a synthetic scenario file")
    common(p)
    p.add_argument("--out", required=True, help="output scenario JSON path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pipeline", help="run the reconstruction pipeline")
    common(p)
    p.add_argument("--input", required=True, help="scenario or observations JSON")
    p.add_argument("--out", required=True, help="output result JSON path")
    p.add_argument("--threads", type=int, help="cap stage parallelism")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("evaluate", help="score a result against a scenario")
    p.add_argument("--result", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--protocol", choices=["mono", "multiview", "all"], default="all")
    p.add_argument("--out", required=True, help="output metrics JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="sweep one config axis, write a CSV")
    common(p)
    p.add_argument("--scenario", required=True)
    p.add_argument("--axis", choices=sorted(_ABLATION_AXES), required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("describe-config", help="print the default configuration")
    p.set_defaults(func=cmd_describe_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EvaluationError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVALUATION
    except (ChrommError, OSError) as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
