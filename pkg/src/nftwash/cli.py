"""Command line: ingest-check, detect, synth, report.

Exit codes: 0 success, 1 bad input or configuration, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import SYNTH_FILES, build_config
from .errors import ConfigError, InputError, InvariantViolation
from .pipeline import STAGES, check_inputs, run_pipeline
from .report import load_report, render_text
from .synth import DEFAULT_MIX, ScenarioKind, generate, parse_mix

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2

_INPUT_FLAGS = ("transfers", "transactions", "labels", "prices", "marketplace_totals", "compliance",
                "contracts")


def _add_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="KEY=value file; flags override its values")
    p.add_argument("--transfers", help="line-delimited JSON NFT transfers")
    p.add_argument("--transactions", help="line-delimited JSON value transfers and calls")
    p.add_argument("--labels", help="CSV: address,category,name")
    p.add_argument("--prices", help="CSV: asset,date,usd")
    p.add_argument("--marketplace-totals", dest="marketplace_totals", help="CSV: marketplace,total_usd_volume")
    p.add_argument("--compliance", help="CSV: contract,supports_erc721")
    p.add_argument("--contracts", help="addresses holding bytecode, one per line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nftwash", description="NFT wash trading forensics")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("ingest-check", help="validate input files")
    _add_inputs(check)
    check.add_argument("--logs", help="line-delimited JSON raw logs to decode")

    detect = sub.add_parser("detect", help="run the full pipeline")
    _add_inputs(detect)
    detect.add_argument("--require-compliance", dest="require_compliance", action="store_true", default=None)
    detect.add_argument("--epsilon-abs", dest="epsilon_abs")
    detect.add_argument("--epsilon-rel", dest="epsilon_rel")
    detect.add_argument("--rpc-url", dest="rpc_url", help="JSON-RPC node for compliance and code checks")
    detect.add_argument("--out", help="report path (default report.json)")
    detect.add_argument("--jobs", type=int)
    detect.add_argument("--progress", action="store_true", default=None)

    synth = sub.add_parser("synth", help="write a synthetic dataset with ground truth")
    synth.add_argument("--out", default="synth", help="output directory")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--nfts", type=int, help="number of legit noise NFTs")
    synth.add_argument("--mix", help="kind=count,... (kinds not named get 0)")
    synth.add_argument("--plain", action="store_true", help="core trades only: no acquisitions, resales or claims")

    report = sub.add_parser("report", help="render a JSON report as text")
    report.add_argument("report", help="report.json written by detect")
    return parser


def _config(args, keys):
    overrides = {k: getattr(args, k, None) for k in keys}
    return build_config(overrides, args.config)


def cmd_ingest_check(args) -> int:
    config = _config(args, _INPUT_FLAGS)
    summary = check_inputs(config, args.logs)
    print(f"✅ {summary['transfers']} transfers")
    for key, value in summary.items():
        if key != "transfers":
            print(f"✅ {key}: {value}")
    return EXIT_OK


def cmd_detect(args) -> int:
    keys = _INPUT_FLAGS + ("require_compliance", "epsilon_abs", "epsilon_rel", "rpc_url", "out", "jobs",
                           "progress")
    config = _config(args, keys)
    report = run_pipeline(config)
    stages = " → ".join(str(report["cleaning"][s]["components"]) for s in STAGES)
    print(f"🔎 NFTs analyzed: {report['inputs']['nfts']}")
    print(f"🧹 Components per cleaning step: {stages}")
    print(f"🚩 Confirmed wash trading activities: {report['detection']['confirmed']}")
    print(f"✅ Report written to {config.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        mix = parse_mix(args.mix) if args.mix else dict(DEFAULT_MIX)
    except ValueError as e:
        raise ConfigError(f"--mix: {e}") from None
    if args.nfts is not None:
        if args.nfts < 0:
            raise ConfigError("--nfts must be >= 0")
        mix[ScenarioKind.NOISE_LEGIT] = args.nfts
    dataset = generate(args.seed, mix, extras=not args.plain)
    dataset.write(args.out)
    print(f"🛰 Synthetic dataset (seed {args.seed}) written to {args.out}")
    print(f"✅ {len(dataset.wash)} planted wash trades, {len(dataset.scenarios) - len(dataset.wash)} noise NFTs, "
          f"{len(dataset.transfers)} transfers")
    print(f"   files: {', '.join(SYNTH_FILES.values())}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        report = load_report(args.report)
    except FileNotFoundError:
        raise ConfigError(f"report not found: {args.report}") from None
    sys.stdout.write(render_text(report))
    return EXIT_OK


COMMANDS = {
    "ingest-check": cmd_ingest_check,
    "detect": cmd_detect,
    "synth": cmd_synth,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s - %(levelname)s - %(name)s - %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except InputError as e:
        logger.error("%s", e)
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as e:
        logger.error("internal invariant violated: %s", e)
        print(f"❌ internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:
        logger.exception("unexpected failure")
        return EXIT_INTERNAL
