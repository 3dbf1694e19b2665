"""Command-line entry point: ``generate``, ``replay`` and ``inspect``.

Exit codes: 0 ok, 1 generate failure, 2 ingestion failure, 3 replay
failure (including bad replay configs and unknown policies), 4 I/O.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from .data import (
    IngestError,
    InvalidConfig,
    SchemaConfig,
    SyntheticConfig,
    format_log,
    generate_synthetic,
    ingest,
)
from .domain import ARMS, FEATURE_NAMES, ArmId, LendBanditError, SpoofConfig
from .policies import PolicyConfig, UnknownPolicy, validate_policy_config
from .replay import (
    MERGED_ML_RULE,
    ReplayConfig,
    ReplayError,
    ReplayMode,
    ReplayReport,
    merge_rule_into_ml,
    run_sliding,
)

log = logging.getLogger("lendbandit")

EXIT_OK = 0
EXIT_GENERATE = 1
EXIT_INGEST = 2
EXIT_REPLAY = 3
EXIT_IO = 4

ENV_SYNTH_CONFIG = "LENDBANDIT_SYNTH_CONFIG"
ENV_REPLAY_CONFIG = "LENDBANDIT_REPLAY_CONFIG"
ENV_SCHEMA_CONFIG = "LENDBANDIT_SCHEMA_CONFIG"

SNAPSHOT_SET_FORMAT = "lendbandit.snapshot-set"
SNAPSHOT_SET_VERSION = 1

REPORTS_FILE = "reports.jsonl"
REVENUE_CSV = "revenue_table.csv"
REVENUE_TXT = "revenue_table.txt"
RATIOS_CSV = "selection_ratios.csv"
MANIFEST_FILE = "manifest.json"


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path: Path) -> str:
    return _sha256_bytes(path.read_bytes())


def _canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _iso_ms(ts: int) -> str:
    stamp = dt.datetime.fromtimestamp(ts / 1000, tz=dt.timezone.utc)
    return stamp.isoformat().replace("+00:00", "Z")


def build_manifest(command: str, config: dict[str, Any], seed: int, input_digest: Optional[str],
                   as_of: Optional[str], outputs: dict[str, str]) -> dict[str, Any]:
    """Run manifest.

    ``timestamp`` is the as-of time of the data (last record), not the wall
    clock, so equal inputs give byte-identical manifests.
    """
    return {
        "artifact_version": __version__,
        "command": command,
        "config": config,
        "config_hash": _sha256_bytes(_canonical_json(config).encode()),
        "seed": seed,
        "input_digest": input_digest,
        "timestamp": as_of,
        "outputs": dict(sorted(outputs.items())),
    }


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def _config_path(flag: Optional[str], env: str) -> Optional[str]:
    return flag if flag else os.environ.get(env) or None


# --------------------------------------------------------------- generate

def cmd_generate(config_path: Optional[str], out_path: str, seed: Optional[int] = None) -> int:
    try:
        if config_path is not None:
            if not Path(config_path).is_file():
                print(f"error: config not found: {config_path}", file=sys.stderr)
                return EXIT_GENERATE
            cfg = SyntheticConfig.load(config_path)
        else:
            cfg = SyntheticConfig()
        if seed is not None:
            cfg = replace(cfg, seed=seed)
    except InvalidConfig as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_GENERATE

    synth = generate_synthetic(cfg)
    text = format_log(synth.records)
    out = Path(out_path)
    manifest_path = out.with_name(out.name + ".manifest.json")
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        _write(out, text)
        digest = _sha256_bytes(text.encode())
        as_of = _iso_ms(synth.records[-1].timestamp) if synth.records else None
        manifest = build_manifest("generate", cfg.to_dict(), cfg.seed, None, as_of,
                                  {out.name: digest})
        _write(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_GENERATE
    print(f"wrote {len(synth.records)} requests to {out}")
    return EXIT_OK


# ----------------------------------------------------------------- replay

def revenue_table_csv(reports: Sequence[ReplayReport]) -> str:
    """Rows are policies, columns are windows; exact float values."""
    names = [p.name for p in reports[0].policies]
    lines = [",".join(["policy"] + [r.label for r in reports])]
    for name in names:
        lines.append(",".join([name] + [repr(r.policy(name).revenue) for r in reports]))
    return "\n".join(lines) + "\n"


def revenue_table_text(reports: Sequence[ReplayReport]) -> str:
    """Human-readable revenue table in millions, two decimals."""
    names = [p.name for p in reports[0].policies]
    header = ["Policy"] + [r.label for r in reports]
    rows = [[n] + [f"{r.policy(n).revenue / 1e6:.2f}" for r in reports] for n in names]
    rows.append(["(oracle)"] + [f"{r.oracle_revenue / 1e6:.2f}" for r in reports])
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    fmt = lambda row: " | ".join(c.ljust(w) for c, w in zip(row, widths))  # noqa: E731
    out = ["Estimated test-day revenue (millions)", fmt(header),
           "-+-".join("-" * w for w in widths)]
    out += [fmt(r) for r in rows]
    return "\n".join(out) + "\n"


def ratio_table_csv(reports: Sequence[ReplayReport], merge: bool = False) -> str:
    cols = ([ArmId.OwnVwaf.name, ArmId.MarketVwaf.name, MERGED_ML_RULE] if merge
            else [a.name for a in ARMS])
    lines = [",".join(["window", "policy"] + cols)]
    for r in reports:
        for p in r.policies:
            ratios = (merge_rule_into_ml(p.selection_ratios) if merge
                      else {a.name: p.selection_ratios[a] for a in ARMS})
            lines.append(",".join([r.label, p.name] + [repr(ratios[c]) for c in cols]))
    return "\n".join(lines) + "\n"


def reports_jsonl(reports: Sequence[ReplayReport]) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in reports)


def _load_replay_config(path: Optional[str]) -> ReplayConfig:
    if path is None:
        return ReplayConfig()
    p = Path(path)
    if not p.is_file():
        raise ReplayError(f"replay config not found: {path}")
    try:
        return ReplayConfig.from_dict(json.loads(p.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ReplayError(f"invalid replay config: {exc}") from None


def _apply_overrides(cfg: ReplayConfig, args: argparse.Namespace) -> ReplayConfig:
    changes: dict[str, Any] = {}
    if args.mode is not None:
        changes["mode"] = ReplayMode(args.mode)
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.delta is not None or args.benchmark is not None:
        delta = args.delta if args.delta is not None else cfg.spoof.delta
        if args.benchmark is not None:
            changes["spoof"] = SpoofConfig.parse_benchmark(args.benchmark, delta)
        else:
            changes["spoof"] = replace(cfg.spoof, delta=delta)
    if args.freeze_test:
        changes["freeze_test"] = True
    if args.merge_rule_into_ml:
        changes["merge_rule_into_ml"] = True
    if args.policies:
        names = [n.strip() for n in args.policies.split(",") if n.strip()]
        changes["policies"] = tuple(PolicyConfig(n) for n in names)
    if args.train_days is not None:
        changes["train_days"] = args.train_days
    if args.test_days is not None:
        changes["test_days"] = args.test_days
    return replace(cfg, **changes) if changes else cfg


def _load_snapshots(path: str) -> dict[str, Any]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if raw.get("format") != SNAPSHOT_SET_FORMAT or raw.get("version") != SNAPSHOT_SET_VERSION:
        raise ReplayError(f"{path} is not a version {SNAPSHOT_SET_VERSION} snapshot file")
    return raw["policies"]


def snapshot_set(policies) -> dict[str, Any]:
    return {"format": SNAPSHOT_SET_FORMAT, "version": SNAPSHOT_SET_VERSION,
            "policies": {p.name: p.state_dict() for p in policies}}


def cmd_replay(log_path: str, replay_config_path: Optional[str], out_dir: str,
               args: Optional[argparse.Namespace] = None) -> int:
    args = args or _parser().parse_args(["replay", log_path, "--out-dir", out_dir])
    schema_path = _config_path(args.schema, ENV_SCHEMA_CONFIG)
    try:
        schema = SchemaConfig.load(schema_path) if schema_path else SchemaConfig()
        result = ingest(log_path, schema)
    except FileNotFoundError:
        print(f"error: log not found: {log_path}", file=sys.stderr)
        return EXIT_INGEST
    except (IngestError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: ingestion failed: {exc}", file=sys.stderr)
        return EXIT_INGEST

    try:
        cfg = _apply_overrides(_load_replay_config(replay_config_path), args)
        for pc in cfg.policies:
            validate_policy_config(pc)
        snapshots = _load_snapshots(args.warm_start) if args.warm_start else None
        results = run_sliding(result.records, cfg, threads=args.threads, snapshots=snapshots)
    except UnknownPolicy as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REPLAY
    except (LendBanditError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: replay failed: {exc}", file=sys.stderr)
        return EXIT_REPLAY

    reports = [r.report for r in results]
    files = {
        REPORTS_FILE: reports_jsonl(reports),
        REVENUE_CSV: revenue_table_csv(reports),
        REVENUE_TXT: revenue_table_text(reports),
        RATIOS_CSV: ratio_table_csv(reports, merge=cfg.merge_rule_into_ml),
    }
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            _write(out / name, text)
        if args.save_snapshot:
            _write(Path(args.save_snapshot),
                   json.dumps(snapshot_set(results[-1].policies), sort_keys=True) + "\n")
        input_digest = _sha256_file(Path(log_path))
        as_of = _iso_ms(result.records[-1].timestamp)
        manifest = build_manifest(
            "replay", {"replay": cfg.to_dict(), "schema": _schema_dict(schema)}, cfg.seed,
            input_digest, as_of, {n: _sha256_bytes(t.encode()) for n, t in files.items()})
        _write(out / MANIFEST_FILE, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    print(revenue_table_text(reports), end="")
    return EXIT_OK


def _schema_dict(schema: SchemaConfig) -> dict[str, Any]:
    return {"columns": dict(sorted(schema.columns.items())), "delimiter": schema.delimiter,
            "fee_unit": schema.fee_unit, "strict": schema.strict, "filter_gc": schema.filter_gc,
            "gc_threshold": schema.gc_threshold, "ewma_half_life": schema.ewma_half_life,
            "bias": schema.bias}


# ---------------------------------------------------------------- inspect

FEE_BANDS = (0.0, 0.01, 0.02, 0.04, 0.06, 0.08, 0.10)


def fee_band_histogram(fees: Sequence[float]) -> dict[str, int]:
    labels = [f"[{lo:.0%},{hi:.0%})" for lo, hi in zip(FEE_BANDS, FEE_BANDS[1:])]
    labels.append(f">={FEE_BANDS[-1]:.0%}")
    counts = dict.fromkeys(labels, 0)
    for f in fees:
        for i, hi in enumerate(FEE_BANDS[1:]):
            if f < hi:
                counts[labels[i]] += 1
                break
        else:
            counts[labels[-1]] += 1
    return counts


def inspect_summary(log_path: str, schema: Optional[SchemaConfig] = None) -> dict[str, Any]:
    result = ingest(log_path, schema)
    recs = result.records
    out: dict[str, Any] = {"ingest": result.summary.to_dict(), "rows": len(recs)}
    if recs:
        out["first_timestamp"] = _iso_ms(recs[0].timestamp)
        out["last_timestamp"] = _iso_ms(recs[-1].timestamp)
        days = {r.timestamp // 86_400_000 for r in recs}
        out["distinct_days"] = len(days)
        feats = {}
        for i, name in enumerate(FEATURE_NAMES):
            vals = [r.context.features()[i] for r in recs]
            feats[name] = {"min": min(vals), "mean": sum(vals) / len(vals), "max": max(vals)}
        out["features"] = feats
        out["fee_bands"] = fee_band_histogram([r.quotes.price(ArmId.MarketVwaf) for r in recs])
        out["ordered_arm_prices"] = sum(r.quotes.is_ordered() for r in recs)
    return out


def cmd_inspect(log_path: str, schema_path: Optional[str] = None, as_json: bool = False) -> int:
    schema_path = _config_path(schema_path, ENV_SCHEMA_CONFIG)
    try:
        schema = SchemaConfig.load(schema_path) if schema_path else SchemaConfig()
        summary = inspect_summary(log_path, schema)
    except FileNotFoundError:
        print(f"error: log not found: {log_path}", file=sys.stderr)
        return EXIT_INGEST
    except (IngestError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INGEST
    if as_json:
        print(json.dumps(summary, indent=2, sort_keys=True))
        return EXIT_OK
    ing = summary["ingest"]
    print(f"rows read:      {ing['rows_read']}")
    print(f"rows accepted:  {ing['rows_accepted']}")
    print(f"rows rejected:  {ing['rows_rejected']}")
    print(f"GC filtered:    {ing['gc_filtered']}")
    if summary["rows"]:
        print(f"span:           {summary['first_timestamp']} .. {summary['last_timestamp']}"
              f" ({summary['distinct_days']} days)")
        print("features (min / mean / max):")
        for name, st in summary["features"].items():
            print(f"  {name:18s} {st['min']:.4f} / {st['mean']:.4f} / {st['max']:.4f}")
        print("fee bands (market VWAF):")
        for band, n in summary["fee_bands"].items():
            print(f"  {band:10s} {n}")
    clamps = ing["clamp_counts"]
    print(f"clamps:         {sum(clamps.values())}"
          + ("" if not clamps else " (" + ", ".join(f"{k}={v}" for k, v in clamps.items()) + ")"))
    return EXIT_OK


# ------------------------------------------------------------------- main

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lendbandit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic request log")
    g.add_argument("--config", help=f"synthetic config JSON (env {ENV_SYNTH_CONFIG})")
    g.add_argument("--out", required=True, help="output log path")
    g.add_argument("--seed", type=int)

    r = sub.add_parser("replay", help="replay policies over a log in sliding windows")
    r.add_argument("log")
    r.add_argument("--config", help=f"replay config JSON (env {ENV_REPLAY_CONFIG})")
    r.add_argument("--schema", help=f"log schema JSON (env {ENV_SCHEMA_CONFIG})")
    r.add_argument("--out-dir", required=True)
    r.add_argument("--mode", choices=[m.value for m in ReplayMode])
    r.add_argument("--seed", type=int)
    r.add_argument("--delta", type=float, help="anti-spoofing multiplier (default 0.85)")
    r.add_argument("--benchmark", help="market-vwaf or fixed:<fee>")
    r.add_argument("--freeze-test", action="store_true", help="no updates on test days")
    r.add_argument("--merge-rule-into-ml", action="store_true")
    r.add_argument("--policies", help="comma-separated policy names")
    r.add_argument("--train-days", type=int)
    r.add_argument("--test-days", type=int)
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--warm-start", help="snapshot file to initialize every window from")
    r.add_argument("--save-snapshot", help="write final policy states of the last window")

    i = sub.add_parser("inspect", help="summarize a log file")
    i.add_argument("log")
    i.add_argument("--schema", help=f"log schema JSON (env {ENV_SCHEMA_CONFIG})")
    i.add_argument("--json", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "generate":
        return cmd_generate(_config_path(args.config, ENV_SYNTH_CONFIG), args.out, args.seed)
    if args.command == "replay":
        return cmd_replay(args.log, _config_path(args.config, ENV_REPLAY_CONFIG), args.out_dir, args)
    return cmd_inspect(args.log, args.schema, args.json)


if __name__ == "__main__":
    sys.exit(main())
