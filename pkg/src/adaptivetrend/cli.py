"""Command-line entry point.

Subcommands:
  validate-data  check every data file in a directory against its schema
  synth          generate a deterministic synthetic data directory
  backtest       run the full pipeline and write run artifacts
  sweep          rerun the backtest along a parameter axis, one CSV row each
  bootstrap      Sharpe-difference significance test between two runs
  report         render run artifacts into a markdown report + plot CSVs

Configuration is a flat text file of `key = value` lines with dotted keys
(full-line # comments allowed). Every strategy constant is a key with its
default documented in CONFIG_SCHEMA; unknown keys are rejected by name.
All artifact files are written atomically (temp file + rename) and reruns
with identical inputs produce byte-identical results (the run manifest,
which records wall-clock duration, is the one exception).
"""

import argparse
import hashlib
import io
import json
import logging
import math
import os
import sys
import time
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .analytics import (classify_regimes, compute_metrics, bootstrap_sharpe_test,
                        regime_metrics, write_regime_csv, REGIME_CSV_HEADER)
from .backtester import (BacktestConfig, BacktestResult, EquityCurve,
                         load_equity, run_ablation, save_equity, snap_to_month,
                         ABLATION_VARIANTS)
from .benchmarks import BenchmarkSpec, run_benchmark
from .cost_model import CostConfig, load_funding_rates
from .market_data import (DataError, MarketCapRecord, PriceSeries,
                          SyntheticSpec, bars_per_year, date_of_ts,
                          generate_synthetic_universe, load_market_caps,
                          load_price_series, resample_series,
                          save_market_caps, save_price_series)
from .rebalancer import ParamGrid, RebalanceConfig, cap_snapshot
from .signal_engine import read_ledger, write_ledger

logger = logging.getLogger(__name__)

DATA_DIR_ENV = "ADAPTIVETREND_DATA_DIR"
CAPS_FILE = "market_caps.csv"
FUNDING_FILE = "funding_rates.csv"

SWEEP_ALPHA_GRID = (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0)
SWEEP_LAMBDA_GRID = (0.5, 0.7, 0.8)
SWEEP_FEE_GRID = (0.0, 4.0, 8.0, 12.0)
SWEEP_TIMEFRAME_GRID = (3600, 14400, 21600, 28800, 43200, 86400)

METRIC_COLUMNS = ["ann_return", "ann_vol", "sharpe", "sortino", "calmar",
                  "mdd", "win_rate", "avg_trade_pnl", "profit_factor",
                  "trades_per_month", "turnover"]


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


# ---------------------------------------------------------------------------
# Config file handling
# ---------------------------------------------------------------------------

def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_timestamp(s: str) -> int:
    """Epoch seconds, or a YYYY-MM-DD date taken as 00:00 UTC."""
    s = s.strip()
    try:
        return int(s)
    except ValueError:
        pass
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _parse_floats(s: str) -> Tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _parse_ints(s: str) -> Tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _parse_str(s: str) -> str:
    return s.strip()


def _parse_strs(s: str) -> Tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


# key -> (parser, default string or None for "unset")
CONFIG_SCHEMA = {
    "data.dir": (_parse_str, None),
    "data.interval": (int, "21600"),
    "run.start": (_parse_timestamp, None),
    "run.end": (_parse_timestamp, None),
    "run.initial_balance": (float, "100000"),
    "run.variant": (_parse_str, "full"),
    "run.label": (_parse_str, None),
    "run.jobs": (int, "1"),
    "engine.trailing_stop": (_parse_bool, "true"),
    "engine.intrabar_stop_fill": (_parse_bool, "false"),
    "engine.cap_filter": (_parse_bool, "true"),
    "engine.sharpe_filter": (_parse_bool, "true"),
    "engine.reoptimize": (_parse_bool, "true"),
    "rebalance.k_long": (int, "15"),
    "rebalance.k_short": (int, "15"),
    "rebalance.gamma_long": (float, "1.3"),
    "rebalance.gamma_short": (float, "1.7"),
    "rebalance.long_ratio": (float, "0.7"),
    "rebalance.buffer_bars": (int, "4"),
    "rebalance.rf_annual": (float, "0.045"),
    "grid.theta_entry": (_parse_floats, "0.01,0.02,0.03,0.05,0.08"),
    "grid.theta_entry_short": (_parse_floats, "0.01,0.02,0.03,0.05,0.08"),
    "grid.alpha": (_parse_floats, "1.0,1.5,2.0,2.5,3.0,3.5,4.0,4.5,5.0"),
    "grid.lookback": (_parse_ints, "4,8,12,20,28"),
    "grid.atr_window": (int, "14"),
    "costs.taker_fee_bps": (float, "4"),
    "costs.slip_coeff": (float, "0.1"),
    "costs.slip_cap_bps": (float, "50"),
    "costs.funding_rate_per_8h": (float, "0.0001"),
    "costs.funding_hours": (_parse_ints, "0,8,16"),
    "costs.funding_rates_file": (_parse_str, None),
    "benchmarks.kinds": (_parse_strs, ""),
    "benchmarks.universe_size": (int, "20"),
    "benchmarks.vol_target": (float, "0.10"),
    "benchmarks.buy_hold_symbol": (_parse_str, None),
    "regimes.enabled": (_parse_bool, "true"),
    "regimes.reference_symbol": (_parse_str, None),
    "regimes.window_days": (int, "60"),
}

BENCHMARK_NAMES = ("tsmom_1m", "tsmom_3m", "vol_scaled_tsmom", "btc_bh", "ew_bh")


def read_config_file(path: str) -> Dict[str, str]:
    raw: Dict[str, str] = {}
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}: line {lineno}: expected key = value")
            key, _, value = stripped.partition("=")
            raw[key.strip()] = value.strip()
    return raw


def resolve_config(path: Optional[str],
                   overrides: Optional[Dict[str, str]] = None) -> Dict[str, object]:
    """Merge file values over schema defaults; reject unknown keys by name."""
    raw = read_config_file(path) if path else {}
    if overrides:
        raw.update(overrides)
    unknown = sorted(k for k in raw if k not in CONFIG_SCHEMA)
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(unknown))
    resolved: Dict[str, object] = {}
    for key, (parse, default) in CONFIG_SCHEMA.items():
        text = raw.get(key, default)
        if text is None:
            resolved[key] = None
            continue
        try:
            resolved[key] = parse(text)
        except ValueError as exc:
            raise ConfigError(f"config key {key}: {exc}") from exc
    return resolved


def config_snapshot(cfg: Dict[str, object]) -> Dict[str, object]:
    """JSON-safe view of a resolved config (tuples become lists)."""
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()}


def build_backtest_config(cfg: Dict[str, object]) -> BacktestConfig:
    if cfg["run.start"] is None or cfg["run.end"] is None:
        raise ConfigError("run.start and run.end are required")
    grid = ParamGrid(
        theta_entry=cfg["grid.theta_entry"],
        theta_entry_short=cfg["grid.theta_entry_short"],
        alpha=cfg["grid.alpha"],
        lookback=cfg["grid.lookback"],
        atr_window=cfg["grid.atr_window"],
    )
    rebalance = RebalanceConfig(
        k_long=cfg["rebalance.k_long"],
        k_short=cfg["rebalance.k_short"],
        gamma_long=cfg["rebalance.gamma_long"],
        gamma_short=cfg["rebalance.gamma_short"],
        long_ratio=cfg["rebalance.long_ratio"],
        grid=grid,
        buffer_bars=cfg["rebalance.buffer_bars"],
        rf_annual=cfg["rebalance.rf_annual"],
    )
    funding_rates = None
    if cfg["costs.funding_rates_file"]:
        funding_rates = load_funding_rates(cfg["costs.funding_rates_file"])
    costs = CostConfig(
        taker_fee_bps=cfg["costs.taker_fee_bps"],
        slip_coeff=cfg["costs.slip_coeff"],
        slip_cap_bps=cfg["costs.slip_cap_bps"],
        funding_rate_per_8h=cfg["costs.funding_rate_per_8h"],
        funding_hours=tuple(cfg["costs.funding_hours"]),
        funding_rates=funding_rates,
    )
    return BacktestConfig(
        start=cfg["run.start"],
        end=cfg["run.end"],
        initial_balance=cfg["run.initial_balance"],
        interval=cfg["data.interval"],
        rebalance=rebalance,
        costs=costs,
        trailing_stop_enabled=cfg["engine.trailing_stop"],
        cap_filter_enabled=cfg["engine.cap_filter"],
        sharpe_filter_enabled=cfg["engine.sharpe_filter"],
        reoptimize_enabled=cfg["engine.reoptimize"],
        intrabar_stop_fill=cfg["engine.intrabar_stop_fill"],
        jobs=cfg["run.jobs"],
    )


def run_label(cfg: Dict[str, object], bt_cfg: BacktestConfig) -> str:
    if cfg["run.label"]:
        return str(cfg["run.label"])
    lam = bt_cfg.rebalance.long_ratio
    if cfg["run.variant"] == "symmetric_allocation":
        lam = 0.5
    label = f"AdaptiveTrend ({round(lam * 100)}/{round(100 - lam * 100)})"
    if cfg["run.variant"] not in (None, "full"):
        label += f" [{cfg['run.variant']}]"
    return label


# ---------------------------------------------------------------------------
# Data directory handling
# ---------------------------------------------------------------------------

def data_dir_from(cfg: Optional[Dict[str, object]],
                  flag_value: Optional[str]) -> str:
    if flag_value:
        return flag_value
    if cfg and cfg.get("data.dir"):
        return str(cfg["data.dir"])
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return env
    raise ConfigError(
        f"no data directory: set data.dir, --data-dir, or ${DATA_DIR_ENV}")


def load_universe(data_dir: str, interval: int
                  ) -> Tuple[Dict[str, PriceSeries], List[MarketCapRecord]]:
    if not os.path.isdir(data_dir):
        raise DataError(f"data directory not found: {data_dir}")
    universe: Dict[str, PriceSeries] = {}
    caps: List[MarketCapRecord] = []
    for name in sorted(os.listdir(data_dir)):
        if not name.endswith(".csv"):
            continue
        path = os.path.join(data_dir, name)
        if name == CAPS_FILE:
            caps = load_market_caps(path)
        elif name == FUNDING_FILE:
            continue
        else:
            series = load_price_series(path, interval=interval)
            universe[series.symbol] = series
    if not universe:
        raise DataError(f"no OHLCV files found in {data_dir}")
    return universe, caps


def digest_dir(data_dir: str) -> Dict[str, str]:
    digests = {}
    for name in sorted(os.listdir(data_dir)):
        path = os.path.join(data_dir, name)
        if not os.path.isfile(path):
            continue
        h = hashlib.sha256()
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
        digests[name] = h.hexdigest()
    return digests


# ---------------------------------------------------------------------------
# Atomic artifact writing
# ---------------------------------------------------------------------------

def atomic_write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path: str, payload: object) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    import csv as _csv
    buf = io.StringIO()
    writer = _csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt_cell(value: object) -> object:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def metrics_row(report) -> List[object]:
    d = report.to_dict()
    return [_fmt_cell(d[c]) for c in METRIC_COLUMNS]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_validate_data(args) -> int:
    try:
        data_dir = data_dir_from(None, args.data_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not os.path.isdir(data_dir):
        print(f"error: unreadable directory: {data_dir}", file=sys.stderr)
        return 1
    names = sorted(n for n in os.listdir(data_dir) if n.endswith(".csv"))
    if not names:
        print("error: no data files found", file=sys.stderr)
        return 1
    failures = 0
    for name in names:
        path = os.path.join(data_dir, name)
        try:
            if name == CAPS_FILE:
                load_market_caps(path)
            elif name == FUNDING_FILE:
                load_funding_rates(path)
            else:
                load_price_series(path, interval=args.interval)
            print(f"{name}: OK")
        except DataError as exc:
            failures += 1
            print(f"{name}: FAIL: {exc}")
    print(f"{len(names) - failures}/{len(names)} files valid")
    return 0 if failures == 0 else 1


def cmd_synth(args) -> int:
    regimes = []
    for part in args.regimes.split(","):
        dur, drift, vol = part.split(":")
        regimes.append((int(dur), float(drift), float(vol)))
    spec = SyntheticSpec(
        seed=args.seed, n_symbols=args.symbols,
        n_bars=sum(d for d, _, _ in regimes), regimes=tuple(regimes),
        interval=args.interval, start=args.start,
    )
    series_list, caps = generate_synthetic_universe(spec)
    os.makedirs(args.out, exist_ok=True)
    for series in series_list:
        save_price_series(series, os.path.join(args.out, f"{series.symbol}.csv"))
    save_market_caps(caps, os.path.join(args.out, CAPS_FILE))
    print(f"wrote {len(series_list)} symbols x {spec.n_bars} bars to {args.out}")
    return 0


def _write_run_artifacts(out_dir: str, label: str, variant: str,
                         report, result: BacktestResult) -> None:
    os.makedirs(out_dir, exist_ok=True)
    eq_path = os.path.join(out_dir, "equity.csv")
    save_equity(result.equity, eq_path + ".tmp")
    os.replace(eq_path + ".tmp", eq_path)
    led_path = os.path.join(out_dir, "ledger.csv")
    write_ledger(result.trades, led_path + ".tmp")
    os.replace(led_path + ".tmp", led_path)
    write_json(os.path.join(out_dir, "metrics.json"),
               {"label": label, "variant": variant,
                "bankrupt": result.equity.bankrupt,
                "metrics": report.to_dict()})
    write_json(os.path.join(out_dir, "rebalance_log.json"), result.rebalance_log)


def cmd_backtest(args) -> int:
    t0 = time.monotonic()
    try:
        cfg = resolve_config(args.config)
        if args.jobs is not None:
            cfg["run.jobs"] = args.jobs
        bt_cfg = build_backtest_config(cfg)
        variant = str(cfg["run.variant"])
        if variant not in ABLATION_VARIANTS:
            raise ConfigError(f"run.variant must be one of {ABLATION_VARIANTS}")
        data_dir = data_dir_from(cfg, None)
        universe, caps = load_universe(data_dir, bt_cfg.interval)
    except (ConfigError, DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    label = run_label(cfg, bt_cfg)
    report, result = run_ablation(universe, caps, bt_cfg, variant)
    out = args.out
    _write_run_artifacts(out, label, variant, report, result)

    bpy = bars_per_year(bt_cfg.interval)
    if cfg["regimes.enabled"]:
        _write_regime_artifacts(out, cfg, universe, caps, bt_cfg, result, bpy)

    for name in cfg["benchmarks.kinds"]:
        if name not in BENCHMARK_NAMES:
            print(f"error: unknown benchmark {name!r}; expected one of"
                  f" {BENCHMARK_NAMES}", file=sys.stderr)
            return 1
        spec = _benchmark_spec(name, cfg)
        run = run_benchmark(spec, universe, caps, bt_cfg)
        bench_dir = os.path.join(out, "benchmarks", name)
        os.makedirs(bench_dir, exist_ok=True)
        eq_path = os.path.join(bench_dir, "equity.csv")
        save_equity(run.equity, eq_path + ".tmp")
        os.replace(eq_path + ".tmp", eq_path)
        led_path = os.path.join(bench_dir, "ledger.csv")
        write_ledger(run.trades, led_path + ".tmp")
        os.replace(led_path + ".tmp", led_path)
        write_json(os.path.join(bench_dir, "metrics.json"),
                   {"label": _benchmark_label(name), "variant": name,
                    "metrics": run.metrics.to_dict()})

    write_json(os.path.join(out, "manifest.json"), {
        "engine_version": __version__,
        "command": "backtest",
        "seed": args.seed,
        "config": config_snapshot(cfg),
        "data_dir": os.path.abspath(data_dir),
        "input_digests": digest_dir(data_dir),
        "duration_seconds": round(time.monotonic() - t0, 3),
    })
    print(f"backtest complete: {label}; final balance"
          f" {result.equity.balances[-1]:.2f}; artifacts in {out}")
    return 0


def _benchmark_spec(name: str, cfg: Dict[str, object]) -> BenchmarkSpec:
    common = {"universe_size": cfg["benchmarks.universe_size"]}
    if name == "tsmom_1m":
        return BenchmarkSpec(kind="tsmom", lookback_months=1, **common)
    if name == "tsmom_3m":
        return BenchmarkSpec(kind="tsmom", lookback_months=3, **common)
    if name == "vol_scaled_tsmom":
        return BenchmarkSpec(kind="vol_scaled_tsmom",
                             vol_target_annual=cfg["benchmarks.vol_target"],
                             **common)
    if name == "btc_bh":
        return BenchmarkSpec(kind="buy_hold",
                             symbol=cfg["benchmarks.buy_hold_symbol"], **common)
    return BenchmarkSpec(kind="equal_weight_buy_hold", **common)


def _benchmark_label(name: str) -> str:
    return {
        "tsmom_1m": "TSMOM (1M)",
        "tsmom_3m": "TSMOM (3M)",
        "vol_scaled_tsmom": "Vol-Scaled TSMOM",
        "btc_bh": "BTC Buy & Hold",
        "ew_bh": "Equal-Weight Buy & Hold",
    }[name]


def _write_regime_artifacts(out: str, cfg, universe, caps, bt_cfg,
                            result: BacktestResult, bpy: float) -> None:
    ref_symbol = cfg["regimes.reference_symbol"]
    if ref_symbol is None:
        snapshot = cap_snapshot(caps, date_of_ts(snap_to_month(bt_cfg.start) - 1))
        if not snapshot:
            logger.warning("regimes: no cap snapshot to pick a reference symbol")
            return
        ref_symbol = sorted(snapshot, key=lambda s: (-snapshot[s], s))[0]
    ref = universe.get(ref_symbol)
    if ref is None:
        logger.warning("regimes: reference symbol %s not in universe", ref_symbol)
        return
    regimes = classify_regimes(ref, window_days=cfg["regimes.window_days"])
    if len(regimes.timestamps) == 0:
        logger.warning("regimes: reference series too short to label")
        return
    eq = result.equity
    per_regime = regime_metrics(eq.timestamps[1:], eq.returns(), regimes,
                                ledger=result.trades,
                                rf_annual=bt_cfg.rebalance.rf_annual,
                                bars_per_year=bpy)
    tmp = os.path.join(out, "regime_metrics.csv.tmp")
    write_regime_csv(per_regime, tmp)
    os.replace(tmp, os.path.join(out, "regime_metrics.csv"))


def cmd_sweep(args) -> int:
    t0 = time.monotonic()
    try:
        cfg = resolve_config(args.config)
        if args.jobs is not None:
            cfg["run.jobs"] = args.jobs
        base_cfg = build_backtest_config(cfg)
        data_dir = data_dir_from(cfg, None)
        universe, caps = load_universe(data_dir, base_cfg.interval)
    except (ConfigError, DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    from dataclasses import replace as dc_replace
    rows: List[List[object]] = []
    variant = str(cfg["run.variant"])

    if args.axis == "alpha_lambda":
        header = ["alpha", "lambda"] + METRIC_COLUMNS
        for alpha in SWEEP_ALPHA_GRID:
            for lam in SWEEP_LAMBDA_GRID:
                rcfg = dc_replace(base_cfg.rebalance, long_ratio=lam,
                                  grid=dc_replace(base_cfg.rebalance.grid,
                                                  alpha=(alpha,)))
                point = dc_replace(base_cfg, rebalance=rcfg)
                report, _ = run_ablation(universe, caps, point, variant)
                rows.append([repr(alpha), repr(lam)] + metrics_row(report))
    elif args.axis == "fee_bps":
        header = ["fee_bps"] + METRIC_COLUMNS
        for fee_bps in SWEEP_FEE_GRID:
            point = dc_replace(base_cfg,
                               costs=dc_replace(base_cfg.costs,
                                                taker_fee_bps=fee_bps))
            report, _ = run_ablation(universe, caps, point, variant)
            rows.append([repr(fee_bps)] + metrics_row(report))
    elif args.axis == "timeframe":
        header = ["timeframe_s"] + METRIC_COLUMNS
        bad = [tf for tf in SWEEP_TIMEFRAME_GRID if tf % base_cfg.interval != 0]
        if bad:
            print(f"error: timeframe sweep needs source bars dividing each"
                  f" target; {base_cfg.interval} does not divide {bad}",
                  file=sys.stderr)
            return 1
        for tf in SWEEP_TIMEFRAME_GRID:
            resampled = {sym: resample_series(s, tf)
                         for sym, s in universe.items()}
            buffer_bars = max(1, 86_400 // tf)
            rcfg = dc_replace(base_cfg.rebalance, buffer_bars=buffer_bars)
            point = dc_replace(base_cfg, interval=tf, rebalance=rcfg)
            report, _ = run_ablation(resampled, caps, point, variant)
            rows.append([tf] + metrics_row(report))
    else:
        print(f"error: unknown axis {args.axis!r}; expected alpha_lambda,"
              f" fee_bps, or timeframe", file=sys.stderr)
        return 1

    os.makedirs(args.out, exist_ok=True)
    atomic_write_text(os.path.join(args.out, "sweep.csv"),
                      _csv_text(header, rows))
    write_json(os.path.join(args.out, "manifest.json"), {
        "engine_version": __version__,
        "command": "sweep",
        "axis": args.axis,
        "seed": args.seed,
        "config": config_snapshot(cfg),
        "data_dir": os.path.abspath(data_dir),
        "input_digests": digest_dir(data_dir),
        "duration_seconds": round(time.monotonic() - t0, 3),
    })
    print(f"sweep complete: {len(rows)} rows in {args.out}/sweep.csv")
    return 0


def cmd_bootstrap(args) -> int:
    try:
        cfg = resolve_config(args.config) if args.config else None
        eq_a = load_equity(os.path.join(args.run_a, "equity.csv"))
        eq_b = load_equity(os.path.join(args.run_b, "equity.csv"))
    except (ConfigError, DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if len(eq_a) != len(eq_b):
        print(f"error: equity curves differ in length"
              f" ({len(eq_a)} vs {len(eq_b)})", file=sys.stderr)
        return 1
    mismatch = np.flatnonzero(eq_a.timestamps != eq_b.timestamps)
    if len(mismatch) > 0:
        i = int(mismatch[0])
        print(f"error: timestamps misaligned at index {i}:"
              f" {int(eq_a.timestamps[i])} vs {int(eq_b.timestamps[i])}",
              file=sys.stderr)
        return 1
    interval = cfg["data.interval"] if cfg else 21_600
    rf = cfg["rebalance.rf_annual"] if cfg else 0.045
    try:
        result = bootstrap_sharpe_test(
            eq_a.returns(), eq_b.returns(), n_reps=args.reps,
            block_len=args.block, seed=args.seed, rf_annual=rf,
            bars_per_year=bars_per_year(interval),
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)
    write_json(os.path.join(args.out, "bootstrap.json"), {
        "delta_sr": result.delta_sr,
        "p_value": result.p_value,
        "n_reps": result.n_reps,
        "block_len": result.block_len,
        "seed": args.seed,
        "run_a": os.path.abspath(args.run_a),
        "run_b": os.path.abspath(args.run_b),
    })
    print(f"delta_sr={result.delta_sr:.4f} p_value={result.p_value:.4f}"
          f" (reps={result.n_reps}, block={result.block_len})")
    return 0


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------

def _md_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)


def _fmt_metric(value: object) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _fmt_regime_cell(cell: str) -> str:
    """Render a regime CSV cell: counts stay whole, ratios get 4 decimals."""
    if not cell:
        return "n/a"
    if cell.isdigit():
        return cell
    try:
        return f"{float(cell):.4f}"
    except ValueError:
        return cell


def _read_metrics_json(path: str) -> Optional[dict]:
    if not os.path.isfile(path):
        return None
    with open(path) as fh:
        return json.load(fh)


def cmd_report(args) -> int:
    out = args.out
    if not os.path.isdir(out):
        print(f"error: no such run directory: {out}", file=sys.stderr)
        return 1
    gaps: List[str] = []
    sections: List[str] = ["# Backtest Report", ""]

    # Main comparison table (strategy + any benchmarks present).
    entries: List[dict] = []
    main = _read_metrics_json(os.path.join(out, "metrics.json"))
    if main is None:
        gaps.append("metrics.json missing: no strategy metrics")
    else:
        entries.append(main)
    bench_root = os.path.join(out, "benchmarks")
    if os.path.isdir(bench_root):
        for name in sorted(os.listdir(bench_root)):
            bench = _read_metrics_json(os.path.join(bench_root, name,
                                                    "metrics.json"))
            if bench is not None:
                entries.append(bench)
    sections.append("## Performance comparison")
    sections.append("")
    if entries:
        header = ["strategy"] + METRIC_COLUMNS
        rows = [[e["label"]] + [_fmt_metric(e["metrics"][c])
                                for c in METRIC_COLUMNS]
                for e in entries]
        sections.append(_md_table(header, rows))
    else:
        sections.append("_no metrics available_")
    sections.append("")

    # Regime table.
    sections.append("## Regime decomposition")
    sections.append("")
    regime_path = os.path.join(out, "regime_metrics.csv")
    if os.path.isfile(regime_path):
        import csv as _csv
        with open(regime_path, newline="") as fh:
            rows = list(_csv.reader(fh))
        if len(rows) > 1:
            sections.append(_md_table(rows[0], [[_fmt_regime_cell(c) for c in r]
                                                for r in rows[1:]]))
        else:
            sections.append("_no labeled regimes_")
    else:
        gaps.append("regime_metrics.csv missing: regime table omitted")
        sections.append("_regime decomposition: not available_")
    sections.append("")

    # Significance.
    sections.append("## Significance")
    sections.append("")
    boot_path = os.path.join(out, "bootstrap.json")
    if os.path.isfile(boot_path):
        with open(boot_path) as fh:
            boot = json.load(fh)
        sections.append(
            f"Sharpe difference {boot['delta_sr']:.4f}, two-sided"
            f" p = {boot['p_value']:.4f} (circular block bootstrap,"
            f" {boot['n_reps']} replications, block length {boot['block_len']}).")
    else:
        sections.append("significance: not run")
    sections.append("")

    # Plot-ready equity CSV.
    curves: List[Tuple[str, EquityCurve]] = []
    if main is not None and os.path.isfile(os.path.join(out, "equity.csv")):
        curves.append((main["label"], load_equity(os.path.join(out, "equity.csv"))))
    if os.path.isdir(bench_root):
        for name in sorted(os.listdir(bench_root)):
            eq_path = os.path.join(bench_root, name, "equity.csv")
            meta = _read_metrics_json(os.path.join(bench_root, name,
                                                   "metrics.json"))
            if os.path.isfile(eq_path) and meta is not None:
                curves.append((meta["label"], load_equity(eq_path)))
    if curves:
        rows = []
        for label, curve in curves:
            for ts, bal in zip(curve.timestamps, curve.balances):
                rows.append([label, int(ts), repr(float(bal))])
        atomic_write_text(os.path.join(out, "report_equity.csv"),
                          _csv_text(["strategy", "timestamp", "balance"], rows))
        sections.append(f"Equity curves: report_equity.csv"
                        f" ({len(curves)} strategies).")
    else:
        gaps.append("equity.csv missing: no equity export")

    # Sensitivity surface from an alpha x lambda sweep.
    sweep_path = os.path.join(out, "sweep.csv")
    if os.path.isfile(sweep_path):
        import csv as _csv
        with open(sweep_path, newline="") as fh:
            sweep_rows = list(_csv.reader(fh))
        header = sweep_rows[0] if sweep_rows else []
        if {"alpha", "lambda", "sharpe"} <= set(header):
            ia, il = header.index("alpha"), header.index("lambda")
            ish = header.index("sharpe")
            sens = [[r[ia], r[il], r[ish]] for r in sweep_rows[1:]]
            atomic_write_text(os.path.join(out, "sensitivity.csv"),
                              _csv_text(["alpha", "lambda", "sharpe"], sens))
            sections.append("Sensitivity surface: sensitivity.csv.")
    sections.append("")

    if gaps:
        sections.append("## Gaps")
        sections.append("")
        for gap in gaps:
            sections.append(f"- {gap}")
        sections.append("")

    atomic_write_text(os.path.join(out, "report.md"),
                      "\n".join(sections).rstrip() + "\n")
    print(f"report written to {os.path.join(out, 'report.md')}"
          + (f" ({len(gaps)} gaps)" if gaps else ""))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptivetrend",
        description="Deterministic backtester for adaptive crypto trend"
                    " following with monthly Sharpe-filtered selection.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-data", help="validate every file in a data dir")
    p.add_argument("--data-dir", help=f"data directory (or ${DATA_DIR_ENV})")
    p.add_argument("--interval", type=int, default=21_600,
                   help="bar interval in seconds (default 21600)")
    p.set_defaults(func=cmd_validate_data)

    p = sub.add_parser("synth", help="generate a synthetic data directory")
    p.add_argument("--out", required=True, help="output data directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--symbols", type=int, default=25)
    p.add_argument("--interval", type=int, default=21_600)
    p.add_argument("--start", type=_parse_timestamp, default="2022-01-01",
                   help="series start (bars begin one interval later)")
    p.add_argument("--regimes", default="360:0.5:0.6,360:-0.4:0.8,360:0.1:0.4",
                   help="comma list of bars:annual_drift:annual_vol segments")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("backtest", help="run the strategy and write artifacts")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("sweep", help="rerun the backtest along one axis")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--axis", required=True,
                   choices=["alpha_lambda", "fee_bps", "timeframe"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bootstrap",
                       help="Sharpe-difference significance between two runs")
    p.add_argument("--run-a", required=True, help="first run directory")
    p.add_argument("--run-b", required=True, help="second run directory")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--block", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("report", help="render run artifacts to markdown")
    p.add_argument("--out", required=True, help="run directory to render")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
