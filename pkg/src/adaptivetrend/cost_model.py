"""Trading cost model: taker fees, volume-linear slippage, periodic funding.

All functions are pure over an immutable CostConfig. Costs are expressed in
quote currency. Funding is signed: a long position pays when the rate is
positive, a short position receives the same amount.
"""

import bisect
import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .market_data import Bar, DataError, DEFAULT_INTERVAL

FIVE_MINUTES = 300
FUNDING_PERIOD = 8 * 3600

LONG = "long"
SHORT = "short"


@dataclass(frozen=True)
class CostConfig:
    """Cost parameters.

    slip_coeff is the linear price-impact coefficient: the impact rate equals
    slip_coeff times (fill notional / estimated 5-minute traded notional),
    capped at slip_cap_bps. funding_hours are the daily UTC hours at which
    funding is exchanged. funding_rates optionally overrides the flat
    funding_rate_per_8h with a per-symbol step function (see
    load_funding_rates).
    """

    taker_fee_bps: float = 4.0
    slip_coeff: float = 0.1
    slip_cap_bps: float = 50.0
    funding_rate_per_8h: float = 1e-4
    funding_hours: Tuple[int, ...] = (0, 8, 16)
    funding_rates: Optional[Dict[str, List[Tuple[int, float]]]] = field(
        default=None, compare=False
    )

    def __post_init__(self) -> None:
        if self.taker_fee_bps < 0:
            raise ValueError("taker_fee_bps must be >= 0")
        if self.slip_coeff < 0:
            raise ValueError("slip_coeff must be >= 0")
        if self.slip_cap_bps < 0:
            raise ValueError("slip_cap_bps must be >= 0")
        if any(not 0 <= h < 24 for h in self.funding_hours):
            raise ValueError("funding_hours must lie in [0, 24)")


ZERO_COSTS = CostConfig(taker_fee_bps=0.0, slip_coeff=0.0, slip_cap_bps=0.0,
                        funding_rate_per_8h=0.0)


def fee(notional: float, cfg: CostConfig) -> float:
    """Taker fee for one fill."""
    if notional < 0:
        raise ValueError("notional must be >= 0")
    return notional * cfg.taker_fee_bps * 1e-4


def slippage(notional: float, bar: Bar, cfg: CostConfig,
             interval: int = DEFAULT_INTERVAL) -> float:
    """Linear-impact slippage for one fill executed on ``bar``.

    The 5-minute traded notional is estimated by spreading the bar's volume
    evenly over the interval (72 five-minute windows for a 6-hour bar). A
    zero-volume bar yields the capped rate.
    """
    if notional < 0:
        raise ValueError("notional must be >= 0")
    if notional == 0.0:
        return 0.0
    cap_rate = cfg.slip_cap_bps * 1e-4
    n_windows = interval / FIVE_MINUTES
    est_5min_notional = bar.volume * bar.close / n_windows
    if est_5min_notional <= 0.0:
        rate = cap_rate
    else:
        rate = min(cfg.slip_coeff * notional / est_5min_notional, cap_rate)
    return rate * notional


def fill_cost(notional: float, bar: Bar, cfg: CostConfig,
              interval: int = DEFAULT_INTERVAL) -> Tuple[float, float]:
    """(fee, slippage) for one fill."""
    return fee(notional, cfg), slippage(notional, bar, cfg, interval)


def funding_events(start_ts: int, end_ts: int,
                   hours: Sequence[int] = (0, 8, 16)) -> List[int]:
    """Funding timestamps strictly inside the half-open-left interval (start, end]."""
    if end_ts <= start_ts:
        return []
    offsets = sorted(h * 3600 for h in hours)
    events = []
    day = (start_ts // 86_400) * 86_400
    while day <= end_ts:
        for off in offsets:
            ts = day + off
            if start_ts < ts <= end_ts:
                events.append(ts)
        day += 86_400
    return events


def funding_rate_at(symbol: str, ts: int, cfg: CostConfig) -> float:
    """Effective 8h funding rate for ``symbol`` at event time ``ts``.

    With a per-symbol rate series configured, the latest record at or before
    ts applies (step function); a symbol with no records, or no record yet at
    ts, falls back to the flat default rate.
    """
    if cfg.funding_rates is not None:
        records = cfg.funding_rates.get(symbol)
        if records:
            idx = bisect.bisect_right(records, (ts, float("inf"))) - 1
            if idx >= 0:
                return records[idx][1]
    return cfg.funding_rate_per_8h


def funding(side: str, size: float, entry_ts: int, exit_ts: int,
            cfg: CostConfig, symbol: str = "") -> float:
    """Signed funding cost accrued over a holding interval (entry, exit].

    A positive value is paid by the position; negative is a rebate. Long pays
    size * rate at each event when the rate is positive; short receives it.
    """
    if side not in (LONG, SHORT):
        raise ValueError(f"side must be '{LONG}' or '{SHORT}', got {side!r}")
    total = 0.0
    sign = 1.0 if side == LONG else -1.0
    for ts in funding_events(entry_ts, exit_ts, cfg.funding_hours):
        total += sign * size * funding_rate_at(symbol, ts, cfg)
    return total


def load_funding_rates(path: str) -> Dict[str, List[Tuple[int, float]]]:
    """Load a per-symbol funding-rate series CSV into a step-function table."""
    table: Dict[str, List[Tuple[int, float]]] = {}
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["timestamp", "symbol", "rate_8h"]:
            raise DataError(f"{path}: expected header timestamp,symbol,rate_8h")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}: line {lineno}: expected 3 columns")
            try:
                ts, rate = int(row[0]), float(row[2])
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
            table.setdefault(row[1], []).append((ts, rate))
    for records in table.values():
        records.sort()
    return table
