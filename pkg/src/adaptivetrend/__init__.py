"""Deterministic event-driven backtester for crypto trend following.

The pipeline: momentum entries with volatility-scaled trailing stops, a
monthly portfolio rebalance that filters candidates by market cap, reoptimizes
per-asset parameters by grid search on the previous month, admits only assets
clearing a realized-Sharpe threshold, and splits capital asymmetrically
between long and short sleeves. Includes a cost model (taker fees, volume-
dependent slippage, periodic funding), benchmark strategies, performance and
regime analytics, and a block-bootstrap Sharpe significance test.
"""

__version__ = "0.1.0"
