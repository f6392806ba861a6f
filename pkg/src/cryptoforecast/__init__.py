"""Cryptocoin price forecasting from correlated feature coins.

Pipeline: pull OHLC history, split chronologically, optionally inspect
correlations, pretrain a gradient-boosted or gated recurrent regressor,
then forecast the target coin from Holt-extrapolated feature prices.
"""

__version__ = "0.1.0"
