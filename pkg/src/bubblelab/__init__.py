"""Bubble detection by classifying price series as true or strict local martingales."""
from .errors import DomainError, ValidationError
from .simkit import (PowerLawParams, PricePath, RegimeChainSpec, RngSpec, simulate_doubling, simulate_ensemble,
                     simulate_path, step_euler)
from .martingale import MartingaleClass, classify_power_exponent, integral_tail_test, labels_from_regimes
from .estimator import EstimatorConfig, HmmSpec, fit_power_window, hmm_smooth, pe_classify, rolling_fit
from .datagen import DatasetSpec, generate_dataset
from .evalkit import ConfusionReport, Corpus, compare_methods, score
from .backtest import MarketPanel, jump_truncate, run_backtest, simulate_market_p

__version__ = "0.1.0"
