"""Train a small network, compare it with the windowed estimator, then trade the labels.

Takes under a minute on one core. Run with ``python3 demos/detect_and_trade.py``.
"""
import numpy as np

from bubblelab import (Corpus, DatasetSpec, EstimatorConfig, MarketPanel, PowerLawParams, RegimeChainSpec,
                       RngSpec, compare_methods, generate_dataset, run_backtest, simulate_market_p)
from bubblelab.nnet import FeatureStats, TrainConfig, dataset_from_paths, train
from bubblelab.simkit import steps_for

n = steps_for(0.5)
train_spec = DatasetSpec(8, n, rng=RngSpec(1), s0=50.0)
test_spec = DatasetSpec(6, n, rng=RngSpec(2), s0=50.0)

pairs = generate_dataset(train_spec)
stats = FeatureStats.fit([p.prices for p, _ in pairs])
result = train(dataset_from_paths(pairs, stats), TrainConfig(epochs=4, hidden_dim=8, rng=RngSpec(3)), stats=stats,
               metadata={"train_dataset": train_spec.to_dict()})
print("training loss by epoch:", np.round([e["loss"] for e in result.history], 3))

cmp = compare_methods(Corpus(generate_dataset(test_spec), test_spec), result.model, EstimatorConfig())
print(f"network {cmp.network.detection_pct:.1f}%  estimator {cmp.estimator.detection_pct:.1f}%")
print("seconds:", {k: round(v, 2) for k, v in cmp.timings.items()})

# Short the assets that are in a bubble, hedge with the index; labels here are the true regimes.
calm, hot = PowerLawParams(0.3, 0.9), PowerLawParams(2.0, 2.0)
chain = RegimeChainSpec.homogeneous([calm, hot], [[0.9996, 0.0004], [0.0004, 0.9996]])
m = simulate_market_p(10, 0.0, chain, 0.0, 1.0, 1e-4, RngSpec(4))
panel = MarketPanel(m.times, m.assets, np.ones(len(m)), m.truth)
ledger = run_backtest(panel, panel.truth, rebalance_stride=833)
print(f"final P&L {ledger.final_pnl:+.2f} over {len(ledger.rebalances)} rebalances")
for e in ledger.events[:5]:
    print("  ", e)
