"""Naive versus memory-adaptive training for the two-link arm benchmark at
0.50 V, where about 28% of weight-memory bit-cells fail. Takes roughly
20 seconds.

    python3 demos/adaptive_training.py
"""
from voltscale import experiments
from voltscale.config import ExperimentConfig

cfg = ExperimentConfig.load(None, {"benchmark": "inversek2j", "seed": 1})
prep = experiments.prepare(cfg)
print(f"float-trained network, deployed at nominal voltage: MSE {prep.nominal_error:.5f}")

res = experiments.run_point(cfg, prep, 0.50, keep_model=True)
print(f"at 0.50 V, {100 * res.fault_rate:.1f}% of cells fail")
print(f"  naive deployment:    MSE {res.naive_error:.5f}")
print(f"  adaptive retraining: MSE {res.adaptive_error:.5f}")
print("\nadaptive training history (epoch, train, test):")
for row in res.history.rows[::5]:
    print(f"  {row['epoch']:3d}  {row['train_error']:.5f}  {row['test_error']:.5f}")
