"""Voltage-overscaled SRAM for small neural accelerators.

Simulates 6T read-disturb faults in weight memories, trains networks that
tolerate the profiled faults, steers the SRAM supply with in-situ canary
bits, and accounts for the resulting energy per cycle.
"""
from .qformat import QFormat, QWord, apply_masks, dequantize, quantize
from .sram import FaultMap, SramBank, SramGeometry, profile, sample_population
from .nn import Mlp, init_mlp
from .mat import TrainConfig, build_mapping, evaluate_deployed, train
from .canary import CanaryConfig, TempSchedule, select_canaries, run_simulation
from .energy import EnergyTable, default_table, find_mep, scenario_eval

__version__ = "0.1.0"

__all__ = [
    "QFormat", "QWord", "quantize", "dequantize", "apply_masks",
    "SramGeometry", "SramBank", "FaultMap", "sample_population", "profile",
    "Mlp", "init_mlp", "TrainConfig", "build_mapping", "train", "evaluate_deployed",
    "CanaryConfig", "TempSchedule", "select_canaries", "run_simulation",
    "EnergyTable", "default_table", "scenario_eval", "find_mep",
]
