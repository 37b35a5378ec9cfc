"""Desk-scale simulator for one-round federated distillation.

Protocols: confidence-weighted distillation under statistical heterogeneity
(``dlsh``), heterogeneous label heads with mapping/masking (``dlmh``), the
incentive step returning global knowledge to clients (``idlmh``), and a FedAvg
baseline (``fedavg``). ``commcost`` prices each protocol in scalars sent.
"""

from .config import ExperimentConfig, load_config, parse_config, serialize_config
from .harness import run, run_protocol

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "load_config", "parse_config", "serialize_config", "run", "run_protocol"]
