from qfe.nn.network import PRESETS, Network, NetworkSpec, build_network, cnn3d_spec, lc2d_spec, param_count
from qfe.nn.training import SgdConfig, TrainingReport, gradient_check, train_sgd

__all__ = [
    "PRESETS",
    "Network",
    "NetworkSpec",
    "SgdConfig",
    "TrainingReport",
    "build_network",
    "cnn3d_spec",
    "gradient_check",
    "lc2d_spec",
    "param_count",
    "train_sgd",
]
