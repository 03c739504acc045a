"""Graph-convolutional traffic speed forecasting with soft attention.

The package is organized around five layers: a minimal reverse-mode
tensor tape (:mod:`.tensor`), road-network intake and normalization
(:mod:`.graph`), the dataset pipeline (:mod:`.data`), the forecasting
networks and loss (:mod:`.model`), and training/evaluation with the
comparison and perturbation sweeps (:mod:`.train`, :mod:`.metrics`).
``trafficgcn.cli`` wires everything into a command-line tool.
"""

from .data import (
    FeatureMatrix,
    NoiseSpec,
    WindowedDataset,
    add_noise,
    load_speed_matrix,
    make_windows,
    normalize,
    split_train_test,
    synth_traffic,
)
from .errors import (
    ContractError,
    DomainError,
    ParseError,
    ShapeError,
    TrainingDiverged,
)
from .graph import RoadGraph, load_adjacency, normalize_adjacency
from .metrics import MetricsReport, evaluate
from .model import (
    HiddenStateSequence,
    ModelParams,
    a3tgcn_forward,
    attention,
    gcn_forward,
    graph_conv,
    gru_cell,
    init_params,
    load_params,
    loss,
    save_params,
    tgcn_cell,
    zero_params,
)
from .tensor import GradientTape, Tensor, elementwise, matmul, softmax_vector
from .train import (
    AdamState,
    TrainConfig,
    adam_step,
    baseline_ha,
    compare_models,
    evaluate_model,
    perturb_sweep,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ContractError",
    "DomainError",
    "FeatureMatrix",
    "GradientTape",
    "HiddenStateSequence",
    "MetricsReport",
    "ModelParams",
    "NoiseSpec",
    "ParseError",
    "RoadGraph",
    "ShapeError",
    "Tensor",
    "TrainConfig",
    "TrainingDiverged",
    "WindowedDataset",
    "a3tgcn_forward",
    "adam_step",
    "add_noise",
    "attention",
    "baseline_ha",
    "compare_models",
    "elementwise",
    "evaluate",
    "evaluate_model",
    "gcn_forward",
    "graph_conv",
    "gru_cell",
    "init_params",
    "load_adjacency",
    "load_params",
    "load_speed_matrix",
    "loss",
    "make_windows",
    "matmul",
    "normalize",
    "normalize_adjacency",
    "perturb_sweep",
    "save_params",
    "softmax_vector",
    "split_train_test",
    "synth_traffic",
    "tgcn_cell",
    "train",
    "zero_params",
]
