"""Network model, runtime values, IR executor, and flow driver."""

from .driver import CompiledRun, run_checked, run_program
from .executor import DEFAULT_CHUNK_LIMIT, Executor
from .network import (
    InputSpec,
    Layer,
    Network,
    NetworkError,
    conv_matrix,
    conv_output_shape,
    input_from_json,
    load_input,
    load_network,
    network_from_json,
    random_cnn,
    random_fcn,
    save_input,
    save_network,
)
from .robust import margins, summarize, verified, verified_fraction
from .values import ExecError, NeuronsVal, PairVal, WeightVal

__all__ = [
    "CompiledRun", "run_checked", "run_program", "DEFAULT_CHUNK_LIMIT",
    "Executor", "InputSpec", "Layer", "Network", "NetworkError",
    "conv_matrix", "conv_output_shape", "input_from_json", "load_input",
    "load_network", "network_from_json", "random_cnn", "random_fcn", "save_input",
    "save_network", "margins", "summarize", "verified", "verified_fraction",
    "ExecError", "NeuronsVal", "PairVal", "WeightVal",
]
