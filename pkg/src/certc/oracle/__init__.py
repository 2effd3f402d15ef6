"""Per-neuron reference interpreter and cross-check baselines."""

from .baselines import compose_affine_interval, sample_envelope
from .dense import DensePoly, DenseSym, NeuronRef, NoiseRef, as_poly, as_sym
from .interp import Oracle, OracleError, OracleRun, run_oracle

__all__ = [
    "DensePoly", "DenseSym", "NeuronRef", "NoiseRef", "as_poly", "as_sym",
    "Oracle", "OracleError", "OracleRun", "run_oracle",
    "compose_affine_interval", "sample_envelope",
]
