"""Flow driver: runs a compiled certifier over a network layer by layer.

The input layer is initialized from the analysis region: interval fields
get the clipped box, polyhedral fields the identity expression over the
input neuron's own id, and zonotope fields a center plus one fresh noise
term per input scaled by the box radius.  Each subsequent layer executes
the transformer arm matching the layer kind and stores the resulting
whole-layer field values, which later layers read through gathers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..analysis import analyze_program
from ..frontend.typecheck import CheckedProgram
from ..ir import IrProgram
from ..sparse import Diagnostics, SparseTensor, normalize
from .executor import DEFAULT_CHUNK_LIMIT, Executor
from .network import InputSpec, Network
from .values import ExecError, PairVal, Value, identity_coeff


@dataclass
class CompiledRun:
    """Per-layer field values produced by one compiled run."""

    network: Network
    field_names: Tuple[str, ...]
    fields: List[Dict[str, Value]]
    sym_count: int
    diagnostics: Diagnostics

    def field(self, k: int, name: str) -> Value:
        return self.fields[k][name]

    def real_field(self, k: int, name: str) -> np.ndarray:
        v = self.fields[k][name]
        if not isinstance(v, SparseTensor):
            raise ExecError("field %r of layer %d is not scalar" % (name, k))
        return v.to_dense()

    def bounds(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        return self.real_field(k, "l"), self.real_field(k, "u")

    def final_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.bounds(len(self.network.layers) - 1)


def _init_input(prog: IrProgram, net: Network, spec: InputSpec,
                diag: Diagnostics) -> Dict[str, Value]:
    lower, upper = spec.bounds()
    b, n0 = lower.shape
    total = net.num_neurons
    out: Dict[str, Value] = {}
    for name, fty in zip(prog.fields, prog.field_types):
        kind = getattr(fty, "name", str(fty))
        if kind == "PolyExp":
            out[name] = PairVal("PolyExp",
                                normalize(identity_coeff((b, n0), 0, total), diag),
                                SparseTensor.zeros((b, n0)))
        elif kind == "SymExp":
            center = (lower + upper) / 2.0
            radius = (upper - lower) / 2.0
            out[name] = PairVal("SymExp",
                                normalize(identity_coeff((b, n0), 0, n0, scale=radius), diag),
                                normalize(SparseTensor.dense(center), diag))
        elif name == "l":
            out[name] = normalize(SparseTensor.dense(lower), diag)
        elif name == "u":
            out[name] = normalize(SparseTensor.dense(upper), diag)
        else:
            raise ExecError("no initialization rule for input field %r" % name)
    return out


def run_program(prog: IrProgram, network: Network, spec: InputSpec, *,
                diag: Optional[Diagnostics] = None,
                chunk_limit: int = DEFAULT_CHUNK_LIMIT) -> CompiledRun:
    """Execute a compiled certifier on a network over an input region."""
    if spec.points.shape[1] != network.input_size:
        raise ExecError("input has %d values, network expects %d"
                        % (spec.points.shape[1], network.input_size))
    diag = diag if diag is not None else Diagnostics()
    fields: List[Optional[Dict[str, Value]]] = [None] * len(network.layers)
    fields[0] = _init_input(prog, network, spec, diag)
    ex = Executor(network, dict(zip(prog.fields, prog.field_types)), fields,
                  spec.batch, diag, chunk_limit)
    for k, layer in enumerate(network.layers[1:], start=1):
        kind = "relu" if layer.kind == "relu" else "affine"
        body = prog.bodies.get(kind)
        if body is None:
            raise ExecError("transformer %s has no %s arm" % (prog.name, kind))
        vals = ex.run_arm(body, k)
        if len(vals) != len(prog.fields):
            raise ExecError("%s arm yields %d components, shape has %d"
                            % (kind, len(vals), len(prog.fields)))
        fields[k] = dict(zip(prog.fields, vals))
    return CompiledRun(network, prog.fields, fields, ex.sym_count, diag)


def run_checked(checked: CheckedProgram, network: Network, spec: InputSpec,
                **kwargs) -> CompiledRun:
    """Analyze and execute a checked program in one step."""
    return run_program(analyze_program(checked), network, spec, **kwargs)
