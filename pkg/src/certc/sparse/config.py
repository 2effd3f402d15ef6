"""Execution-wide knobs and diagnostics for the block tensor backend."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Diagnostics:
    """Counters the backend updates as it runs.

    densify_fallbacks counts every time an operation gave up on block
    structure and materialized operands densely.  div_by_zero counts zero
    divisors encountered (IEEE semantics are kept; this is bookkeeping).
    peak_blocks tracks the largest number of live blocks seen in any one
    tensor, a cheap proxy for representation growth.
    """

    densify_fallbacks: int = 0
    div_by_zero: int = 0
    peak_blocks: int = 0
    block_variant_counts: dict[str, int] = field(default_factory=dict)

    def note_tensor(self, tensor) -> None:
        n = len(tensor.blocks)
        if n > self.peak_blocks:
            self.peak_blocks = n
        for _, blk in tensor.blocks:
            name = type(blk).__name__
            self.block_variant_counts[name] = self.block_variant_counts.get(name, 0) + 1

    def merge(self, other: "Diagnostics") -> None:
        self.densify_fallbacks += other.densify_fallbacks
        self.div_by_zero += other.div_by_zero
        self.peak_blocks = max(self.peak_blocks, other.peak_blocks)
        for k, v in other.block_variant_counts.items():
            self.block_variant_counts[k] = self.block_variant_counts.get(k, 0) + v


# Shared default sink so library calls without an explicit Diagnostics still count.
GLOBAL_DIAGNOSTICS = Diagnostics()

# When True, every constructed tensor is materialized as a single dense block
# and no structured shortcut fires.  This is the backend half of the ablation
# switches (the CLI's --no-sparse).
_DENSE_MODE = False


def dense_mode_enabled() -> bool:
    return _DENSE_MODE


def set_dense_mode(on: bool) -> None:
    global _DENSE_MODE
    _DENSE_MODE = bool(on)


class dense_mode:
    """Context manager used by tests and the CLI to force dense execution."""

    def __init__(self, on: bool = True):
        self.on = on
        self.saved = None

    def __enter__(self):
        global _DENSE_MODE
        self.saved = _DENSE_MODE
        _DENSE_MODE = self.on
        return self

    def __exit__(self, *exc):
        global _DENSE_MODE
        _DENSE_MODE = self.saved
        return False
