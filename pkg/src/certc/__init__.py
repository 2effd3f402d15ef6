"""certc: a compiler and runtime for neuron-level certifier specifications.

The package takes abstract-interpretation certifiers written in a small
declarative language, checks and shapes them into a tensor IR, optimizes the
IR, and executes it over whole layers on a block-structured tensor backend.
A dense per-neuron interpreter of the same language serves as the reference
oracle.
"""

__version__ = "0.1.0"
