"""Shape analysis: certifier programs to whole-layer tensor IR."""

from .shape import AnalysisError, Analyzer, analyze_program
