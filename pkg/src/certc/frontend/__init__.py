"""Language frontend: lexer, parser, types, checker, printer."""

from .lexer import LexError, tokenize
from .parser import ParseError, parse_expression, parse_program
from .printer import print_expr, print_program
from .typecheck import CheckedProgram, TypeError_, check_program
from . import syntax, types

__all__ = [
    "LexError", "tokenize", "ParseError", "parse_expression", "parse_program",
    "print_expr", "print_program", "CheckedProgram", "TypeError_",
    "check_program", "syntax", "types",
]
