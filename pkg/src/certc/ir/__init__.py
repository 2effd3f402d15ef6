"""Tensor IR: nodes, stack metadata, alignment, validation, printing."""

from .align import align, align_many, coerce
from .metadata import (
    IrMetadata,
    MetaElem,
    ShapeError,
    lcm_dims,
    lcm_meta,
    meta_compatible,
    pad_strategy,
    repeat_factors,
)
from .nodes import (
    FlowIr,
    IrAccess,
    IrAddDimension,
    IrAddDimensionConst,
    IrAssignment,
    IrBinary,
    IrClamp,
    IrCombineToPoly,
    IrCombineToSym,
    IrConst,
    IrConstToPoly,
    IrConstToSym,
    IrDot,
    IrExpr,
    IrExtractPolyCoeff,
    IrExtractPolyConst,
    IrExtractSymCoeff,
    IrExtractSymConst,
    IrITE,
    IrInnerProduct,
    IrMapCoeff,
    IrMapNeuron,
    IrMapNoise,
    IrMult,
    IrNeuronToPoly,
    IrNoiseToSym,
    IrProgram,
    IrReduce,
    IrRemoveDimension,
    IrRepeat,
    IrReturn,
    IrSeq,
    IrSkip,
    IrStmt,
    IrSym,
    IrTernary,
    IrUnary,
    IrVar,
    IrWhile,
    expr_children,
    map_expr,
    replace_children,
    seq,
    stmt_children,
    stmt_exprs,
    walk_all_exprs,
    walk_expr,
    walk_stmts,
)
from .printer import dump_program, print_expr, print_stmt
from .symconst import (
    BATCH_SIZE,
    CURR_SIZE,
    ONE,
    POLY_SIZE,
    PREV_SIZE,
    SYM_SIZE,
    Mul,
    Named,
    ShapeVar,
    SymConst,
    dim_mul,
    dim_product,
    fresh_shape_var,
    pick_concrete,
    resolve,
    short,
    sym_eq,
)
from .validator import IrValidationError, validate_body, validate_expr, validate_program
