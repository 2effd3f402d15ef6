"""Recursive-descent parser for the certifier specification language."""

from __future__ import annotations

from typing import List, Optional, Tuple

from .lexer import Token, tokenize
from .syntax import (Access, Binary, BoolLit, Call, CurrRef, DotCall, Expr,
                     FlowStmt, FuncDef, MapCall, PrevRef, Program, RealLit,
                     ShapeDecl, SymMint, Ternary, Transformer, TraverseCall,
                     TupleExpr, Unary, Var)

CMP_OPS = ("<=", ">=", "==", "!=", "<", ">")


class ParseError(ValueError):
    pass


class Parser:
    def __init__(self, toks: List[Token]):
        self.toks = toks
        self.pos = 0

    # -- token helpers ------------------------------------------------------

    def peek(self) -> Token:
        return self.toks[self.pos]

    def advance(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        t = self.peek()
        if not self.at(kind, text):
            raise ParseError("expected %s at line %d col %d, got %r"
                             % (text or kind, t.line, t.col, t.text))
        return self.advance()

    # -- program ------------------------------------------------------------

    def parse_program(self) -> Program:
        shape: Optional[ShapeDecl] = None
        funcs: List[FuncDef] = []
        transformers: List[Transformer] = []
        flows: List[FlowStmt] = []
        while not self.at("eof"):
            if self.at("kw", "def"):
                if shape is not None:
                    raise ParseError("duplicate shape declaration")
                shape = self.parse_shape()
            elif self.at("kw", "func"):
                funcs.append(self.parse_func())
            elif self.at("kw", "transformer"):
                transformers.append(self.parse_transformer())
            elif self.at("kw", "flow"):
                flows.append(self.parse_flow())
            else:
                t = self.peek()
                raise ParseError("unexpected token %r at line %d" % (t.text, t.line))
        if shape is None:
            raise ParseError("missing shape declaration")
        if not flows:
            raise ParseError("missing flow statement")
        return Program(shape, tuple(funcs), tuple(transformers), tuple(flows))

    def parse_shape(self) -> ShapeDecl:
        self.expect("kw", "def")
        self.expect("type", "Shape")
        self.expect("kw", "as")
        self.expect("(")
        fields = [self.parse_typed_name()]
        while self.at(","):
            self.advance()
            fields.append(self.parse_typed_name())
        self.expect(")")
        self.expect("{")
        self.expect("[")
        annots = [self.parse_expr()]
        while self.at(","):
            self.advance()
            annots.append(self.parse_expr())
        self.expect("]")
        self.expect("}")
        self.expect(";")
        return ShapeDecl(tuple(fields), tuple(annots))

    def parse_typed_name(self) -> Tuple[str, str]:
        ty = self.expect("type").text
        name = self.expect("ident").text
        return (ty, name)

    def parse_func(self) -> FuncDef:
        self.expect("kw", "func")
        name = self.expect("ident").text
        self.expect("(")
        params: List[Tuple[str, str]] = []
        if not self.at(")"):
            params.append(self.parse_typed_name())
            while self.at(","):
                self.advance()
                params.append(self.parse_typed_name())
        self.expect(")")
        self.expect("=")
        body = self.parse_expr()
        self.expect(";")
        return FuncDef(name, tuple(params), body)

    def parse_transformer(self) -> Transformer:
        self.expect("kw", "transformer")
        name = self.expect("ident").text
        self.expect("{")
        arms: List[Tuple[str, Expr]] = []
        while not self.at("}"):
            kind = self.expect("ident").text
            self.expect("->")
            rhs = self.parse_expr()
            self.expect(";")
            arms.append((kind, rhs))
        self.expect("}")
        if self.at(";"):
            self.advance()
        return Transformer(name, tuple(arms))

    def parse_flow(self) -> FlowStmt:
        self.expect("kw", "flow")
        self.expect("(")
        direction = self.expect("kw").text
        if direction not in ("forward", "backward"):
            raise ParseError("flow direction must be forward or backward")
        self.expect(",")
        priority = self.expect("ident").text
        self.expect(",")
        stop = self.expect("ident").text
        self.expect(",")
        transformer = self.expect("ident").text
        self.expect(")")
        self.expect(";")
        return FlowStmt(direction, priority, stop, transformer)

    # -- expressions --------------------------------------------------------

    def parse_expr(self) -> Expr:
        return self.parse_ternary()

    def parse_ternary(self) -> Expr:
        cond = self.parse_or()
        if self.at("?"):
            self.advance()
            then = self.parse_ternary()
            self.expect(":")
            other = self.parse_ternary()
            return Ternary(cond, then, other)
        return cond

    def parse_or(self) -> Expr:
        e = self.parse_and()
        while self.at("kw", "or"):
            self.advance()
            e = Binary("or", e, self.parse_and())
        return e

    def parse_and(self) -> Expr:
        e = self.parse_cmp()
        while self.at("kw", "and"):
            self.advance()
            e = Binary("and", e, self.parse_cmp())
        return e

    def parse_cmp(self) -> Expr:
        e = self.parse_add()
        t = self.peek()
        if t.kind in CMP_OPS:
            self.advance()
            return Binary(t.kind, e, self.parse_add())
        if t.kind == "kw" and t.text == "In":
            self.advance()
            return Binary("In", e, self.parse_add())
        return e

    def parse_add(self) -> Expr:
        e = self.parse_mul()
        while self.peek().kind in ("+", "-"):
            op = self.advance().kind
            e = Binary(op, e, self.parse_mul())
        return e

    def parse_mul(self) -> Expr:
        e = self.parse_unary()
        while self.peek().kind in ("*", "/"):
            op = self.advance().kind
            e = Binary(op, e, self.parse_unary())
        return e

    def parse_unary(self) -> Expr:
        if self.at("-"):
            self.advance()
            return Unary("-", self.parse_unary())
        if self.at("kw", "not"):
            self.advance()
            return Unary("not", self.parse_unary())
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        e = self.parse_primary()
        while True:
            if self.at("["):
                self.advance()
                field = self.expect("ident").text
                self.expect("]")
                e = Access(e, field)
            elif self.at("."):
                self.advance()
                e = self.parse_method(e)
            else:
                return e

    def parse_method(self, base: Expr) -> Expr:
        name = self.expect("ident").text
        if name == "map":
            self.expect("(")
            fn = self.expect("ident").text
            self.expect(")")
            return MapCall(base, fn)
        if name == "dot":
            self.expect("(")
            arg = self.parse_expr()
            self.expect(")")
            return DotCall(base, arg)
        if name == "traverse":
            self.expect("(")
            direction = self.expect("kw").text
            if direction not in ("forward", "backward"):
                raise ParseError("traverse direction must be forward or backward")
            self.expect(",")
            priority = self.expect("ident").text
            self.expect(",")
            stop = self.expect("ident").text
            self.expect(",")
            replace = self.expect("ident").text
            self.expect(")")
            invariant: Optional[Expr] = None
            if self.at("{"):
                self.advance()
                invariant = self.parse_expr()
                self.expect("}")
            return TraverseCall(base, direction, priority, stop, replace, invariant)
        raise ParseError("unknown method %r" % name)

    def parse_primary(self) -> Expr:
        t = self.peek()
        if t.kind == "num":
            self.advance()
            return RealLit(float(t.text))
        if t.kind == "kw" and t.text in ("true", "false"):
            self.advance()
            return BoolLit(t.text == "true")
        if t.kind == "kw" and t.text == "sym":
            self.advance()
            return SymMint()
        if t.kind == "kw" and t.text == "curr":
            self.advance()
            return CurrRef()
        if t.kind == "kw" and t.text == "prev":
            self.advance()
            return PrevRef()
        if t.kind == "ident":
            self.advance()
            if self.at("("):
                self.advance()
                args: List[Expr] = []
                if not self.at(")"):
                    args.append(self.parse_expr())
                    while self.at(","):
                        self.advance()
                        args.append(self.parse_expr())
                self.expect(")")
                return Call(t.text, tuple(args))
            return Var(t.text)
        if t.kind == "(":
            self.advance()
            items = [self.parse_expr()]
            while self.at(","):
                self.advance()
                items.append(self.parse_expr())
            self.expect(")")
            if len(items) == 1:
                return items[0]
            return TupleExpr(tuple(items))
        raise ParseError("unexpected token %r at line %d col %d" % (t.text, t.line, t.col))


def parse_program(src: str) -> Program:
    return Parser(tokenize(src)).parse_program()


def parse_expression(src: str) -> Expr:
    p = Parser(tokenize(src))
    e = p.parse_expr()
    p.expect("eof")
    return e
