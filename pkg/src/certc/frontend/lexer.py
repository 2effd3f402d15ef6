"""Tokenizer for the certifier specification language."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, List

KEYWORDS = {
    "def", "as", "func", "transformer", "flow", "true", "false",
    "and", "or", "not", "sym", "curr", "prev", "forward", "backward", "In",
}

TYPE_WORDS = {"Float", "Int", "Bool", "Neuron", "Sym", "PolyExp", "SymExp", "Shape"}

SYMBOLS = [
    "->", "<=", ">=", "==", "!=",
    "(", ")", "{", "}", "[", "]", ",", ";", "?", ":", ".",
    "+", "-", "*", "/", "<", ">", "=",
]


@dataclass(frozen=True)
class Token:
    kind: str  # 'num' | 'ident' | 'kw' | 'type' | symbol text | 'eof'
    text: str
    line: int
    col: int

    def __repr__(self):
        return "Token(%s, %r, %d:%d)" % (self.kind, self.text, self.line, self.col)


class LexError(ValueError):
    pass


def tokenize(src: str) -> List[Token]:
    toks: List[Token] = []
    i = 0
    line, col = 1, 1
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if src.startswith("//", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        if src.startswith("/*", i):
            j = src.find("*/", i + 2)
            if j < 0:
                raise LexError("unterminated comment at line %d" % line)
            for ch in src[i:j + 2]:
                if ch == "\n":
                    line += 1
                    col = 1
                else:
                    col += 1
            i = j + 2
            continue
        if c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (src[j].isdigit() or (src[j] == "." and not seen_dot
                                                  and j + 1 < n and src[j + 1].isdigit())):
                if src[j] == ".":
                    seen_dot = True
                j += 1
            toks.append(Token("num", src[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            word = src[i:j]
            if word in KEYWORDS:
                kind = "kw"
            elif word in TYPE_WORDS:
                kind = "type"
            else:
                kind = "ident"
            toks.append(Token(kind, word, line, col))
            col += j - i
            i = j
            continue
        for sym in SYMBOLS:
            if src.startswith(sym, i):
                toks.append(Token(sym, sym, line, col))
                i += len(sym)
                col += len(sym)
                break
        else:
            raise LexError("unexpected character %r at line %d col %d" % (c, line, col))
    toks.append(Token("eof", "", line, col))
    return toks
