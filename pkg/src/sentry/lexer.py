"""Hand-rolled tokenizer for MiniSol source text."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import MinisolSyntaxError, UnsupportedFeature

KEYWORDS = {
    "contract", "is", "function", "constructor", "event", "emit", "mapping",
    "public", "external", "internal", "private", "payable", "returns",
    "if", "else", "while", "for", "require", "assert", "return", "revert",
    "true", "false", "bool", "address", "msg", "block", "this", "value",
}

# rejected with a pointer at the real language, not silently mis-parsed
FORBIDDEN = {
    "assembly", "library", "interface", "import", "pragma", "modifier",
    "struct", "enum", "using", "delete", "new", "try", "catch", "unchecked",
}

_TWO_CHAR = {"==", "!=", "<=", ">=", "&&", "||", "+=", "-=", "*=", "=>"}
_ONE_CHAR = set("{}()[];,.=<>+-*/%!:")


@dataclass(frozen=True)
class Token:
    kind: str  # ident, number, string, keyword, type, op, eof
    text: str
    value: int | None
    line: int
    column: int


def _int_type_token(word: str) -> bool:
    for prefix in ("uint", "int"):
        if word == prefix:
            return True
        if word.startswith(prefix) and word[len(prefix):].isdigit():
            return int(word[len(prefix):]) in (8, 16, 32, 64, 128, 256)
    return False


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if text.startswith("/*", i):
            end = text.find("*/", i + 2)
            if end < 0:
                raise MinisolSyntaxError("unterminated comment", line, col)
            skipped = text[i:end + 2]
            newlines = skipped.count("\n")
            if newlines:
                line += newlines
                col = len(skipped) - skipped.rfind("\n")
            else:
                col += len(skipped)
            i = end + 2
            continue
        if ch == '"':
            j = i + 1
            while j < n and text[j] not in '"\n':
                j += 1
            if j >= n or text[j] != '"':
                raise MinisolSyntaxError("unterminated string literal", line, col)
            tokens.append(Token("string", text[i + 1:j], None, line, col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit():
            j = i
            if text.startswith("0x", i) or text.startswith("0X", i):
                j = i + 2
                while j < n and (text[j].isdigit() or text[j].lower() in "abcdef"):
                    j += 1
                if j == i + 2:
                    raise MinisolSyntaxError("malformed hex literal", line, col)
                value = int(text[i:j], 16)
            else:
                while j < n and text[j].isdigit():
                    j += 1
                value = int(text[i:j])
            tokens.append(Token("number", text[i:j], value, line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            if word in FORBIDDEN:
                raise UnsupportedFeature(f"'{word}' is outside the MiniSol subset", line, col)
            if _int_type_token(word):
                kind = "type"
            elif word in KEYWORDS:
                kind = "keyword"
            else:
                kind = "ident"
            tokens.append(Token(kind, word, None, line, col))
            col += j - i
            i = j
            continue
        if text[i:i + 2] in _TWO_CHAR:
            tokens.append(Token("op", text[i:i + 2], None, line, col))
            i += 2
            col += 2
            continue
        if ch in _ONE_CHAR:
            tokens.append(Token("op", ch, None, line, col))
            i += 1
            col += 1
            continue
        raise MinisolSyntaxError(f"unexpected character {ch!r}", line, col)
    tokens.append(Token("eof", "", None, line, col))
    return tokens
