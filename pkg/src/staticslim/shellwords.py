"""Word-level tokenizer for shell scripts.

Comments are stripped, quote characters removed, and words split on
whitespace and command separators. Words containing parameter expansion or
command substitution become unresolved markers instead of tokens, since
expanding them statically would fabricate values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

_SEPARATORS = frozenset(";|&()<>\n")


@dataclass
class ShellTokens:
    tokens: list[tuple[str, int]] = field(default_factory=list)  # (word, line)
    unresolved: list[tuple[str, int]] = field(default_factory=list)


def tokenize_script(text: str) -> ShellTokens:
    out = ShellTokens()
    lines = text.splitlines()

    body_start = 0
    if lines and lines[0].startswith("#!"):
        for word in lines[0][2:].split():
            out.tokens.append((word, 1))
        body_start = 1

    for lineno, line in enumerate(lines[body_start:], start=body_start + 1):
        _tokenize_line(line, lineno, out)
    return out


def _tokenize_line(line: str, lineno: int, out: ShellTokens) -> None:
    word: list[str] = []
    has_expansion = False
    quote: str | None = None
    i = 0
    n = len(line)

    def flush():
        nonlocal word, has_expansion
        text = "".join(word)
        word = []
        expansion = has_expansion
        has_expansion = False
        if not text:
            return
        if expansion:
            out.unresolved.append((text, lineno))
            return
        # Quoted whitespace survives into the word; split it back apart so
        # every token is whitespace-free.
        for part in text.split():
            out.tokens.append((part, lineno))

    while i < n:
        c = line[i]
        if quote == "'":
            # Single quotes are fully literal; $ loses its meaning here.
            if c == "'":
                quote = None
            else:
                word.append(c)
            i += 1
            continue
        if quote == '"':
            if c == '"':
                quote = None
            elif c == "\\" and i + 1 < n:
                word.append(line[i + 1])
                i += 1
            else:
                word.append(c)
                if c in "$`":
                    has_expansion = True
            i += 1
            continue
        if c == "\\" and i + 1 < n:
            word.append(line[i + 1])
            i += 2
            continue
        if c in "'\"":
            quote = c
            i += 1
            continue
        if c == "#" and not word:
            return flush()  # comment to end of line
        if c.isspace() or c in _SEPARATORS:
            flush()
            i += 1
            continue
        if c in "$`":
            has_expansion = True
        word.append(c)
        i += 1
    flush()
