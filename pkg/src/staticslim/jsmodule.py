"""Lightweight JavaScript module scanner for command-string extraction.

Tokenizes a source file, records variable declarations, assignments,
function declarations, and call sites, then resolves string-valued
expressions to constant fragments by walking definition chains. The scope is
deliberately narrow: intra-module, flow-insensitive, with one level of
call-site argument binding for function parameters. Anything beyond that
resolves to a dynamic marker instead of a fabricated value.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

MAX_VARIANTS = 16
MAX_DEPTH = 12

_KEYWORDS = frozenset(
    """await break case catch class const continue debugger default delete do
    else export extends finally for function if import in instanceof let new
    of return static super switch this throw try typeof var void while with
    yield""".split()
)

_PUNCT3 = ("===", "!==", "**=", "...", ">>>", "&&=", "||=", "??=")
_PUNCT2 = (
    "=>", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "&&", "||",
    "??", "++", "--", "**", "<<", ">>", "&=", "|=", "^=", "?.",
)

_REGEX_ALLOWED_AFTER = frozenset(
    {"(", ",", "=", ":", "[", "!", "&", "|", "?", "{", "}", ";", "+", "-",
     "*", "/", "%", "<", ">", "=>", "==", "!=", "===", "!==", "&&", "||",
     "??", "return", "typeof", "case", "in", "of", "new", "delete", "void",
     "instanceof", "do", "else", "yield", "await"}
)


@dataclass
class Token:
    kind: str  # str | tpl | num | ident | punct | regex
    value: object
    line: int


def tokenize(source: str) -> list[Token]:
    """Lex a JavaScript module; unknown characters are skipped."""
    toks: list[Token] = []
    i = 0
    n = len(source)
    line = 1

    def prev_significant() -> Token | None:
        return toks[-1] if toks else None

    while i < n:
        c = source[i]
        if c == "\n":
            line += 1
            i += 1
            continue
        if c in " \t\r\f\v":
            i += 1
            continue
        if c == "/" and i + 1 < n and source[i + 1] == "/":
            j = source.find("\n", i)
            i = n if j < 0 else j
            continue
        if c == "/" and i + 1 < n and source[i + 1] == "*":
            j = source.find("*/", i + 2)
            if j < 0:
                break
            line += source.count("\n", i, j)
            i = j + 2
            continue
        if c in "'\"":
            value, i, nl = _scan_string(source, i, c)
            toks.append(Token("str", value, line))
            line += nl
            continue
        if c == "`":
            parts, i, nl = _scan_template(source, i)
            toks.append(Token("tpl", parts, line))
            line += nl
            continue
        if c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] in "._xXoObBeE+-"):
                if source[j] in "+-" and source[j - 1] not in "eE":
                    break
                j += 1
            toks.append(Token("num", source[i:j], line))
            i = j
            continue
        if c.isalpha() or c in "_$":
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] in "_$"):
                j += 1
            toks.append(Token("ident", source[i:j], line))
            i = j
            continue
        if c == "/":
            prev = prev_significant()
            if _regex_can_start(prev):
                end, nl = _scan_regex(source, i)
                if end is not None:
                    toks.append(Token("regex", source[i:end], line))
                    line += nl
                    i = end
                    continue
            # fall through: division operator
        matched = None
        for group in (_PUNCT3, _PUNCT2):
            for p in group:
                if source.startswith(p, i):
                    matched = p
                    break
            if matched:
                break
        if matched:
            toks.append(Token("punct", matched, line))
            i += len(matched)
            continue
        toks.append(Token("punct", c, line))
        i += 1
    return toks


def _regex_can_start(prev: Token | None) -> bool:
    if prev is None:
        return True
    if prev.kind == "punct":
        return prev.value in _REGEX_ALLOWED_AFTER
    if prev.kind == "ident":
        return prev.value in _REGEX_ALLOWED_AFTER
    return False


def _scan_string(source: str, i: int, quote: str) -> tuple[str, int, int]:
    out = []
    newlines = 0
    i += 1
    n = len(source)
    while i < n:
        c = source[i]
        if c == "\\" and i + 1 < n:
            esc = source[i + 1]
            out.append({"n": "\n", "t": "\t", "r": "\r", "0": "\0"}.get(esc, esc))
            if esc == "\n":
                newlines += 1
            i += 2
            continue
        if c == quote:
            return "".join(out), i + 1, newlines
        if c == "\n":
            break  # unterminated; be tolerant
        out.append(c)
        i += 1
    return "".join(out), i, newlines


def _scan_template(source: str, i: int) -> tuple[list, int, int]:
    """Scan a template literal into [('s', text) | ('e', expr_source)] parts."""
    parts: list[tuple[str, str]] = []
    buf: list[str] = []
    newlines = 0
    i += 1
    n = len(source)
    while i < n:
        c = source[i]
        if c == "\\" and i + 1 < n:
            esc = source[i + 1]
            buf.append({"n": "\n", "t": "\t", "r": "\r"}.get(esc, esc))
            i += 2
            continue
        if c == "`":
            if buf:
                parts.append(("s", "".join(buf)))
            return parts, i + 1, newlines
        if c == "$" and i + 1 < n and source[i + 1] == "{":
            if buf:
                parts.append(("s", "".join(buf)))
                buf = []
            depth = 1
            j = i + 2
            start = j
            while j < n and depth:
                if source[j] == "{":
                    depth += 1
                elif source[j] == "}":
                    depth -= 1
                elif source[j] == "`":
                    _, j2, nl2 = _scan_template(source, j)
                    newlines += nl2
                    j = j2 - 1
                elif source[j] in "'\"":
                    _, j2, nl2 = _scan_string(source, j, source[j])
                    newlines += nl2
                    j = j2 - 1
                elif source[j] == "\n":
                    newlines += 1
                j += 1
            parts.append(("e", source[start : j - 1]))
            i = j
            continue
        if c == "\n":
            newlines += 1
        buf.append(c)
        i += 1
    if buf:
        parts.append(("s", "".join(buf)))
    return parts, i, newlines


def _scan_regex(source: str, i: int) -> tuple[int | None, int]:
    j = i + 1
    n = len(source)
    in_class = False
    newlines = 0
    while j < n:
        c = source[j]
        if c == "\\":
            j += 2
            continue
        if c == "\n":
            return None, 0  # not a regex after all
        if c == "[":
            in_class = True
        elif c == "]":
            in_class = False
        elif c == "/" and not in_class:
            j += 1
            while j < n and (source[j].isalpha()):
                j += 1
            return j, newlines
        j += 1
    return None, 0


# --- expression model -------------------------------------------------------


class Expr:
    pass


@dataclass
class Str(Expr):
    value: str


@dataclass
class Tpl(Expr):
    parts: list  # ('s', text) | ('e', Expr)


@dataclass
class Name(Expr):
    name: str
    line: int


@dataclass
class Concat(Expr):
    left: Expr
    right: Expr


@dataclass
class Alt(Expr):
    options: list


@dataclass
class CallEx(Expr):
    callee: str | None  # last dotted segment
    args: list
    line: int


@dataclass
class Dynamic(Expr):
    pass


_STOP_PUNCT = frozenset({")", "]", "}", ",", ";", ":"})


class _ExprParser:
    """Recursive-descent parser for the expression subset we resolve."""

    def __init__(self, toks: list[Token], pos: int):
        self.toks = toks
        self.pos = pos
        self.calls: list[CallEx] = []

    def peek(self) -> Token | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def parse(self) -> Expr:
        left = self.parse_unary()
        while True:
            t = self.peek()
            if t is None or t.kind != "punct":
                break
            if t.value == "+":
                self.pos += 1
                right = self.parse_unary()
                left = Concat(left, right)
            elif t.value in ("||", "&&", "??"):
                self.pos += 1
                right = self.parse_unary()
                left = Alt([left, right])
            elif t.value == "?":
                self.pos += 1
                a = self.parse()
                t2 = self.peek()
                if t2 is not None and t2.kind == "punct" and t2.value == ":":
                    self.pos += 1
                    b = self.parse()
                    left = Alt([a, b])
                else:
                    left = Dynamic()
            elif t.value in ("===", "!==", "==", "!=", "<", ">", "<=", ">=",
                             "-", "*", "/", "%", "**", "&", "|", "^", "<<",
                             ">>", ">>>", "instanceof", "in"):
                self.pos += 1
                self.parse_unary()
                left = Dynamic()
            else:
                break
        return left

    def parse_unary(self) -> Expr:
        t = self.peek()
        if t is None:
            return Dynamic()
        if t.kind == "punct" and t.value in ("!", "-", "+", "~", "++", "--"):
            self.pos += 1
            self.parse_unary()
            return Dynamic()
        if t.kind == "ident" and t.value in ("typeof", "void", "delete", "new", "await"):
            self.pos += 1
            inner = self.parse_unary()
            return inner if t.value == "await" else Dynamic()
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        expr, last_segment = self.parse_primary()
        while True:
            t = self.peek()
            if t is None or t.kind != "punct":
                break
            if t.value == ".":
                nxt = self.toks[self.pos + 1] if self.pos + 1 < len(self.toks) else None
                if nxt is not None and nxt.kind == "ident":
                    last_segment = nxt.value
                    expr = Dynamic()  # member reads are not resolved
                    self.pos += 2
                    continue
                self.pos += 1
                continue
            if t.value == "(":
                args = self.parse_args()
                call = CallEx(callee=last_segment, args=args, line=t.line)
                self.calls.append(call)
                expr = call
                last_segment = None
                continue
            if t.value == "[":
                self.skip_balanced("[", "]")
                expr = Dynamic()
                last_segment = None
                continue
            break
        return expr

    def parse_primary(self) -> tuple[Expr, str | None]:
        t = self.peek()
        if t is None:
            return Dynamic(), None
        if t.kind == "str":
            self.pos += 1
            return Str(t.value), None
        if t.kind == "num":
            self.pos += 1
            return Str(str(t.value)), None
        if t.kind == "tpl":
            self.pos += 1
            parts = []
            for kind, payload in t.value:
                if kind == "s":
                    parts.append(("s", payload))
                else:
                    sub = _ExprParser(tokenize(payload), 0)
                    parts.append(("e", sub.parse()))
                    self.calls.extend(sub.calls)
            return Tpl(parts), None
        if t.kind == "regex":
            self.pos += 1
            return Dynamic(), None
        if t.kind == "ident":
            if t.value == "function":
                self.skip_function_literal()
                return Dynamic(), None
            if t.value in _KEYWORDS and t.value not in ("this",):
                self.pos += 1
                return Dynamic(), None
            self.pos += 1
            if self.is_arrow_ahead():
                self.skip_arrow_body()
                return Dynamic(), None
            return Name(t.value, t.line), t.value
        if t.kind == "punct":
            if t.value == "(":
                if self.is_arrow_params():
                    self.skip_balanced("(", ")")
                    self.skip_arrow_body()
                    return Dynamic(), None
                self.pos += 1
                inner = self.parse()
                t2 = self.peek()
                if t2 is not None and t2.kind == "punct" and t2.value == ")":
                    self.pos += 1
                return inner, None
            if t.value == "[":
                self.skip_balanced("[", "]")
                return Dynamic(), None
            if t.value == "{":
                self.skip_balanced("{", "}")
                return Dynamic(), None
        self.pos += 1
        return Dynamic(), None

    def parse_args(self) -> list:
        # caller sits on '('
        self.pos += 1
        args = []
        t = self.peek()
        if t is not None and t.kind == "punct" and t.value == ")":
            self.pos += 1
            return args
        while True:
            args.append(self.parse())
            t = self.peek()
            if t is None:
                break
            if t.kind == "punct" and t.value == ",":
                self.pos += 1
                continue
            if t.kind == "punct" and t.value == ")":
                self.pos += 1
                break
            self.pos += 1  # resync on unexpected token
            if self.pos >= len(self.toks):
                break
        return args

    def is_arrow_params(self) -> bool:
        depth = 0
        j = self.pos
        while j < len(self.toks):
            t = self.toks[j]
            if t.kind == "punct" and t.value == "(":
                depth += 1
            elif t.kind == "punct" and t.value == ")":
                depth -= 1
                if depth == 0:
                    nxt = self.toks[j + 1] if j + 1 < len(self.toks) else None
                    return nxt is not None and nxt.kind == "punct" and nxt.value == "=>"
            j += 1
        return False

    def is_arrow_ahead(self) -> bool:
        t = self.peek()
        return t is not None and t.kind == "punct" and t.value == "=>"

    def skip_arrow_body(self) -> None:
        t = self.peek()
        if t is not None and t.kind == "punct" and t.value == "=>":
            self.pos += 1
        t = self.peek()
        if t is not None and t.kind == "punct" and t.value == "{":
            self.skip_balanced("{", "}")
        else:
            self.parse()  # concise body

    def skip_function_literal(self) -> None:
        # sits on 'function'
        self.pos += 1
        t = self.peek()
        if t is not None and t.kind == "ident":
            self.pos += 1
        self.skip_balanced("(", ")")
        self.skip_balanced("{", "}")

    def skip_balanced(self, open_p: str, close_p: str) -> None:
        t = self.peek()
        if t is None or t.kind != "punct" or t.value != open_p:
            return
        depth = 0
        while self.pos < len(self.toks):
            t = self.toks[self.pos]
            self.pos += 1
            if t.kind == "punct" and t.value == open_p:
                depth += 1
            elif t.kind == "punct" and t.value == close_p:
                depth -= 1
                if depth == 0:
                    return


# --- module index ------------------------------------------------------------


@dataclass
class Definition:
    name: str
    expr: Expr
    line: int
    kind: str  # "decl" | "assign"
    op: str = "="


@dataclass
class FuncInfo:
    name: str
    params: list[str]
    body: tuple[int, int]  # token index range
    line: int


@dataclass
class CallSite:
    callee: str
    args: list
    line: int
    token_index: int


@dataclass
class ModuleIndex:
    path: str
    defs: dict[str, list[Definition]] = field(default_factory=dict)
    functions: dict[str, FuncInfo] = field(default_factory=dict)
    calls: list[CallSite] = field(default_factory=list)

    def enclosing_function(self, token_index: int) -> FuncInfo | None:
        best = None
        for fn in self.functions.values():
            lo, hi = fn.body
            if lo <= token_index <= hi and (
                best is None or (lo, -hi) > (best.body[0], -best.body[1])
            ):
                best = fn
        return best


def _match_balanced(toks: list[Token], pos: int, open_p: str, close_p: str) -> int:
    """Index just past the matching close punct, starting at ``pos`` on open."""
    depth = 0
    j = pos
    while j < len(toks):
        t = toks[j]
        if t.kind == "punct" and t.value == open_p:
            depth += 1
        elif t.kind == "punct" and t.value == close_p:
            depth -= 1
            if depth == 0:
                return j + 1
        j += 1
    return len(toks)


def _param_names(toks: list[Token], start: int, end: int) -> list[str]:
    params = []
    depth = 0
    for j in range(start, end):
        t = toks[j]
        if t.kind == "punct" and t.value in "([{":
            depth += 1
        elif t.kind == "punct" and t.value in ")]}":
            depth -= 1
        elif depth == 1 and t.kind == "ident":
            prev = toks[j - 1]
            if prev.kind == "punct" and prev.value in ("(", ","):
                params.append(t.value)
    return params


def scan_module(path: str, source: str, sink_names: frozenset[str]) -> ModuleIndex:
    """Index a module: definitions, function declarations, and call sites."""
    toks = tokenize(source)
    index = ModuleIndex(path=path)

    # Function declarations first so call collection can bind parameters.
    i = 0
    while i < len(toks):
        t = toks[i]
        if t.kind == "ident" and t.value == "function":
            j = i + 1
            name = None
            if j < len(toks) and toks[j].kind == "ident":
                name = toks[j].value
                j += 1
            if j < len(toks) and toks[j].kind == "punct" and toks[j].value == "(":
                params_end = _match_balanced(toks, j, "(", ")")
                params = _param_names(toks, j, params_end)
                if params_end < len(toks) and toks[params_end].value == "{":
                    body_end = _match_balanced(toks, params_end, "{", "}")
                    if name is not None:
                        index.functions[name] = FuncInfo(
                            name=name, params=params, body=(params_end, body_end - 1), line=t.line
                        )
                    i = params_end  # keep scanning inside the body
                    continue
        if (
            t.kind == "ident"
            and t.value in ("const", "let", "var")
            and i + 3 < len(toks)
            and toks[i + 1].kind == "ident"
            and toks[i + 2].kind == "punct"
            and toks[i + 2].value == "="
        ):
            fname = toks[i + 1].value
            k = i + 3
            arrow = _arrow_function_span(toks, k)
            if arrow is not None:
                params, body = arrow
                index.functions[fname] = FuncInfo(
                    name=fname, params=params, body=body, line=toks[i + 1].line
                )
        i += 1

    # Declarations and assignments.
    i = 0
    while i < len(toks):
        t = toks[i]
        if t.kind == "ident" and t.value in ("const", "let", "var"):
            i = _scan_declarators(toks, i + 1, index)
            continue
        if (
            t.kind == "ident"
            and t.value not in _KEYWORDS
            and i + 1 < len(toks)
            and toks[i + 1].kind == "punct"
            and toks[i + 1].value in ("=", "+=")
            and (i == 0 or not _is_member_prefix(toks[i - 1]))
        ):
            op = toks[i + 1].value
            parser = _ExprParser(toks, i + 2)
            expr = parser.parse()
            index.defs.setdefault(t.value, []).append(
                Definition(name=t.value, expr=expr, line=t.line, kind="assign", op=op)
            )
            i = max(parser.pos, i + 2)
            continue
        i += 1

    # Calls to sinks and to declared functions, wherever they appear.
    interesting = sink_names | frozenset(index.functions)
    i = 0
    while i < len(toks):
        t = toks[i]
        if (
            t.kind == "ident"
            and t.value in interesting
            and i + 1 < len(toks)
            and toks[i + 1].kind == "punct"
            and toks[i + 1].value == "("
        ):
            parser = _ExprParser(toks, i + 1)
            args = parser.parse_args()
            index.calls.append(CallSite(callee=t.value, args=args, line=t.line, token_index=i))
        i += 1
    return index


def _is_member_prefix(tok: Token) -> bool:
    return tok.kind == "punct" and tok.value in (".", "?.")


def _arrow_function_span(toks, k):
    """Params and body range when tokens at ``k`` form an arrow/function literal."""
    if k >= len(toks):
        return None
    t = toks[k]
    if t.kind == "ident" and t.value == "function":
        j = k + 1
        if j < len(toks) and toks[j].kind == "ident":
            j += 1
        if j < len(toks) and toks[j].kind == "punct" and toks[j].value == "(":
            pend = _match_balanced(toks, j, "(", ")")
            params = _param_names(toks, j, pend)
            if pend < len(toks) and toks[pend].value == "{":
                bend = _match_balanced(toks, pend, "{", "}")
                return params, (pend, bend - 1)
        return None
    if t.kind == "punct" and t.value == "(":
        pend = _match_balanced(toks, k, "(", ")")
        if pend < len(toks) and toks[pend].kind == "punct" and toks[pend].value == "=>":
            params = _param_names(toks, k, pend)
            return params, _arrow_body_span(toks, pend + 1)
        return None
    if t.kind == "ident" and t.value not in _KEYWORDS:
        if k + 1 < len(toks) and toks[k + 1].kind == "punct" and toks[k + 1].value == "=>":
            return [t.value], _arrow_body_span(toks, k + 2)
    return None


def _arrow_body_span(toks, k):
    if k < len(toks) and toks[k].kind == "punct" and toks[k].value == "{":
        return (k, _match_balanced(toks, k, "{", "}") - 1)
    parser = _ExprParser(toks, k)
    parser.parse()
    return (k, max(parser.pos - 1, k))


def _scan_declarators(toks, i, index: ModuleIndex) -> int:
    """Parse ``name = expr [, name = expr]*`` after a var/let/const keyword."""
    while i < len(toks):
        t = toks[i]
        if t.kind != "ident":
            return i
        name = t.value
        line = t.line
        if i + 1 < len(toks) and toks[i + 1].kind == "punct" and toks[i + 1].value == "=":
            parser = _ExprParser(toks, i + 2)
            expr = parser.parse()
            index.defs.setdefault(name, []).append(
                Definition(name=name, expr=expr, line=line, kind="decl")
            )
            i = parser.pos
        else:
            i += 1
        if i < len(toks) and toks[i].kind == "punct" and toks[i].value == ",":
            i += 1
            continue
        return i
    return i


# --- constant resolution ------------------------------------------------------

CONST = "c"
DYN = "d"


@dataclass
class Resolution:
    """All constant knowledge about one expression."""

    variants: list[tuple]  # each a tuple of (CONST, text) / (DYN,) segments
    used_defs: list[Definition] = field(default_factory=list)
    via_param: bool = False


def resolve_expr(
    expr: Expr,
    index: ModuleIndex,
    enclosing: FuncInfo | None,
    stack: frozenset = frozenset(),
    depth: int = 0,
) -> Resolution:
    if depth > MAX_DEPTH:
        return Resolution(variants=[((DYN,),)])
    if isinstance(expr, Str):
        return Resolution(variants=[((CONST, expr.value),)])
    if isinstance(expr, Tpl):
        res = Resolution(variants=[()])
        for kind, payload in expr.parts:
            if kind == "s":
                part = Resolution(variants=[((CONST, payload),)])
            else:
                part = resolve_expr(payload, index, enclosing, stack, depth + 1)
            res = _product(res, part)
        return res
    if isinstance(expr, Concat):
        left = resolve_expr(expr.left, index, enclosing, stack, depth + 1)
        right = resolve_expr(expr.right, index, enclosing, stack, depth + 1)
        return _product(left, right)
    if isinstance(expr, Alt):
        out = Resolution(variants=[])
        for opt in expr.options:
            sub = resolve_expr(opt, index, enclosing, stack, depth + 1)
            out.variants.extend(sub.variants)
            out.used_defs.extend(sub.used_defs)
            out.via_param = out.via_param or sub.via_param
        return _cap(out)
    if isinstance(expr, Name):
        return _resolve_name(expr.name, index, enclosing, stack, depth)
    return Resolution(variants=[((DYN,),)])


def _resolve_name(name, index, enclosing, stack, depth) -> Resolution:
    key = (enclosing.name if enclosing else None, name)
    if key in stack:
        return Resolution(variants=[((DYN,),)])
    stack = stack | {key}

    if enclosing is not None and name in enclosing.params:
        bindings = _call_site_args(index, enclosing, name)
        if not bindings:
            return Resolution(variants=[((DYN,),)], via_param=True)
        out = Resolution(variants=[], via_param=True)
        for arg_expr, caller in bindings:
            sub = resolve_expr(arg_expr, index, caller, stack, depth + 1)
            out.variants.extend(sub.variants)
            out.used_defs.extend(sub.used_defs)
        return _cap(out)

    defs = index.defs.get(name)
    if not defs:
        return Resolution(variants=[((DYN,),)])
    out = Resolution(variants=[])
    for definition in defs:
        sub = resolve_expr(definition.expr, index, enclosing, stack, depth + 1)
        if definition.op == "+=":
            # Appending to an unknown accumulation point: keep the appended
            # text as a fragment behind a dynamic prefix.
            sub.variants = [((DYN,),) + v for v in sub.variants]
        out.variants.extend(sub.variants)
        out.used_defs.append(definition)
        out.used_defs.extend(sub.used_defs)
        out.via_param = out.via_param or sub.via_param
    return _cap(out)


def _call_site_args(index: ModuleIndex, fn: FuncInfo, param: str):
    """Expressions bound to ``param`` across all recorded calls of ``fn``."""
    try:
        position = fn.params.index(param)
    except ValueError:
        return []
    out = []
    for call in index.calls:
        if call.callee != fn.name or position >= len(call.args):
            continue
        lo, hi = fn.body
        if lo <= call.token_index <= hi:
            continue  # recursive call; the stack guard also covers this
        out.append((call.args[position], index.enclosing_function(call.token_index)))
    return out


def _product(a: Resolution, b: Resolution) -> Resolution:
    variants = []
    for va in a.variants:
        for vb in b.variants:
            variants.append(va + vb)
            if len(variants) >= MAX_VARIANTS:
                break
        if len(variants) >= MAX_VARIANTS:
            break
    return Resolution(
        variants=variants,
        used_defs=a.used_defs + b.used_defs,
        via_param=a.via_param or b.via_param,
    )


def _cap(res: Resolution) -> Resolution:
    if len(res.variants) > MAX_VARIANTS:
        res.variants = res.variants[:MAX_VARIANTS]
    return res


def merge_segments(variant: tuple) -> list[tuple]:
    """Collapse adjacent constant segments; drop empty constants."""
    out: list[tuple] = []
    for seg in variant:
        if seg[0] == CONST:
            if not seg[1]:
                continue
            if out and out[-1][0] == CONST:
                out[-1] = (CONST, out[-1][1] + seg[1])
                continue
            out.append((CONST, seg[1]))
        else:
            if out and out[-1][0] == DYN:
                continue
            out.append((DYN,))
    return out


def constant_fragments(res: Resolution) -> tuple[list[str], bool]:
    """Distinct constant strings carried by a resolution.

    Returns the fragments in first-seen order and whether at least one
    variant resolved fully (no dynamic segment).
    """
    fragments: list[str] = []
    fully = False
    seen = set()
    for variant in res.variants:
        merged = merge_segments(variant)
        if not merged:
            continue
        if all(seg[0] == CONST for seg in merged):
            fully = True
            text = "".join(seg[1] for seg in merged)
            if text and text not in seen:
                seen.add(text)
                fragments.append(text)
        else:
            for seg in merged:
                if seg[0] == CONST and seg[1] and seg[1] not in seen:
                    seen.add(seg[1])
                    fragments.append(seg[1])
    return fragments, fully
