"""Regex compilation to a byte-level DFA.

Supports the subset needed for output schemas and stays compatible with
Python's `re` so any pattern built here can be checked against a reference
engine: literals, escapes, character classes with ranges and negation,
grouping, alternation, and the * + ? {m} {m,} {m,n} quantifiers. Bounded
repetition is unrolled, which keeps length constraints inside the DFA.

The DFA alphabet is partitioned into byte-equivalence classes, and dead
states (those that cannot reach an accepting state) are pruned so that a
live transition always means the match can still complete.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import RegexParseError

ALL_BYTES = (1 << 256) - 1
_DOT_MASK = ALL_BYTES & ~(1 << 0x0A)  # any byte except newline
_DIGITS = 0
for _b in b"0123456789":
    _DIGITS |= 1 << _b
_WORD = _DIGITS | (1 << ord("_"))
for _b in b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ":
    _WORD |= 1 << _b
_SPACE = 0
for _b in b" \t\n\r\f\v":
    _SPACE |= 1 << _b

_ESCAPE_LITERALS = {
    "n": ord("\n"),
    "r": ord("\r"),
    "t": ord("\t"),
    "f": ord("\f"),
    "v": ord("\v"),
    "0": 0,
}


# --- AST ---


class Node:
    pass


@dataclass
class Char(Node):
    mask: int  # 256-bit membership mask


@dataclass
class Concat(Node):
    parts: list


@dataclass
class Alt(Node):
    options: list


@dataclass
class Repeat(Node):
    child: Node
    lo: int
    hi: int | None  # None = unbounded


@dataclass
class Epsilon(Node):
    pass


class _Parser:
    def __init__(self, pattern: str):
        self.pat = pattern
        self.pos = 0

    def error(self, msg: str) -> RegexParseError:
        return RegexParseError(f"{msg} at position {self.pos} in {self.pat!r}")

    def peek(self) -> str | None:
        return self.pat[self.pos] if self.pos < len(self.pat) else None

    def take(self) -> str:
        ch = self.pat[self.pos]
        self.pos += 1
        return ch

    def parse(self) -> Node:
        node = self.alternation()
        if self.pos != len(self.pat):
            raise self.error(f"unexpected {self.peek()!r}")
        return node

    def alternation(self) -> Node:
        options = [self.concat()]
        while self.peek() == "|":
            self.take()
            options.append(self.concat())
        return options[0] if len(options) == 1 else Alt(options)

    def concat(self) -> Node:
        parts = []
        while self.peek() not in (None, "|", ")"):
            parts.append(self.repeatable())
        if not parts:
            return Epsilon()
        return parts[0] if len(parts) == 1 else Concat(parts)

    def repeatable(self) -> Node:
        node = self.atom()
        while True:
            ch = self.peek()
            if ch == "*":
                self.take()
                node = Repeat(node, 0, None)
            elif ch == "+":
                self.take()
                node = Repeat(node, 1, None)
            elif ch == "?":
                self.take()
                node = Repeat(node, 0, 1)
            elif ch == "{":
                bounds = self._try_bounds()
                if bounds is None:
                    break
                node = Repeat(node, bounds[0], bounds[1])
            else:
                break
        return node

    def _try_bounds(self) -> tuple[int, int | None] | None:
        # "{" not followed by a valid quantifier is a literal, like re.
        start = self.pos
        self.take()  # "{"
        digits = ""
        while self.peek() and self.peek().isdigit():
            digits += self.take()
        if not digits:
            self.pos = start
            return None
        lo = int(digits)
        hi: int | None = lo
        if self.peek() == ",":
            self.take()
            digits = ""
            while self.peek() and self.peek().isdigit():
                digits += self.take()
            hi = int(digits) if digits else None
        if self.peek() != "}":
            self.pos = start
            return None
        self.take()
        if hi is not None and hi < lo:
            raise self.error(f"bad repeat bounds {{{lo},{hi}}}")
        return lo, hi

    def atom(self) -> Node:
        ch = self.peek()
        if ch is None:
            raise self.error("unexpected end of pattern")
        if ch == "(":
            self.take()
            if self.peek() == "?":  # allow non-capturing (?:...)
                self.take()
                if self.peek() != ":":
                    raise self.error("only (?:...) groups are supported")
                self.take()
            node = self.alternation()
            if self.peek() != ")":
                raise self.error("unbalanced parenthesis")
            self.take()
            return node
        if ch == "[":
            return Char(self.char_class())
        if ch == ".":
            self.take()
            return Char(_DOT_MASK)
        if ch == "\\":
            return Char(self.escape())
        if ch in ")|*+?":
            raise self.error(f"unexpected {ch!r}")
        self.take()
        byte = ord(ch)
        if byte > 0xFF:
            raise self.error(f"non-byte character {ch!r}")
        return Char(1 << byte)

    def escape(self) -> int:
        self.take()  # backslash
        ch = self.peek()
        if ch is None:
            raise self.error("trailing backslash")
        self.take()
        if ch == "d":
            return _DIGITS
        if ch == "D":
            return ALL_BYTES & ~_DIGITS
        if ch == "w":
            return _WORD
        if ch == "W":
            return ALL_BYTES & ~_WORD
        if ch == "s":
            return _SPACE
        if ch == "S":
            return ALL_BYTES & ~_SPACE
        if ch == "x":
            hex_digits = ""
            for _ in range(2):
                nxt = self.peek()
                if nxt is None or nxt not in "0123456789abcdefABCDEF":
                    raise self.error("bad \\x escape")
                hex_digits += self.take()
            return 1 << int(hex_digits, 16)
        if ch in _ESCAPE_LITERALS:
            return 1 << _ESCAPE_LITERALS[ch]
        byte = ord(ch)
        if byte > 0xFF:
            raise self.error(f"non-byte escape {ch!r}")
        return 1 << byte

    def char_class(self) -> int:
        self.take()  # "["
        negate = False
        if self.peek() == "^":
            negate = True
            self.take()
        mask = 0
        first = True
        while True:
            ch = self.peek()
            if ch is None:
                raise self.error("unterminated character class")
            if ch == "]" and not first:
                self.take()
                break
            lo = self._class_member()
            if self.peek() == "-" and self.pos + 1 < len(self.pat) and self.pat[self.pos + 1] != "]":
                self.take()
                hi_mask = self._class_member()
                hi = hi_mask.bit_length() - 1
                if bin(hi_mask).count("1") != 1 or bin(lo).count("1") != 1:
                    raise self.error("class range endpoints must be single characters")
                lo_byte = lo.bit_length() - 1
                if hi < lo_byte:
                    raise self.error(f"bad class range")
                for b in range(lo_byte, hi + 1):
                    mask |= 1 << b
            else:
                mask |= lo
            first = False
        return (ALL_BYTES & ~mask) if negate else mask

    def _class_member(self) -> int:
        ch = self.peek()
        if ch == "\\":
            return self.escape()
        self.take()
        byte = ord(ch)
        if byte > 0xFF:
            raise self.error(f"non-byte character {ch!r}")
        return 1 << byte


def parse(pattern: str) -> Node:
    return _Parser(pattern).parse()


# --- NFA ---


class _Nfa:
    def __init__(self):
        self.eps: list[list[int]] = []
        self.edges: list[list[tuple[int, int]]] = []  # (byte mask, target)

    def state(self) -> int:
        self.eps.append([])
        self.edges.append([])
        return len(self.eps) - 1

    def build(self, node: Node) -> tuple[int, int]:
        if isinstance(node, Char):
            s, a = self.state(), self.state()
            self.edges[s].append((node.mask, a))
            return s, a
        if isinstance(node, Epsilon):
            s = self.state()
            return s, s
        if isinstance(node, Concat):
            start, accept = self.build(node.parts[0])
            for part in node.parts[1:]:
                s2, a2 = self.build(part)
                self.eps[accept].append(s2)
                accept = a2
            return start, accept
        if isinstance(node, Alt):
            s, a = self.state(), self.state()
            for option in node.options:
                os, oa = self.build(option)
                self.eps[s].append(os)
                self.eps[oa].append(a)
            return s, a
        if isinstance(node, Repeat):
            return self._build_repeat(node)
        raise TypeError(f"unknown node {node!r}")

    def _build_repeat(self, node: Repeat) -> tuple[int, int]:
        start = accept = self.state()
        for _ in range(node.lo):
            cs, ca = self.build(node.child)
            self.eps[accept].append(cs)
            accept = ca
        if node.hi is None:
            s, a = self.state(), self.state()
            cs, ca = self.build(node.child)
            self.eps[s].extend((cs, a))
            self.eps[ca].extend((cs, a))
            self.eps[accept].append(s)
            accept = a
        elif node.hi > node.lo:
            # Optional copies exit straight to one shared final state, so
            # epsilon closures stay small instead of chaining through every
            # remaining copy.
            final = self.state()
            self.eps[accept].append(final)
            prev = accept
            for _ in range(node.hi - node.lo):
                cs, ca = self.build(node.child)
                self.eps[prev].append(cs)
                self.eps[ca].append(final)
                prev = ca
            accept = final
        return start, accept


# --- DFA ---


@dataclass
class CharDfa:
    """Byte-level DFA with an alphabet partitioned into equivalence classes.

    `class_of_byte[b]` is -1 when byte b can never advance a match;
    `trans[state][cls]` is -1 for dead moves. All remaining states can
    reach an accepting state.
    """

    class_of_byte: tuple[int, ...]
    trans: list[list[int]]
    start: int
    accepting: frozenset[int]

    @property
    def n_states(self) -> int:
        return len(self.trans)

    @property
    def n_classes(self) -> int:
        return len(self.trans[0]) if self.trans else 0

    def step(self, state: int, byte: int) -> int:
        cls = self.class_of_byte[byte]
        if cls < 0 or state < 0:
            return -1
        return self.trans[state][cls]

    def walk(self, state: int, data: bytes) -> int:
        for byte in data:
            state = self.step(state, byte)
            if state < 0:
                return -1
        return state

    def accepts(self, data: bytes) -> bool:
        return self.walk(self.start, data) in self.accepting


def _iter_bits(x: int):
    while x:
        lsb = x & -x
        yield lsb.bit_length() - 1
        x ^= lsb


def compile_regex(pattern: str) -> CharDfa:
    """Parse, build the NFA, determinize, and prune dead states."""
    ast = parse(pattern)
    nfa = _Nfa()
    start, accept = nfa.build(ast)
    n = len(nfa.eps)

    closure = [0] * n
    for s in range(n):
        seen = 1 << s
        stack = [s]
        while stack:
            cur = stack.pop()
            for nxt in nfa.eps[cur]:
                if not (seen >> nxt) & 1:
                    seen |= 1 << nxt
                    stack.append(nxt)
        closure[s] = seen

    unique_masks = sorted({mask for edges in nfa.edges for mask, _ in edges})
    signatures: dict[tuple[int, ...], int] = {}
    class_of_byte = [-1] * 256
    reps: list[int] = []
    for byte in range(256):
        sig = tuple((mask >> byte) & 1 for mask in unique_masks)
        if not any(sig):
            continue
        if sig not in signatures:
            signatures[sig] = len(reps)
            reps.append(byte)
        class_of_byte[byte] = signatures[sig]
    n_classes = len(reps)

    goto: list[dict[int, int]] = [{} for _ in range(n)]
    for s in range(n):
        for mask, target in nfa.edges[s]:
            for cls, rep in enumerate(reps):
                if (mask >> rep) & 1:
                    goto[s][cls] = goto[s].get(cls, 0) | closure[target]

    start_bits = closure[start]
    dfa_ids: dict[int, int] = {start_bits: 0}
    order = [start_bits]
    trans: list[list[int]] = []
    idx = 0
    while idx < len(order):
        bits = order[idx]
        idx += 1
        acc: dict[int, int] = {}
        for s in _iter_bits(bits):
            for cls, target_bits in goto[s].items():
                acc[cls] = acc.get(cls, 0) | target_bits
        row = [-1] * n_classes
        for cls, nxt in acc.items():
            if nxt not in dfa_ids:
                dfa_ids[nxt] = len(order)
                order.append(nxt)
            row[cls] = dfa_ids[nxt]
        trans.append(row)

    accept_bit = 1 << accept
    accepting = {i for i, bits in enumerate(order) if bits & accept_bit}

    # prune states that cannot reach acceptance
    n_dfa = len(order)
    reverse: list[list[int]] = [[] for _ in range(n_dfa)]
    for s, row in enumerate(trans):
        for target in row:
            if target >= 0:
                reverse[target].append(s)
    live = set(accepting)
    stack = list(accepting)
    while stack:
        cur = stack.pop()
        for prev in reverse[cur]:
            if prev not in live:
                live.add(prev)
                stack.append(prev)
    if 0 not in live:
        raise RegexParseError(f"pattern {pattern!r} matches no string")
    remap = {}
    for old in range(n_dfa):
        if old in live:
            remap[old] = len(remap)
    pruned = []
    for old in range(n_dfa):
        if old not in live:
            continue
        pruned.append(
            [remap[t] if (t >= 0 and t in live) else -1 for t in trans[old]]
        )
    return CharDfa(
        class_of_byte=tuple(class_of_byte),
        trans=pruned,
        start=remap[0],
        accepting=frozenset(remap[s] for s in accepting),
    )
