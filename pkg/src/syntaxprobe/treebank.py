"""Readers for bracketed constituency trees and CoNLL-U dependency files.

Both readers are pure functions of their input text and never mutate the
structures they return. Constituency labels are normalized on the way in:
function tags and coindexation suffixes are stripped, trace subtrees are
deleted. Token strings are kept byte-for-byte as found in the file; no
re-tokenization happens anywhere downstream.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

log = logging.getLogger(__name__)


class TreebankError(ValueError):
    """Malformed treebank input."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Leaf:
    pos: str
    token: str


@dataclass(frozen=True)
class Internal:
    label: str
    children: tuple  # of Internal | Leaf


@dataclass(frozen=True)
class ConstituencyTree:
    root: Internal
    sentence_id: str

    def leaves(self):
        return leaves(self)


@dataclass(frozen=True)
class DependencySentence:
    tokens: tuple
    heads: tuple  # 0 = artificial root, otherwise 1-based token index
    relations: tuple
    sentence_id: str

    def __post_init__(self):
        if not (len(self.tokens) == len(self.heads) == len(self.relations)):
            raise TreebankError(
                f"{self.sentence_id}: column lengths differ "
                f"({len(self.tokens)} tokens, {len(self.heads)} heads, "
                f"{len(self.relations)} relations)"
            )


@dataclass
class Corpus:
    sentences: list
    split_tag: str = "train"
    by_id: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.by_id = {}
        for s in self.sentences:
            if s.sentence_id in self.by_id:
                raise TreebankError(f"duplicate sentence_id {s.sentence_id!r}")
            self.by_id[s.sentence_id] = s

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


# --- PTB bracketed format ---------------------------------------------------

_TRACE_LABEL = "-NONE-"


def _strip_label(label):
    """Drop function tags and coindexation: NP-SBJ -> NP, NP=2 -> NP.

    Labels that begin with '-' (-NONE-, -LRB-, -RRB-) are kept whole.
    """
    if label.startswith("-"):
        return label
    for sep in ("-", "="):
        i = label.find(sep)
        if i > 0:
            label = label[:i]
    return label


def _tokenize_ptb(text):
    """Yield (kind, value, line, col) with kind in {'(', ')', 'atom'}."""
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
        elif c.isspace():
            col += 1
            i += 1
        elif c in "()":
            yield (c, c, line, col)
            col += 1
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            yield ("atom", text[i:j], line, col)
            col += j - i
            i = j


def _parse_node(tokens, pos):
    kind, value, line, col = tokens[pos]
    if kind != "(":
        raise TreebankError(f"expected '(' but found {value!r}", line, col)
    pos += 1
    if pos >= len(tokens):
        raise TreebankError("unbalanced parentheses: unexpected end of input", line, col)
    kind, value, _, _ = tokens[pos]
    label = ""
    if kind == "atom":
        label = value
        pos += 1
    children = []
    words = []
    while pos < len(tokens):
        kind, value, line, col = tokens[pos]
        if kind == ")":
            pos += 1
            if words and not children:
                if len(words) == 1:
                    return Leaf(pos=label, token=words[0]), pos
                # Rare multi-word leaf; keep it as one token joined by space.
                return Leaf(pos=label, token=" ".join(words)), pos
            if words:
                raise TreebankError("mixed tokens and subtrees under one node", line, col)
            return Internal(label=label, children=tuple(children)), pos
        if kind == "(":
            child, pos = _parse_node(tokens, pos)
            children.append(child)
        else:
            words.append(value)
            pos += 1
    raise TreebankError("unbalanced parentheses: unexpected end of input", line, col)


def _normalize(node):
    """Strip decorations and delete trace subtrees; None if nothing remains."""
    if isinstance(node, Leaf):
        if node.pos == _TRACE_LABEL:
            return None
        return Leaf(pos=_strip_label(node.pos), token=node.token)
    children = [c for c in (_normalize(c) for c in node.children) if c is not None]
    if not children:
        return None
    return Internal(label=_strip_label(node.label), children=tuple(children))


def parse_ptb(text, source="ptb"):
    """Parse bracketed trees, returning normalized ConstituencyTree objects.

    Sentence ids are "<source>:<index>". Trees left empty by trace removal
    are skipped with a warning rather than raised.
    """
    tokens = list(_tokenize_ptb(text))
    trees = []
    pos = 0
    index = 0
    while pos < len(tokens):
        kind, value, line, col = tokens[pos]
        if kind != "(":
            raise TreebankError(f"expected '(' but found {value!r}", line, col)
        node, pos = _parse_node(tokens, pos)
        if isinstance(node, Leaf):
            raise TreebankError("top-level node is a bare leaf", line, col)
        # mrg-style outer wrapper: "( (S ...) )"
        while node.label == "" and len(node.children) == 1 and isinstance(node.children[0], Internal):
            node = node.children[0]
        node = _normalize(node)
        if node is None or isinstance(node, Leaf):
            log.warning("%s: tree %d empty after normalization, skipped", source, index)
            index += 1
            continue
        trees.append(ConstituencyTree(root=node, sentence_id=f"{source}:{index}"))
        index += 1
    return trees


def leaves(tree):
    """In-order (token, pos) pairs of a constituency tree."""
    out = []

    def walk(node):
        if isinstance(node, Leaf):
            out.append((node.token, node.pos))
        else:
            for c in node.children:
                walk(c)

    walk(tree.root)
    return out


def serialize_ptb(tree):
    def render(node):
        if isinstance(node, Leaf):
            return f"({node.pos} {node.token})"
        return "(" + node.label + " " + " ".join(render(c) for c in node.children) + ")"

    return render(tree.root)


# --- CoNLL-U ----------------------------------------------------------------


def _check_heads(tokens, heads, sentence_id):
    n = len(tokens)
    for i, h in enumerate(heads):
        if h < 0 or h > n:
            return f"{sentence_id}: head {h} of token {i + 1} out of range 1..{n}"
        if h == i + 1:
            return f"{sentence_id}: token {i + 1} is its own head"
    if not any(h == 0 for h in heads):
        return f"{sentence_id}: no root token (no head 0)"
    # Every token must reach the root in at most n steps.
    for i in range(n):
        h, steps = heads[i], 0
        while h != 0:
            h = heads[h - 1]
            steps += 1
            if steps > n:
                return f"{sentence_id}: cycle in heads reachable from token {i + 1}"
    return None


def parse_conllu(text, source="conllu"):
    """Parse CoNLL-U text into dependency sentences.

    Returns (sentences, rejections). Multiword-token and empty-node lines
    are ignored. Sentences with non-integer, out-of-range, or cyclic heads
    are rejected individually; each rejection is one diagnostic string.
    """
    sentences = []
    rejections = []
    index = 0

    def flush(rows, sent_id):
        nonlocal index
        if not rows and sent_id is None:
            return
        sid = sent_id if sent_id is not None else f"{source}:{index}"
        index += 1
        if not rows:
            return
        tokens, heads, relations = [], [], []
        for lineno, cols in rows:
            if len(cols) != 10:
                rejections.append(f"{sid}: line {lineno}: expected 10 columns, got {len(cols)}")
                return
            try:
                head = int(cols[6])
            except ValueError:
                rejections.append(f"{sid}: line {lineno}: non-integer head {cols[6]!r}")
                return
            tokens.append(cols[1])
            heads.append(head)
            relations.append(cols[7])
        problem = _check_heads(tokens, heads, sid)
        if problem is not None:
            rejections.append(problem)
            return
        sentences.append(
            DependencySentence(
                tokens=tuple(tokens),
                heads=tuple(heads),
                relations=tuple(relations),
                sentence_id=sid,
            )
        )

    rows = []
    sent_id = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\n")
        if not line.strip():
            flush(rows, sent_id)
            rows, sent_id = [], None
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("sent_id"):
                _, _, value = body.partition("=")
                if value.strip():
                    sent_id = value.strip()
            continue
        cols = line.split("\t")
        token_id = cols[0]
        if "-" in token_id or "." in token_id:
            continue  # multiword range or empty node
        rows.append((lineno, cols))
    flush(rows, sent_id)
    return sentences, rejections
