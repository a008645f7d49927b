"""WREP1: the binary interchange format for per-layer token vectors.

Layout, all little-endian:

    magic  "WREP1\\n"
    u32    L (layer count)
    u32[L] per-layer dimensions
    u32    sentence count
    per sentence:
        u16 + bytes   sentence id (UTF-8)
        u32           token count T
        T x (u16 + bytes)  token strings (UTF-8)
        for l in 0..L: T*d_l f32, token-major

Any model can supply representations by writing this file; layer 0 is by
convention the model's input embedding layer. Alignment against tasks is
strict: sentence ids must exist and token strings must match byte for
byte, otherwise a hard error is raised (never a silent skip).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .tasks import ArcPairTask, WordLabelTask

MAGIC = b"WREP1\n"


class RepFormatError(ValueError):
    """Malformed WREP1 file; message names the byte offset."""


class AlignmentError(ValueError):
    """Task and representations disagree on sentences or token strings."""


@dataclass
class RepSentence:
    sentence_id: str
    tokens: tuple
    vectors: list  # per layer: float32 array of shape (len(tokens), d_l)


@dataclass
class LayeredRepresentations:
    layer_dims: list
    sentences: list
    by_id: dict = None

    def __post_init__(self):
        self.by_id = {s.sentence_id: s for s in self.sentences}

    @property
    def num_layers(self):
        return len(self.layer_dims)

    def validate(self):
        for s in self.sentences:
            if len(s.vectors) != self.num_layers:
                raise RepFormatError(f"{s.sentence_id}: expected {self.num_layers} layers")
            for l, v in enumerate(s.vectors):
                if v.shape != (len(s.tokens), self.layer_dims[l]):
                    raise RepFormatError(
                        f"{s.sentence_id}: layer {l} shape {v.shape}, expected "
                        f"({len(s.tokens)}, {self.layer_dims[l]})"
                    )
                if not np.all(np.isfinite(v)):
                    raise RepFormatError(f"{s.sentence_id}: non-finite value in layer {l}")


def write_wrep(reps, path):
    reps.validate()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", reps.num_layers))
        for d in reps.layer_dims:
            f.write(struct.pack("<I", d))
        f.write(struct.pack("<I", len(reps.sentences)))
        for s in reps.sentences:
            sid = s.sentence_id.encode("utf-8")
            f.write(struct.pack("<H", len(sid)))
            f.write(sid)
            f.write(struct.pack("<I", len(s.tokens)))
            for t in s.tokens:
                tb = t.encode("utf-8")
                f.write(struct.pack("<H", len(tb)))
                f.write(tb)
            for v in s.vectors:
                f.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


class _Cursor:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, n, what):
        if self.offset + n > len(self.data):
            raise RepFormatError(
                f"truncated file: needed {n} bytes for {what} at offset {self.offset}, "
                f"only {len(self.data) - self.offset} left"
            )
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u16(self, what):
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def string(self, what):
        n = self.u16(what + " length")
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise RepFormatError(f"invalid UTF-8 in {what} at offset {self.offset - n}: {e}")


def read_wrep(path):
    with open(path, "rb") as f:
        data = f.read()
    cur = _Cursor(data)
    if cur.take(len(MAGIC), "magic") != MAGIC:
        raise RepFormatError("bad magic at offset 0: not a WREP1 file")
    num_layers = cur.u32("layer count")
    dims = [cur.u32(f"dimension of layer {l}") for l in range(num_layers)]
    if any(d == 0 for d in dims):
        raise RepFormatError(f"zero layer dimension in header at offset {cur.offset}")
    num_sentences = cur.u32("sentence count")
    sentences = []
    for si in range(num_sentences):
        sid = cur.string(f"id of sentence {si}")
        num_tokens = cur.u32(f"token count of sentence {si}")
        tokens = tuple(cur.string(f"token of sentence {si}") for _ in range(num_tokens))
        vectors = []
        for l, d in enumerate(dims):
            start = cur.offset
            raw = cur.take(4 * num_tokens * d, f"layer {l} payload of sentence {si}")
            v = np.frombuffer(raw, dtype="<f4").reshape(num_tokens, d).copy()
            if not np.all(np.isfinite(v)):
                raise RepFormatError(f"non-finite float in layer {l} payload at offset {start}")
            vectors.append(v)
        sentences.append(RepSentence(sentence_id=sid, tokens=tokens, vectors=vectors))
    if cur.offset != len(data):
        raise RepFormatError(f"{len(data) - cur.offset} trailing bytes after offset {cur.offset}")
    return LayeredRepresentations(layer_dims=dims, sentences=sentences)


def expected_file_size(reps):
    """Exact byte size write_wrep will produce."""
    size = len(MAGIC) + 4 + 4 * reps.num_layers + 4
    for s in reps.sentences:
        size += 2 + len(s.sentence_id.encode("utf-8")) + 4
        size += sum(2 + len(t.encode("utf-8")) for t in s.tokens)
        size += 4 * len(s.tokens) * sum(reps.layer_dims)
    return size


def concat_directions(forward, backward):
    """Join forward and backward runs layer by layer, forward half first."""
    if forward.num_layers != backward.num_layers:
        raise AlignmentError(
            f"layer count mismatch: {forward.num_layers} vs {backward.num_layers}"
        )
    if len(forward.sentences) != len(backward.sentences):
        raise AlignmentError(
            f"sentence count mismatch: {len(forward.sentences)} vs {len(backward.sentences)}"
        )
    dims = [df + db for df, db in zip(forward.layer_dims, backward.layer_dims)]
    sentences = []
    for fs, bs in zip(forward.sentences, backward.sentences):
        if fs.sentence_id != bs.sentence_id or fs.tokens != bs.tokens:
            raise AlignmentError(f"sentence mismatch at {fs.sentence_id!r} vs {bs.sentence_id!r}")
        vectors = [np.concatenate([fv, bv], axis=1) for fv, bv in zip(fs.vectors, bs.vectors)]
        sentences.append(RepSentence(sentence_id=fs.sentence_id, tokens=fs.tokens, vectors=vectors))
    return LayeredRepresentations(layer_dims=dims, sentences=sentences)


@dataclass
class AlignedDataset:
    features: np.ndarray  # (n, width) float32
    label_indices: np.ndarray  # (n,) int64
    layer: int
    task_name: str

    def __len__(self):
        return len(self.label_indices)


def _sentence_for(reps, sentence_id):
    s = reps.by_id.get(sentence_id)
    if s is None:
        raise AlignmentError(f"sentence {sentence_id!r} not present in representations")
    return s


def _check_token(s, index, expected=None):
    if index < 0 or index >= len(s.tokens):
        raise AlignmentError(f"{s.sentence_id}: token index {index} out of range")
    if expected is not None and s.tokens[index] != expected:
        raise AlignmentError(
            f"{s.sentence_id}: token {index} is {s.tokens[index]!r}, task expects {expected!r}"
        )


def align(reps, task, vocab, layer, source_corpus=None):
    """Build the feature matrix for one task at one layer.

    Word tasks yield one row of width d_layer per example; arc tasks yield
    the [child; other; child*other] construction of width 3*d_layer. When
    a source corpus is given, its token strings are cross-checked against
    the representation file byte for byte.
    """
    if layer < 0 or layer >= reps.num_layers:
        raise AlignmentError(f"layer {layer} not in file (has {reps.num_layers} layers)")
    d = reps.layer_dims[layer]
    if isinstance(task, WordLabelTask):
        rows = np.empty((len(task.examples), d), dtype=np.float32)
        labels = np.empty(len(task.examples), dtype=np.int64)
        for i, (sid, index, label) in enumerate(task.examples):
            s = _sentence_for(reps, sid)
            expected = None
            if source_corpus is not None:
                tree = source_corpus.by_id[sid]
                expected = tree.leaves()[index][0]
            _check_token(s, index, expected)
            rows[i] = s.vectors[layer][index]
            labels[i] = vocab.encode(label)
        return AlignedDataset(features=rows, label_indices=labels, layer=layer, task_name=task.name)
    if isinstance(task, ArcPairTask):
        from .probe import make_arc_features

        rows = np.empty((len(task.examples), 3 * d), dtype=np.float32)
        labels = np.empty(len(task.examples), dtype=np.int64)
        for i, (sid, child, other, is_arc) in enumerate(task.examples):
            s = _sentence_for(reps, sid)
            _check_token(s, child)
            _check_token(s, other)
            rows[i] = make_arc_features(s.vectors[layer][child], s.vectors[layer][other])
            labels[i] = vocab.encode("arc" if is_arc else "noarc")
        return AlignedDataset(features=rows, label_indices=labels, layer=layer, task_name=task.name)
    raise TypeError(f"unsupported task type {type(task).__name__}")
