"""Turn parsed treebanks into classification datasets.

Word-level tasks read the label `level` steps above each token's
preterminal (level 0 is the POS tag itself); missing ancestors clamp to
the "<ROOT>" sentinel. The arc task pairs each eligible word once with
its true head (positive) and once with a uniformly drawn other word that
is neither itself nor its head (negative), so positives and negatives
are balanced by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .treebank import Leaf

ROOT_SENTINEL = "<ROOT>"
UNK_LABEL = "<UNK-LABEL>"

LEVEL_NAMES = {0: "pos", 1: "parent", 2: "grandparent", 3: "greatgrandparent"}
TASK_LEVELS = {name: level for level, name in LEVEL_NAMES.items()}


@dataclass
class WordLabelTask:
    level: int
    examples: list  # of (sentence_id, token_index, label)

    @property
    def name(self):
        return LEVEL_NAMES[self.level]

    def labels(self):
        return [label for _, _, label in self.examples]


@dataclass
class ArcPairTask:
    examples: list  # of (sentence_id, child_index, other_index, is_arc)
    seed: int
    skipped_tokens: int = 0

    @property
    def name(self):
        return "arc"


@dataclass(frozen=True)
class LabelVocabulary:
    labels: tuple
    index: dict = field(hash=False)

    @property
    def unk_index(self):
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    def encode(self, label):
        return self.index.get(label, self.unk_index)


def ancestor_labels(tree):
    """Per token: the chain [POS, parent, grandparent, ...] up to the root."""
    chains = []

    # `path` is ordered nearest-first: direct parent at index 0.
    def walk(node, path):
        if isinstance(node, Leaf):
            chains.append([node.pos] + path)
        else:
            for child in node.children:
                walk(child, [node.label] + path)

    walk(tree.root, [])
    return chains


def extract_word_labels(corpus, level):
    """One example per leaf token; labels clamp to <ROOT> above the top."""
    if level not in LEVEL_NAMES:
        raise ValueError(f"level must be in 0..3, got {level}")
    examples = []
    for tree in corpus:
        for token_index, chain in enumerate(ancestor_labels(tree)):
            label = chain[level] if level < len(chain) else ROOT_SENTINEL
            examples.append((tree.sentence_id, token_index, label))
    return WordLabelTask(level=level, examples=examples)


def generate_arc_pairs(corpus, seed):
    """Balanced positive/negative head-attachment pairs, deterministic in seed.

    Token indices in the emitted examples are 0-based. Root-attached tokens
    and tokens with no legal negative candidate are skipped and counted.
    """
    rng = np.random.default_rng(seed)
    examples = []
    skipped = 0
    for sent in corpus:
        n = len(sent.tokens)
        for child in range(n):
            head = sent.heads[child]
            if head == 0:
                skipped += 1
                continue
            head_index = head - 1
            candidates = [j for j in range(n) if j != child and j != head_index]
            if not candidates:
                skipped += 1
                continue
            negative = candidates[rng.integers(len(candidates))]
            examples.append((sent.sentence_id, child, head_index, True))
            examples.append((sent.sentence_id, child, negative, False))
    return ArcPairTask(examples=examples, seed=seed, skipped_tokens=skipped)


def build_vocabulary(task):
    """Sorted label vocabulary of a training-split task."""
    labels = sorted(set(task.labels()))
    if not labels:
        raise ValueError("cannot build a vocabulary from an empty task")
    return LabelVocabulary(labels=tuple(labels), index={l: i for i, l in enumerate(labels)})


# --- line-oriented serialization -------------------------------------------


def write_word_task(task, path):
    with open(path, "w", encoding="utf-8") as f:
        for sentence_id, token_index, label in task.examples:
            f.write(f"{sentence_id}\t{token_index}\t{label}\n")


def read_word_task(path, level):
    examples = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            sentence_id, token_index, label = line.rstrip("\n").split("\t")
            examples.append((sentence_id, int(token_index), label))
    return WordLabelTask(level=level, examples=examples)


def write_arc_task(task, path):
    with open(path, "w", encoding="utf-8") as f:
        for sentence_id, child, other, is_arc in task.examples:
            f.write(f"{sentence_id}\t{child}\t{other}\t{int(is_arc)}\n")


def read_arc_task(path, seed=0):
    examples = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            sentence_id, child, other, is_arc = line.rstrip("\n").split("\t")
            examples.append((sentence_id, int(child), int(other), bool(int(is_arc))))
    return ArcPairTask(examples=examples, seed=seed)
