"""Reference points for the probes: per-word majority class and a
contextual-embedding feature builder.

The majority table maps each training token to its most frequent label
(lexicographic tie-break); tokens unseen at evaluation fall back to the
global majority label. The contextual features concatenate a word's
embedding with the mean of all other embeddings in its sentence.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np


@dataclass
class MajorityTable:
    per_word: dict  # token -> label
    global_majority: str
    counts: dict  # token -> Counter(label)

    def predict(self, token):
        return self.per_word.get(token, self.global_majority)


def _argmax_label(counter):
    # Highest count; ties break to the lexicographically smallest label.
    return min(counter.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def _tokens_of(corpus, sentence_id):
    sent = corpus.by_id[sentence_id]
    if hasattr(sent, "leaves"):
        return [t for t, _ in sent.leaves()]
    return list(sent.tokens)


def fit_majority(task, corpus):
    """Count (token, label) pairs over the training task."""
    if not task.examples:
        raise ValueError("cannot fit a majority table on an empty task")
    counts = defaultdict(Counter)
    global_counts = Counter()
    for sentence_id, token_index, label in task.examples:
        token = _tokens_of(corpus, sentence_id)[token_index]
        counts[token][label] += 1
        global_counts[label] += 1
    per_word = {token: _argmax_label(c) for token, c in counts.items()}
    return MajorityTable(
        per_word=per_word,
        global_majority=_argmax_label(global_counts),
        counts=dict(counts),
    )


def evaluate_majority(table, task, corpus):
    """Accuracy of the majority predictor on an evaluation task."""
    if not task.examples:
        raise ValueError("empty evaluation task")
    correct = 0
    for sentence_id, token_index, label in task.examples:
        token = _tokens_of(corpus, sentence_id)[token_index]
        if table.predict(token) == label:
            correct += 1
    return correct / len(task.examples)


def write_majority_table(table, path):
    with open(path, "w", encoding="utf-8") as f:
        for token in sorted(table.per_word):
            label = table.per_word[token]
            f.write(f"{token}\t{label}\t{table.counts[token][label]}\n")


def contextual_features(embeddings, sentence_id, token_index):
    """[own embedding; mean of the other embeddings in the sentence].

    `embeddings` is a LayeredRepresentations whose layer 0 holds the
    embedding table lookups. Single-token sentences get a zero context.
    """
    sent = embeddings.by_id[sentence_id]
    vecs = sent.vectors[0]
    n = len(sent.tokens)
    if token_index < 0 or token_index >= n:
        raise IndexError(f"{sentence_id}: token index {token_index} out of range")
    own = vecs[token_index]
    if n == 1:
        context = np.zeros_like(own)
    else:
        context = (vecs.sum(axis=0) - own) / (n - 1)
    return np.concatenate([own, context])
