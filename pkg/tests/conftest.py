import numpy as np
import pytest

from syntaxprobe.repstore import LayeredRepresentations, RepSentence
from syntaxprobe.treebank import Corpus, parse_ptb

FIG1_PTB = (
    "(S (NP (JJ Other) (NN stock) (NNS indexes)) (ADVP (RB also)) "
    "(VP (VBD fell) (PP (IN on) (NP (NNP Monday)))))"
)

FIG1_TOKENS = ["Other", "stock", "indexes", "also", "fell", "on", "Monday"]


@pytest.fixture
def fig1_tree():
    return parse_ptb(FIG1_PTB, source="fig1")[0]


@pytest.fixture
def fig1_corpus(fig1_tree):
    return Corpus([fig1_tree])


def random_reps(rng, sentences_tokens, dims, ids=None):
    """LayeredRepresentations filled with standard-normal float32 noise."""
    sentences = []
    for i, tokens in enumerate(sentences_tokens):
        sid = ids[i] if ids else f"s{i}"
        vectors = [
            rng.standard_normal((len(tokens), d)).astype(np.float32) for d in dims
        ]
        sentences.append(RepSentence(sentence_id=sid, tokens=tuple(tokens), vectors=vectors))
    return LayeredRepresentations(layer_dims=list(dims), sentences=sentences)
