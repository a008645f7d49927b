"""A small stacked LSTM language model, trained from scratch in numpy.

The model exists to close the probing pipeline end to end: after
training a forward and a backward variant on a plain-text corpus, their
per-layer hidden states (plus the tied embedding lookups as layer 0) are
dumped as a WREP1 file with both directions concatenated per layer.

Input and output embeddings share one matrix, which forces
embed_dim == hidden_dim. Sentences are processed whole (capped at
max_sentence_len tokens), one at a time, so all state at position t in
the forward model depends only on tokens <= t, and symmetrically for
the backward model.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, asdict

import numpy as np

from .optim import Adam, clip_gradients
from .repstore import LayeredRepresentations, RepSentence

BOS = "<s>"
UNK = "<UNK>"


class NumericalError(RuntimeError):
    """Training diverged (non-finite loss)."""


@dataclass
class LstmLmConfig:
    num_layers: int = 4
    dim: int = 64  # embed_dim == hidden_dim (tied embeddings)
    direction: str = "forward"
    seed: int = 0
    learning_rate: float = 1e-3
    epochs: int = 3
    clip_norm: float = 5.0
    min_token_freq: int = 2
    max_sentence_len: int = 60

    def __post_init__(self):
        if self.num_layers < 1 or self.dim < 1:
            raise ValueError("num_layers and dim must be positive")
        if self.direction not in ("forward", "backward"):
            raise ValueError(f"direction must be forward or backward, got {self.direction!r}")


@dataclass
class LstmLmModel:
    config: LstmLmConfig
    vocab: list  # id -> token string; [BOS, UNK, ...sorted corpus tokens]
    token_ids: dict  # token -> id
    params: dict  # "E", "W0".."W{L-1}", "b0".."b{L-1}"

    @property
    def dim(self):
        return self.config.dim

    @property
    def num_layers(self):
        return self.config.num_layers

    def lookup(self, token):
        return self.token_ids.get(token, self.token_ids[UNK])


def build_vocab(sentences, min_freq=2):
    counts = Counter(t for sent in sentences for t in sent)
    kept = sorted(t for t, c in counts.items() if c >= min_freq)
    vocab = [BOS, UNK] + kept
    return vocab, {t: i for i, t in enumerate(vocab)}


def init_model(config, vocab, token_ids):
    rng = np.random.default_rng(config.seed)
    d = config.dim

    def uniform(rows, cols):
        a = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-a, a, size=(rows, cols))

    params = {"E": uniform(len(vocab), d)}
    for l in range(config.num_layers):
        params[f"W{l}"] = uniform(4 * d, 2 * d)
        b = np.zeros(4 * d)
        b[d : 2 * d] = 1.0  # forget-gate bias
        params[f"b{l}"] = b
    return LstmLmModel(config=config, vocab=vocab, token_ids=token_ids, params=params)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _run_states(model, input_ids):
    """Run the stack over a sequence of input ids; cache everything.

    Returns a cache dict used by both the loss gradient and the
    representation dump. h[l][t] is the layer-l state after step t.
    """
    d = model.dim
    L = model.num_layers
    E = model.params["E"]
    T = len(input_ids)
    xs = [E[input_ids]]  # inputs to layer 0: embeddings, (T, d)
    cache = {"gates": [[None] * T for _ in range(L)], "c": [], "h": [], "inputs": None}
    for l in range(L):
        W, b = model.params[f"W{l}"], model.params[f"b{l}"]
        h_prev = np.zeros(d)
        c_prev = np.zeros(d)
        hs = np.empty((T, d))
        cs = np.empty((T, d))
        x = xs[-1]
        for t in range(T):
            z = W @ np.concatenate([x[t], h_prev]) + b
            i = _sigmoid(z[:d])
            f = _sigmoid(z[d : 2 * d])
            g = np.tanh(z[2 * d : 3 * d])
            o = _sigmoid(z[3 * d :])
            c = f * c_prev + i * g
            h = o * np.tanh(c)
            cache["gates"][l][t] = (i, f, g, o, c_prev, h_prev, x[t])
            hs[t] = h
            cs[t] = c
            h_prev, c_prev = h, c
        cache["h"].append(hs)
        cache["c"].append(cs)
        xs.append(hs)
    cache["inputs"] = xs
    return cache


def sentence_loss_and_grads(model, token_ids):
    """Summed next-token NLL over one sentence plus parameter gradients.

    Inputs are [BOS, w_1 .. w_{n-1}]; targets are [w_1 .. w_n].
    Returns (nll_sum, token_count, grads).
    """
    d = model.dim
    L = model.num_layers
    E = model.params["E"]
    bos = model.token_ids[BOS]
    targets = np.asarray(token_ids, dtype=np.int64)
    input_ids = np.concatenate([[bos], targets[:-1]])
    T = len(targets)
    cache = _run_states(model, input_ids)
    top = cache["h"][-1]  # (T, d)

    logits = top @ E.T
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    nll = float(-np.sum(np.log(probs[np.arange(T), targets] + 1e-300)))

    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    dlogits = probs
    dlogits[np.arange(T), targets] -= 1.0
    grads["E"] += dlogits.T @ top  # tied softmax projection
    dtop = dlogits @ E  # (T, d)

    # BPTT, top layer down.
    dx_below = dtop
    for l in reversed(range(L)):
        W = model.params[f"W{l}"]
        dW = grads[f"W{l}"]
        db = grads[f"b{l}"]
        dh_seq = dx_below
        dx_out = np.zeros((T, d))
        dh_next = np.zeros(d)
        dc_next = np.zeros(d)
        for t in reversed(range(T)):
            i, f, g, o, c_prev, h_prev, x_t = cache["gates"][l][t]
            c = cache["c"][l][t]
            tanh_c = np.tanh(c)
            dh = dh_seq[t] + dh_next
            do = dh * tanh_c
            dc = dh * o * (1.0 - tanh_c * tanh_c) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_next = dc * f
            dz = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ])
            inp = np.concatenate([x_t, h_prev])
            dW += np.outer(dz, inp)
            db += dz
            dinp = W.T @ dz
            dx_out[t] = dinp[:d]
            dh_next = dinp[d:]
        dx_below = dx_out

    # Embedding lookups at layer 0 input.
    np.add.at(grads["E"], input_ids, dx_below)
    return nll, T, grads


def _prepare(model, sentence):
    """Token ids for one sentence in model direction, capped in length."""
    tokens = sentence[: model.config.max_sentence_len]
    ids = [model.lookup(t) for t in tokens]
    if model.config.direction == "backward":
        ids = ids[::-1]
    return np.asarray(ids, dtype=np.int64)


def train_lm(sentences, config):
    """Train on tokenized sentences; returns (model, per-epoch perplexities)."""
    sentences = [s for s in sentences if s]
    if not sentences:
        raise ValueError("empty training corpus")
    vocab, token_ids = build_vocab(sentences, min_freq=config.min_token_freq)
    model = init_model(config, vocab, token_ids)
    opt = Adam(model.params, learning_rate=config.learning_rate)
    rng = np.random.default_rng(config.seed + 1)
    ppl_log = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(sentences))
        total_nll = 0.0
        total_tokens = 0
        for si in order:
            ids = _prepare(model, sentences[si])
            nll, count, grads = sentence_loss_and_grads(model, ids)
            if not np.isfinite(nll):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, sentence {si} "
                    f"({config.direction} model)"
                )
            clip_gradients(grads, config.clip_norm)
            opt.step(grads)
            total_nll += nll
            total_tokens += count
        with np.errstate(over="ignore"):
            ppl = float(np.exp(total_nll / total_tokens))
        if not np.isfinite(ppl):
            raise NumericalError(
                f"perplexity diverged at epoch {epoch} ({config.direction} model)"
            )
        ppl_log.append(ppl)
    return model, ppl_log


def perplexity(model, sentences):
    """exp(mean next-token NLL) over a corpus, no parameter updates."""
    total_nll = 0.0
    total_tokens = 0
    for sent in sentences:
        if not sent:
            continue
        ids = _prepare(model, sent)
        nll, count, _ = sentence_loss_and_grads(model, ids)
        total_nll += nll
        total_tokens += count
    if total_tokens == 0:
        raise ValueError("no tokens to evaluate")
    return float(np.exp(total_nll / total_tokens))


def hidden_states(model, tokens):
    """Per-layer states for each token, in original token order.

    Layer l's row t is the state after the model consumed token t (for
    the backward direction: after consuming it in the reversed pass,
    re-reversed here). A BOS step precedes the sentence in both cases.
    """
    ids = _prepare(model, list(tokens))
    bos = model.token_ids[BOS]
    input_ids = np.concatenate([[bos], ids])
    cache = _run_states(model, input_ids)
    states = [h[1:] for h in cache["h"]]  # drop the BOS step
    if model.config.direction == "backward":
        states = [h[::-1] for h in states]
    return states


def dump_representations(model_fwd, model_bwd, sentences, sentence_ids):
    """Concatenated fwd+bwd representations as a LayeredRepresentations.

    Layer 0 holds the tied embedding lookups of both directions; layers
    1..num_layers hold the LSTM states. OOV tokens are embedded as UNK
    but keep their original string for alignment.
    """
    if model_fwd.config.direction != "forward" or model_bwd.config.direction != "backward":
        raise ValueError("expected a forward model and a backward model, in that order")
    if model_fwd.vocab != model_bwd.vocab or model_fwd.num_layers != model_bwd.num_layers:
        raise ValueError("direction models must share vocabulary and layer count")
    d = model_fwd.dim
    dims = [2 * d] * (model_fwd.num_layers + 1)
    out = []
    for sid, tokens in zip(sentence_ids, sentences):
        tokens = list(tokens)[: model_fwd.config.max_sentence_len]
        ids_f = np.asarray([model_fwd.lookup(t) for t in tokens], dtype=np.int64)
        ids_b = np.asarray([model_bwd.lookup(t) for t in tokens], dtype=np.int64)
        emb = np.concatenate(
            [model_fwd.params["E"][ids_f], model_bwd.params["E"][ids_b]], axis=1
        )
        states_f = hidden_states(model_fwd, tokens)
        states_b = hidden_states(model_bwd, tokens)
        vectors = [emb.astype(np.float32)]
        for hf, hb in zip(states_f, states_b):
            vectors.append(np.concatenate([hf, hb], axis=1).astype(np.float32))
        out.append(RepSentence(sentence_id=sid, tokens=tuple(tokens), vectors=vectors))
    return LayeredRepresentations(layer_dims=dims, sentences=out)


# --- checkpoints ------------------------------------------------------------


def save_lm(model, path):
    arrays = {k: v for k, v in model.params.items()}
    arrays["__vocab__"] = np.array(model.vocab, dtype=object)
    meta = json.dumps(asdict(model.config))
    arrays["__config__"] = np.array(meta)
    np.savez(path, **arrays)


def load_lm(path):
    data = np.load(path, allow_pickle=True)
    config = LstmLmConfig(**json.loads(str(data["__config__"])))
    vocab = list(data["__vocab__"])
    params = {k: data[k] for k in data.files if not k.startswith("__")}
    return LstmLmModel(
        config=config, vocab=vocab,
        token_ids={t: i for i, t in enumerate(vocab)}, params=params,
    )
