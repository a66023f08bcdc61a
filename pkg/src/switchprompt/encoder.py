"""Small transformer encoder with per-layer prompt injection.

The backbone stands in for a pre-trained language model: token and learned
position embeddings, post-norm self-attention blocks, a final layer norm, and
a frozen-weights contract (no weight tensor accumulates gradient while
frozen). Prompts are injected prefix-style: at every layer, that layer's
prompt matrix is prepended to the key and value sequences after the token
projections, so each token attends over the prompt slots plus the tokens.
Queries come from token positions only, and prompt rows receive no position
embedding.

Exact per-layer computation (post-norm, as used by the reference oracle in
the tests):

    q = h Wq + bq                       k_tok = h Wk + bk,  v_tok = h Wv + bv
    k = [prompt; k_tok]                 v = [prompt; v_tok]
    per head:  probs = row_softmax(q_h k_hᵀ / sqrt(d)),  out_h = probs v_h
    attn = concat(out_h) Wo + bo
    h = layer_norm(h + dropout(attn))
    f = act(h W1 + b1) W2 + b2
    h = layer_norm(h + dropout(f))

with h0 = dropout(token_emb[ids] + pos_emb[:T]) and a final layer norm after
the last block. The CLS vector is row 0 of the final states.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import DropoutRng, Tensor
from .tokenizer import CLS_ID, MASK_ID

INIT_STD = 0.02


@dataclass
class EncoderConfig:
    vocab_size: int
    embed_dim: int = 32
    num_layers: int = 2
    num_heads: int = 2
    ffn_dim: int = 64
    max_seq_len: int = 128
    dropout_rate: float = 0.1
    activation: str = "gelu"  # or "relu"
    # weight scale of the randomly initialized stand-in backbone; large enough
    # that attention varies with the input (a pretrained model would not need this)
    init_std: float = 0.3

    def __post_init__(self):
        if self.embed_dim % self.num_heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.activation not in ("gelu", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")


class EncoderWeights:
    """Named weight tensors plus the frozen flag.

    Tensor names are stable (used by the checkpoint format): ``token_emb``,
    ``pos_emb``, ``layer{i}.{wq,bq,wk,bk,wv,bv,wo,bo,ln1_gain,ln1_bias,
    w1,b1,w2,b2,ln2_gain,ln2_bias}`` and ``final_ln.{gain,bias}``.
    """

    def __init__(self, config: EncoderConfig, tensors: dict[str, Tensor], frozen: bool = True):
        self.config = config
        self.tensors = tensors
        self._frozen = True
        self.set_frozen(frozen)

    @classmethod
    def init(cls, config: EncoderConfig, seed: int = 0, frozen: bool = True) -> "EncoderWeights":
        rng = np.random.default_rng(seed)
        e, f = config.embed_dim, config.ffn_dim

        def normal(*shape):
            return Tensor(rng.normal(0.0, config.init_std, size=shape))

        def zeros(*shape):
            return Tensor(np.zeros(shape))

        def ones(*shape):
            return Tensor(np.ones(shape))

        tensors: dict[str, Tensor] = {
            "token_emb": normal(config.vocab_size, e),
            "pos_emb": normal(config.max_seq_len, e),
        }
        for i in range(config.num_layers):
            p = f"layer{i}."
            tensors[p + "wq"] = normal(e, e)
            tensors[p + "bq"] = zeros(e)
            tensors[p + "wk"] = normal(e, e)
            tensors[p + "bk"] = zeros(e)
            tensors[p + "wv"] = normal(e, e)
            tensors[p + "bv"] = zeros(e)
            tensors[p + "wo"] = normal(e, e)
            tensors[p + "bo"] = zeros(e)
            tensors[p + "ln1_gain"] = ones(e)
            tensors[p + "ln1_bias"] = zeros(e)
            tensors[p + "w1"] = normal(e, f)
            tensors[p + "b1"] = zeros(f)
            tensors[p + "w2"] = normal(f, e)
            tensors[p + "b2"] = zeros(e)
            tensors[p + "ln2_gain"] = ones(e)
            tensors[p + "ln2_bias"] = zeros(e)
        tensors["final_ln.gain"] = ones(e)
        tensors["final_ln.bias"] = zeros(e)
        return cls(config, tensors, frozen=frozen)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    @property
    def frozen(self) -> bool:
        return self._frozen

    def set_frozen(self, frozen: bool) -> None:
        self._frozen = bool(frozen)
        for t in self.tensors.values():
            t.requires_grad = not self._frozen
            if self._frozen:
                t.grad = None

    def parameters(self) -> list[Tensor]:
        return [t for t in self.tensors.values() if t.requires_grad]

    def checksum(self) -> str:
        """sha256 over names and raw buffers, for the frozen contract."""
        digest = hashlib.sha256()
        for name in sorted(self.tensors):
            digest.update(name.encode())
            digest.update(self.tensors[name].data.tobytes())
        return digest.hexdigest()

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.tensors.items()}

    def total_size(self) -> int:
        return sum(t.size for t in self.tensors.values())


def attention_probs(q: Tensor, k: Tensor, head_dim: int) -> Tensor:
    """Scaled dot-product attention weights; every row sums to one."""
    scores = ag.scale(ag.matmul(q, ag.transpose(k)), 1.0 / math.sqrt(head_dim))
    return ag.softmax_rows(scores)


class TransformerEncoder:
    def __init__(self, config: EncoderConfig, weights: EncoderWeights):
        if weights.config is not config and weights.config != config:
            raise ValueError("weights were initialized for a different config")
        self.config = config
        self.weights = weights

    # -- public entry points -------------------------------------------------

    def encode_plain(
        self, token_ids: Sequence[int], train: bool = False, rng: DropoutRng | None = None
    ) -> tuple[Tensor, Tensor]:
        """Forward pass without prompts; returns (cls_vector, all final states)."""
        states = self._forward(token_ids, None, train, rng)
        return self._cls(states), states

    def encode_prompted(
        self,
        token_ids: Sequence[int],
        layer_prompts: Sequence[Tensor],
        train: bool = False,
        rng: DropoutRng | None = None,
    ) -> Tensor:
        """Forward pass with one key/value prompt matrix per layer; returns CLS."""
        if len(layer_prompts) != self.config.num_layers:
            raise ValueError(
                f"expected {self.config.num_layers} layer prompts, got {len(layer_prompts)}"
            )
        e = self.config.embed_dim
        for i, p in enumerate(layer_prompts):
            if len(p.shape) != 2 or p.shape[1] != e:
                raise ValueError(f"layer {i} prompt has shape {p.shape}, expected (l, {e})")
        lengths = {p.shape[0] for p in layer_prompts}
        if len(lengths) != 1:
            raise ValueError(f"layer prompts disagree on length: {sorted(lengths)}")
        states = self._forward(token_ids, list(layer_prompts), train, rng)
        return self._cls(states)

    # -- internals -----------------------------------------------------------

    def _cls(self, states: Tensor) -> Tensor:
        return ag.reshape(ag.slice_rows(states, 0, 1), (self.config.embed_dim,))

    def _forward(
        self,
        token_ids: Sequence[int],
        layer_prompts: list[Tensor] | None,
        train: bool,
        rng: DropoutRng | None,
    ) -> Tensor:
        ids = np.asarray(token_ids, dtype=np.int64)
        cfg, w = self.config, self.weights
        if ids.ndim != 1 or ids.size == 0:
            raise ValueError("token sequence must be a non-empty 1-D id list")
        if ids[0] != CLS_ID:
            raise ValueError(f"sequence must start with the CLS id ({CLS_ID}), got {ids[0]}")
        if ids.min() < 0 or ids.max() >= cfg.vocab_size:
            bad = ids[(ids < 0) | (ids >= cfg.vocab_size)][0]
            raise ValueError(f"unknown token id {bad} for vocabulary of size {cfg.vocab_size}")
        prompt_len = layer_prompts[0].shape[0] if layer_prompts else 0
        if ids.size + prompt_len > cfg.max_seq_len:
            raise ValueError(
                f"sequence too long: {ids.size} tokens + {prompt_len} prompt slots "
                f"exceed max_seq_len {cfg.max_seq_len}"
            )

        h = ag.add(ag.embedding(w["token_emb"], ids), ag.slice_rows(w["pos_emb"], 0, ids.size))
        h = ag.dropout(h, cfg.dropout_rate, rng, train)
        for i in range(cfg.num_layers):
            prompt = layer_prompts[i] if layer_prompts else None
            h = self._layer(i, h, prompt, train, rng)
        return ag.layer_norm(h, w["final_ln.gain"], w["final_ln.bias"])

    def _layer(
        self, index: int, h: Tensor, prompt: Tensor | None, train: bool, rng: DropoutRng | None
    ) -> Tensor:
        cfg, w = self.config, self.weights
        p = f"layer{index}."
        q = ag.add(ag.matmul(h, w[p + "wq"]), w[p + "bq"])
        k = ag.add(ag.matmul(h, w[p + "wk"]), w[p + "bk"])
        v = ag.add(ag.matmul(h, w[p + "wv"]), w[p + "bv"])
        if prompt is not None and prompt.shape[0] > 0:
            k = ag.concat([prompt, k], axis=0)
            v = ag.concat([prompt, v], axis=0)

        head_dim = cfg.embed_dim // cfg.num_heads
        heads = []
        for head in range(cfg.num_heads):
            lo, hi = head * head_dim, (head + 1) * head_dim
            probs = attention_probs(ag.slice_cols(q, lo, hi), ag.slice_cols(k, lo, hi), head_dim)
            heads.append(ag.matmul(probs, ag.slice_cols(v, lo, hi)))
        attn = heads[0] if len(heads) == 1 else ag.concat(heads, axis=1)
        attn = ag.add(ag.matmul(attn, w[p + "wo"]), w[p + "bo"])
        attn = ag.dropout(attn, cfg.dropout_rate, rng, train)
        h = ag.layer_norm(ag.add(h, attn), w[p + "ln1_gain"], w[p + "ln1_bias"])

        act = ag.gelu if cfg.activation == "gelu" else ag.relu
        f = act(ag.add(ag.matmul(h, w[p + "w1"]), w[p + "b1"]))
        f = ag.add(ag.matmul(f, w[p + "w2"]), w[p + "b2"])
        f = ag.dropout(f, cfg.dropout_rate, rng, train)
        return ag.layer_norm(ag.add(h, f), w[p + "ln2_gain"], w[p + "ln2_bias"])


class ClassificationHead:
    """Always-trainable linear head over the CLS vector."""

    def __init__(self, projection: Tensor, bias: Tensor, dropout_rate: float = 0.1):
        self.projection = projection
        self.bias = bias
        self.dropout_rate = dropout_rate
        self.projection.requires_grad = True
        self.bias.requires_grad = True

    @classmethod
    def init(
        cls, embed_dim: int, num_classes: int, dropout_rate: float, rng: np.random.Generator
    ) -> "ClassificationHead":
        proj = Tensor(rng.normal(0.0, INIT_STD, size=(embed_dim, num_classes)))
        bias = Tensor(np.zeros(num_classes))
        return cls(proj, bias, dropout_rate)

    @property
    def num_classes(self) -> int:
        return self.bias.shape[0]

    def __call__(self, x: Tensor, train: bool = False, rng: DropoutRng | None = None) -> Tensor:
        """logits = dropout(x) @ projection + bias; accepts (e,) or (batch, e)."""
        single = len(x.shape) == 1
        if single:
            x = ag.reshape(x, (1, x.shape[0]))
        x = ag.dropout(x, self.dropout_rate, rng, train)
        logits = ag.add(ag.matmul(x, self.projection), self.bias)
        if single:
            logits = ag.reshape(logits, (self.num_classes,))
        return logits

    def parameters(self) -> list[Tensor]:
        return [self.projection, self.bias]


def trainable_parameter_count(weights: EncoderWeights | None, head, prompt_state) -> int:
    """Number of scalars with requires_grad set, enumerated over all parts."""
    total = 0
    for part in (weights, head, prompt_state):
        if part is None:
            continue
        for t in part.parameters():
            if t.requires_grad:
                total += t.size
    return total


def pretrain_masked_token(
    encoder: TransformerEncoder,
    sequences: Iterable[Sequence[int]],
    steps: int = 300,
    seed: int = 0,
    lr: float = 1e-3,
) -> None:
    """Brief masked-token warm-up so CLS states carry input-dependent structure.

    One random non-CLS position per step is replaced with the mask id and
    predicted back through the (tied) token embedding table. Weights are
    unfrozen for the duration and re-frozen afterwards.
    """
    from .optim import Adam  # local import to avoid a cycle

    pool = [np.asarray(s, dtype=np.int64) for s in sequences if len(s) > 1]
    if not pool:
        raise ValueError("masked-token warm-up needs at least one sequence with a word")
    was_frozen = encoder.weights.frozen
    encoder.weights.set_frozen(False)
    opt = Adam(encoder.weights.parameters(), lr=lr)
    rng = np.random.default_rng((seed, 77))
    token_emb = encoder.weights["token_emb"]
    for _ in range(steps):
        ids = pool[int(rng.integers(0, len(pool)))].copy()
        pos = int(rng.integers(1, ids.size))
        target = int(ids[pos])
        ids[pos] = MASK_ID
        _, states = encoder.encode_plain(ids)
        hidden = ag.slice_rows(states, pos, pos + 1)
        logits = ag.matmul(hidden, ag.transpose(token_emb))
        loss = ag.softmax_cross_entropy(logits, [target])
        opt.zero_grad()
        ag.backward(loss)
        opt.step()
    encoder.weights.set_frozen(was_frozen)
