"""Training loop, evaluation, ablation sweep and metrics persistence.

``train`` runs one configuration over every seed in the config: fresh prompt
and head parameters per seed, mini-batch Adam over cross-entropy with
per-epoch exponential learning-rate decay and global-norm gradient clipping,
best-dev checkpoint selection (ties go to the earlier epoch), and a frozen
backbone throughout. ``ablate`` repeats that for each prompt-composition
variant with shared seeds and data.

Outputs under the run directory:

    metrics.jsonl   one JSON record per line with exactly the keys
                    (variant, seed, epoch, split, accuracy, loss); fully
                    deterministic, byte-identical across reruns
    result.json     aggregated RunResult, including wall-clock timing
    summary.txt     human-readable table
    model_seed<k>.bin   checkpoint of the best state for each seed

Input texts are truncated to fit max_seq_len minus the prompt length.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import DropoutRng, Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .data import FewShotSplit, LabeledDataset, read_corpus
from .encoder import (
    ClassificationHead,
    EncoderConfig,
    EncoderWeights,
    TransformerEncoder,
    pretrain_masked_token,
    trainable_parameter_count,
)
from .keywords import KeywordSet, vectorize_keywords
from .optim import Adam, ExponentialDecay, clip_global_norm
from .prompts import (
    VARIANT_ORDER,
    PromptState,
    Variant,
    compose_with_gates,
    init_prompt_state,
    per_layer_prompts,
)
from .tokenizer import Tokenizer


@dataclass
class RunConfig:
    variant: str = "switchprompt"
    # encoder
    embed_dim: int = 32
    num_layers: int = 2
    num_heads: int = 2
    ffn_dim: int = 64
    max_seq_len: int = 128
    encoder_dropout: float = 0.1
    activation: str = "gelu"
    vocab_cap: int = 2000
    # prompts
    soft_prompt_len: int = 8
    num_keywords: int = 10
    alpha: float = -1.0
    train_keywords: bool = False
    gate_input: str = "plain"  # where the gate CLS comes from: plain | prompted
    keyword_vector_mode: str = "embedding"  # embedding | cls
    # optimization
    batch_size: int = 32
    head_dropout: float = 0.1
    epochs: int = 50
    lr: float = 5e-3
    lr_gamma: float = 0.95
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 1.0
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    # backbone
    freeze_backbone: bool = True
    backbone_init: str = "random"  # random | mlm
    backbone_seed: int = 1234
    backbone_init_std: float = 0.3
    mlm_steps: int = 300
    mlm_lr: float = 1e-3
    # data and io
    shots: int = 4
    split_seed: int = 0
    general_corpus: str = ""
    domain_corpus: str = ""
    dataset: str = ""
    keywords_file: str = ""
    out_dir: str = ""
    save_checkpoints: bool = True

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds list must not be empty")
        Variant.parse(self.variant)

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def parse_config_text(text: str) -> dict:
    """`key = value` lines; values are parsed as JSON when possible."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = key.strip(), value.strip()
        try:
            values[key] = json.loads(value)
        except json.JSONDecodeError:
            values[key] = value
    return values


def load_config(path: str | Path) -> RunConfig:
    return RunConfig.from_dict(parse_config_text(Path(path).read_text(encoding="utf-8")))


@dataclass
class RunResult:
    variant: str
    seeds: list[int]
    dev_accuracies: list[float]
    test_accuracies: list[float]
    test_mean: float
    test_std: float
    dev_mean: float
    best_epochs: list[int]
    trainable_params: int
    seconds_per_epoch: float
    config: dict

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class PromptedClassifier:
    """A trained (or training) bundle: frozen backbone, prompts, head.

    The CLS representation that conditions the gates comes from an
    unprompted eval-mode pass by default and is cached per text (legal
    because the backbone is fixed). With ``gate_input="prompted"`` it comes
    from a prompted pass whose gates are pinned at 0.5, recomputed per call.
    """

    def __init__(
        self,
        encoder: TransformerEncoder,
        head: ClassificationHead,
        prompt_state: PromptState,
        tokenizer: Tokenizer,
        label_names: list[str],
        gate_input: str = "plain",
        repr_cache: dict[str, Tensor] | None = None,
    ):
        if gate_input not in ("plain", "prompted"):
            raise ValueError(f"unknown gate_input {gate_input!r}")
        self.encoder = encoder
        self.head = head
        self.prompt_state = prompt_state
        self.tokenizer = tokenizer
        self.label_names = list(label_names)
        self.label_map = {name: i for i, name in enumerate(self.label_names)}
        self.gate_input = gate_input
        # keyed by text; only valid as long as the backbone stays fixed
        self._repr_cache: dict[str, Tensor] = repr_cache if repr_cache is not None else {}

    @property
    def _needs_gates(self) -> bool:
        state = self.prompt_state
        return state.gate1_weights is not None or state.gate2_weights is not None

    def _ids(self, text: str) -> list[int]:
        budget = self.encoder.config.max_seq_len - self.prompt_state.prompt_len
        return self.tokenizer.encode(text)[:budget]

    def sentence_repr(self, text: str) -> Tensor | None:
        if not self._needs_gates:
            return None
        if self.gate_input == "plain":
            if not self.encoder.weights.frozen:
                # backbone drifts during training: no caching, keep the graph
                cls_vec, _ = self.encoder.encode_plain(self._ids(text))
                return cls_vec
            cached = self._repr_cache.get(text)
            if cached is None:
                with ag.no_grad():
                    cls_vec, _ = self.encoder.encode_plain(self._ids(text))
                cached = Tensor(cls_vec.data)
                self._repr_cache[text] = cached
            return cached
        # "prompted": CLS of a pass whose prompts are composed with neutral gates
        half = Tensor(0.5)
        prompts = [
            compose_with_gates(self.prompt_state, half, half, layer)
            for layer in range(self.encoder.config.num_layers)
        ]
        return self.encoder.encode_prompted(self._ids(text), prompts)

    def logits(self, texts: list[str], train: bool = False, rng: DropoutRng | None = None) -> Tensor:
        rows = []
        num_layers = self.encoder.config.num_layers
        for text in texts:
            prompts = per_layer_prompts(self.prompt_state, self.sentence_repr(text), num_layers)
            cls_vec = self.encoder.encode_prompted(self._ids(text), prompts, train=train, rng=rng)
            rows.append(ag.reshape(cls_vec, (1, self.encoder.config.embed_dim)))
        batch = rows[0] if len(rows) == 1 else ag.concat(rows, axis=0)
        return self.head(batch, train=train, rng=rng)

    def predict(self, texts: list[str]) -> np.ndarray:
        with ag.no_grad():
            return np.argmax(self.logits(texts).data, axis=1)

    def parameters(self) -> list[Tensor]:
        return (
            self.prompt_state.parameters()
            + self.head.parameters()
            + self.encoder.weights.parameters()
        )


def evaluate(model: PromptedClassifier, dataset: LabeledDataset, chunk: int = 128) -> float:
    """Fraction of argmax-correct predictions, dropout disabled."""
    if not dataset.examples:
        raise ValueError("cannot evaluate on an empty dataset")
    labels = _class_indices(model, dataset)
    correct = 0
    texts = dataset.texts()
    for start in range(0, len(texts), chunk):
        predicted = model.predict(texts[start : start + chunk])
        correct += int((predicted == np.asarray(labels[start : start + chunk])).sum())
    return correct / len(texts)


def _class_indices(model: PromptedClassifier, dataset: LabeledDataset) -> list[int]:
    unknown = [label for _, label in dataset.examples if label not in model.label_map]
    if unknown:
        raise ValueError(
            f"label-space mismatch: dataset labels {sorted(set(unknown))} "
            f"unknown to the model ({model.label_names})"
        )
    return [model.label_map[label] for _, label in dataset.examples]


def _evaluate_with_loss(model: PromptedClassifier, dataset: LabeledDataset, chunk: int = 128):
    if not dataset.examples:
        raise ValueError("cannot evaluate on an empty dataset")
    labels = _class_indices(model, dataset)
    texts = dataset.texts()
    correct, loss_sum = 0, 0.0
    with ag.no_grad():
        for start in range(0, len(texts), chunk):
            part_labels = labels[start : start + chunk]
            logits = model.logits(texts[start : start + chunk])
            correct += int((np.argmax(logits.data, axis=1) == np.asarray(part_labels)).sum())
            loss_sum += ag.softmax_cross_entropy(logits, part_labels).item() * len(part_labels)
    return correct / len(texts), loss_sum / len(texts)


def _build_backbone(config: RunConfig, split: FewShotSplit, keyword_set: KeywordSet | None):
    """Tokenizer + (optionally warmed-up) frozen encoder, all deterministic."""
    if config.general_corpus and config.domain_corpus:
        texts = read_corpus(config.general_corpus) + read_corpus(config.domain_corpus)
    else:
        texts = split.train.texts() + split.dev.texts() + split.test.texts()
    if keyword_set is not None:
        texts = texts + [" ".join(keyword_set.words)]
    tokenizer = Tokenizer.build(texts, max_vocab=config.vocab_cap)
    enc_cfg = EncoderConfig(
        vocab_size=tokenizer.vocab_size,
        embed_dim=config.embed_dim,
        num_layers=config.num_layers,
        num_heads=config.num_heads,
        ffn_dim=config.ffn_dim,
        max_seq_len=config.max_seq_len,
        dropout_rate=config.encoder_dropout,
        activation=config.activation,
        init_std=config.backbone_init_std,
    )
    weights = EncoderWeights.init(enc_cfg, seed=config.backbone_seed, frozen=False)
    encoder = TransformerEncoder(enc_cfg, weights)
    if config.backbone_init == "mlm":
        sequences = [tokenizer.encode(t)[: config.max_seq_len] for t in texts]
        pretrain_masked_token(
            encoder, sequences, steps=config.mlm_steps, seed=config.backbone_seed, lr=config.mlm_lr
        )
    elif config.backbone_init != "random":
        raise ValueError(f"unknown backbone_init {config.backbone_init!r}")
    weights.set_frozen(config.freeze_backbone)
    return tokenizer, encoder


def _variant_uses_keywords(variant: Variant) -> bool:
    return variant is not Variant.SOFT_ONLY


def train(
    config: RunConfig,
    split: FewShotSplit,
    keyword_set: KeywordSet | None,
    out_dir: str | Path | None = None,
) -> RunResult:
    """Run every seed of one configuration; returns the aggregated result."""
    if out_dir is None and config.out_dir:
        out_dir = config.out_dir
    variant = Variant.parse(config.variant)
    if _variant_uses_keywords(variant):
        if keyword_set is None:
            raise ValueError(f"variant {variant.value} needs a keyword set")
        if keyword_set.n != config.num_keywords:
            raise ValueError(
                f"keyword count mismatch: config expects {config.num_keywords}, "
                f"file has {keyword_set.n}"
            )

    tokenizer, encoder = _build_backbone(config, split, keyword_set)
    kw_vectors = None
    if _variant_uses_keywords(variant):
        kw_vectors = vectorize_keywords(
            keyword_set, tokenizer, encoder, method=config.keyword_vector_mode
        )

    label_names = list(split.train.label_map)
    records: list[dict] = []
    dev_accs, test_accs, best_epochs, epoch_times = [], [], [], []
    params_count = None
    repr_cache: dict[str, Tensor] = {}

    for seed in config.seeds:
        if not config.freeze_backbone:
            # an unfrozen backbone is mutated by training: every seed gets a
            # fresh, identically initialized copy
            tokenizer, encoder = _build_backbone(config, split, keyword_set)
        shared_cache = repr_cache if config.gate_input == "plain" else None
        model, opt, sched = _init_seed_model(
            config, encoder, tokenizer, kw_vectors, label_names, seed, shared_cache
        )
        if params_count is None:
            params_count = trainable_parameter_count(encoder.weights, model.head, model.prompt_state)
        seed_result = _train_one_seed(config, split, model, opt, sched, seed, records)
        dev_accs.append(seed_result["dev"])
        test_accs.append(seed_result["test"])
        best_epochs.append(seed_result["best_epoch"])
        epoch_times.append(seed_result["seconds_per_epoch"])
        if out_dir is not None and config.save_checkpoints:
            _save_model(Path(out_dir) / f"model_seed{seed}.bin", config, model, seed, seed_result)

    result = RunResult(
        variant=variant.value,
        seeds=list(config.seeds),
        dev_accuracies=dev_accs,
        test_accuracies=test_accs,
        test_mean=float(np.mean(test_accs)),
        test_std=float(np.std(test_accs)),
        dev_mean=float(np.mean(dev_accs)),
        best_epochs=best_epochs,
        trainable_params=int(params_count),
        seconds_per_epoch=float(np.mean(epoch_times)) if epoch_times else 0.0,
        config=config.to_dict(),
    )
    if out_dir is not None:
        write_run_outputs(Path(out_dir), records, result)
    return result


def _init_seed_model(config, encoder, tokenizer, kw_vectors, label_names, seed, repr_cache=None):
    rng = np.random.default_rng((seed, 11))
    state = init_prompt_state(
        config.variant,
        num_layers=config.num_layers,
        embed_dim=config.embed_dim,
        soft_len=config.soft_prompt_len,
        keyword_vectors=kw_vectors,
        rng=rng,
        train_keywords=config.train_keywords,
    )
    head = ClassificationHead.init(config.embed_dim, len(label_names), config.head_dropout, rng)
    model = PromptedClassifier(
        encoder, head, state, tokenizer, label_names, config.gate_input, repr_cache
    )
    opt = Adam(
        model.parameters(),
        lr=config.lr,
        betas=(config.adam_beta1, config.adam_beta2),
        eps=config.adam_eps,
    )
    sched = ExponentialDecay(opt, gamma=config.lr_gamma)
    return model, opt, sched


def _train_one_seed(config, split, model, opt, sched, seed, records) -> dict:
    train_set = split.train
    labels = _class_indices(model, train_set)
    texts = train_set.texts()
    shuffle_rng = np.random.default_rng((seed, 22))
    drop = DropoutRng(seed)
    params = opt.params

    def snapshot():
        return [p.data.copy() for p in params]

    best = {"acc": -1.0, "epoch": 0, "params": snapshot()}
    global_step = 0
    elapsed = 0.0

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        perm = shuffle_rng.permutation(len(texts))
        loss_sum, correct = 0.0, 0
        for start in range(0, len(perm), config.batch_size):
            chosen = perm[start : start + config.batch_size]
            batch_texts = [texts[i] for i in chosen]
            batch_labels = [labels[i] for i in chosen]
            drop.begin_step(global_step)
            opt.zero_grad()
            logits = model.logits(batch_texts, train=True, rng=drop)
            loss = ag.softmax_cross_entropy(logits, batch_labels)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise RuntimeError(
                    f"training diverged: non-finite loss at seed {seed}, step {global_step}"
                )
            ag.backward(loss)
            clip_global_norm(params, config.grad_clip)
            opt.step()
            global_step += 1
            loss_sum += loss_value * len(chosen)
            correct += int((np.argmax(logits.data, axis=1) == np.asarray(batch_labels)).sum())
        sched.step()
        elapsed += time.perf_counter() - started

        dev_acc, dev_loss = _evaluate_with_loss(model, split.dev)
        records.append(
            _record(config.variant, seed, epoch, "train", correct / len(texts), loss_sum / len(texts))
        )
        records.append(_record(config.variant, seed, epoch, "dev", dev_acc, dev_loss))
        if dev_acc > best["acc"]:
            best = {"acc": dev_acc, "epoch": epoch, "params": snapshot()}

    for p, data in zip(params, best["params"]):
        p.data = data.copy()
    dev_acc, _ = _evaluate_with_loss(model, split.dev)
    test_acc, test_loss = _evaluate_with_loss(model, split.test)
    records.append(_record(config.variant, seed, best["epoch"], "test", test_acc, test_loss))
    return {
        "dev": dev_acc,
        "test": test_acc,
        "best_epoch": best["epoch"],
        "seconds_per_epoch": elapsed / config.epochs if config.epochs else 0.0,
    }


def _record(variant, seed, epoch, part, accuracy, loss) -> dict:
    return {
        "variant": variant,
        "seed": int(seed),
        "epoch": int(epoch),
        "split": part,
        "accuracy": float(accuracy),
        "loss": float(loss),
    }


def _save_model(path: Path, config: RunConfig, model: PromptedClassifier, seed, seed_result) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors: dict[str, np.ndarray] = dict(model.encoder.weights.named_arrays())
    tensors.update(model.prompt_state.named_arrays())
    tensors["head.weight"] = model.head.projection.data
    tensors["head.bias"] = model.head.bias.data
    meta = {
        "config": config.to_dict(),
        "vocab": model.tokenizer.id_to_word,
        "labels": model.label_names,
        "variant": model.prompt_state.variant.value,
        "seed": int(seed),
        "best_epoch": int(seed_result["best_epoch"]),
    }
    save_checkpoint(path, tensors, meta)


def load_model(path: str | Path) -> PromptedClassifier:
    """Rebuild a PromptedClassifier from a training checkpoint."""
    tensors, meta = load_checkpoint(path)
    config = RunConfig.from_dict(meta["config"])
    tokenizer = Tokenizer.from_full_vocab(meta["vocab"])
    enc_cfg = EncoderConfig(
        vocab_size=tokenizer.vocab_size,
        embed_dim=config.embed_dim,
        num_layers=config.num_layers,
        num_heads=config.num_heads,
        ffn_dim=config.ffn_dim,
        max_seq_len=config.max_seq_len,
        dropout_rate=config.encoder_dropout,
        activation=config.activation,
        init_std=config.backbone_init_std,
    )
    backbone = {
        name: Tensor(arr)
        for name, arr in tensors.items()
        if not name.startswith(("prompt.", "head."))
    }
    weights = EncoderWeights(enc_cfg, backbone, frozen=True)
    encoder = TransformerEncoder(enc_cfg, weights)

    variant = Variant.parse(meta["variant"])
    soft = None
    if f"prompt.layer0.soft" in tensors:
        soft = [
            Tensor(tensors[f"prompt.layer{i}.soft"], requires_grad=True)
            for i in range(config.num_layers)
        ]
    kw = Tensor(tensors["prompt.keywords"]) if "prompt.keywords" in tensors else None
    g1 = Tensor(tensors["prompt.gate1"], requires_grad=True) if "prompt.gate1" in tensors else None
    g2 = Tensor(tensors["prompt.gate2"], requires_grad=True) if "prompt.gate2" in tensors else None
    state = PromptState(variant, soft, kw, g1, g2)
    head = ClassificationHead(
        Tensor(tensors["head.weight"]), Tensor(tensors["head.bias"]), config.head_dropout
    )
    return PromptedClassifier(encoder, head, state, tokenizer, meta["labels"], config.gate_input)


def write_run_outputs(out_dir: Path, records: list[dict], result: RunResult) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics(out_dir / "metrics.jsonl", records)
    (out_dir / "result.json").write_text(
        json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / "summary.txt").write_text(format_results_table([result]) + "\n", encoding="utf-8")


def write_metrics(path: Path, records: list[dict]) -> None:
    lines = [json.dumps(r, sort_keys=True) for r in records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def format_results_table(results: list[RunResult]) -> str:
    headers = ("variant", "test_mean", "test_std", "dev_mean", "seeds", "params", "sec/epoch")
    rows = [
        (
            r.variant,
            f"{r.test_mean:.4f}",
            f"{r.test_std:.4f}",
            f"{r.dev_mean:.4f}",
            str(len(r.seeds)),
            str(r.trainable_params),
            f"{r.seconds_per_epoch:.2f}",
        )
        for r in results
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(headers)]
    def fmt(row):
        return "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
    return "\n".join([fmt(headers)] + [fmt(row) for row in rows])


def ablate(
    config: RunConfig,
    split: FewShotSplit,
    keyword_set: KeywordSet | None,
    out_dir: str | Path | None = None,
    variants: list[Variant] | None = None,
) -> list[RunResult]:
    """Train every variant with shared seeds and data; table in fixed order."""
    variants = list(variants) if variants is not None else list(VARIANT_ORDER)
    if Variant.MIX_NO_CONCAT in variants and config.soft_prompt_len != config.num_keywords:
        raise ValueError(
            "the mix-no-concat variant needs soft_prompt_len == num_keywords "
            f"(got {config.soft_prompt_len} and {config.num_keywords}); "
            "adjust the config or drop the variant"
        )
    results = []
    for variant in variants:
        sub_dir = Path(out_dir) / variant.value if out_dir is not None else None
        results.append(train(replace(config, variant=variant.value), split, keyword_set, sub_dir))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "ablation_table.txt").write_text(
            format_results_table(results) + "\n", encoding="utf-8"
        )
    return results
