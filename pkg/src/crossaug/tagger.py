"""Desk-scale NER tagger and the three-condition evaluation harness.

The tagger is a bi-directional recurrent token classifier trained with
token-level cross-entropy; it exists to measure how much generated data
helps, not to chase benchmark scores. The harness trains Source-only,
Source+Generated, and Target-only taggers under identical settings and
reports entity-level micro F1 on a target-domain test set.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import nn
from .corpus import (
    OUTSIDE,
    Corpus,
    LabeledSentence,
    extract_entities,
    merge_corpora,
    validate_bio,
)
from .vocab import PAD_ID, SPECIAL_TOKENS, Vocabulary, load_vocab, save_vocab


@dataclass(frozen=True)
class TaggerConfig:
    embed_dim: int = 64
    hidden_dim: int = 128
    dropout: float = 0.1
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    max_vocab: int = 10000

    def __post_init__(self):
        if self.embed_dim < 1 or self.hidden_dim < 1:
            raise ValueError("tagger dimensions must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid epoch or batch settings")


@dataclass(frozen=True)
class F1Report:
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "F1Report":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(tp, fp, fn, precision, recall, f1)


def build_word_vocab(corpus: Corpus, max_size: int = 10000) -> Vocabulary:
    """Frequency vocabulary over surface words (ties by first occurrence)."""
    counts = Counter()
    first_seen = {}
    for sentence in corpus:
        for word in sentence.words:
            if word in SPECIAL_TOKENS:
                continue
            counts[word] += 1
            first_seen.setdefault(word, len(first_seen))
    ranked = sorted(counts, key=lambda w: (-counts[w], first_seen[w]))
    room = max(0, max_size - len(SPECIAL_TOKENS))
    return Vocabulary(tuple(SPECIAL_TOKENS) + tuple(ranked[:room]))


def label_inventory(corpus: Corpus) -> tuple:
    labels = {label for sentence in corpus for label in sentence.labels}
    labels.add(OUTSIDE)
    return tuple(sorted(labels))


def repair_bio(labels) -> list:
    """Rewrite orphan I-T labels to B-T so the result is always valid BIO."""
    repaired = []
    for i, label in enumerate(labels):
        if label.startswith("I-"):
            prev = repaired[i - 1] if i else OUTSIDE
            if prev != "B-" + label[2:] and prev != label:
                label = "B-" + label[2:]
        repaired.append(label)
    return repaired


class Tagger:
    """Bi-directional recurrent per-token classifier over a fixed label set."""

    def __init__(self, vocab: Vocabulary, labels: tuple, config: TaggerConfig):
        self.vocab = vocab
        self.labels = tuple(labels)
        self.config = config
        self._label_ix = {label: i for i, label in enumerate(self.labels)}
        rng = nn.derive_rng(config.seed, "tagger-init")
        e, h = config.embed_dim, config.hidden_dim
        self.params = {
            "embed": ad.parameter(nn.embedding_init(rng, len(vocab), e)),
        }
        for direction in ("fwd", "bwd"):
            for name, value in nn.lstm_init(rng, e, h).items():
                self.params[f"{direction}.{name}"] = ad.parameter(value)
        self.params["out.W"] = ad.parameter(nn.xavier(rng, 2 * h, len(self.labels)))
        self.params["out.b"] = ad.parameter(np.zeros(len(self.labels)))

    def state_dict(self) -> dict:
        return {name: p.value.copy() for name, p in self.params.items()}

    def load_state_dict(self, arrays: dict) -> None:
        if set(arrays) != set(self.params):
            raise ValueError("tagger parameter names do not match")
        for name, value in arrays.items():
            if value.shape != self.params[name].value.shape:
                raise ValueError(f"shape mismatch for {name}")
            self.params[name].value = np.array(value, dtype=np.float64)

    def _states(self, ids: np.ndarray, lengths: np.ndarray, train: bool, rng):
        b, t = ids.shape
        mask = (np.arange(t)[None, :] < lengths[:, None]).astype(np.float64)
        emb = ad.reshape(ad.gather_rows(self.params["embed"], ids.reshape(-1)),
                         (b, t, self.config.embed_dim))
        if train:
            emb = nn.dropout(emb, self.config.dropout, rng)
        keeps = [ad.constant(mask[:, i : i + 1]) for i in range(t)]
        skips = [ad.constant(1.0 - mask[:, i : i + 1]) for i in range(t)]
        zero = ad.constant(np.zeros((b, self.config.hidden_dim)))
        states_by_dir = []
        for direction, order in (("fwd", range(t)), ("bwd", range(t - 1, -1, -1))):
            W = self.params[f"{direction}.W"]
            U = self.params[f"{direction}.U"]
            bias = self.params[f"{direction}.b"]
            h, c = zero, zero
            states = [None] * t
            for i in order:
                h_new, c_new = nn.lstm_step(W, U, bias, ad.slice_step(emb, i), h, c)
                h = nn.masked_blend(h_new, h, keeps[i], skips[i])
                c = nn.masked_blend(c_new, c, keeps[i], skips[i])
                states[i] = h
            states_by_dir.append(states)
        steps = [ad.concat([states_by_dir[0][i], states_by_dir[1][i]], axis=1)
                 for i in range(t)]
        stacked = ad.stack_steps(steps)
        if train:
            stacked = nn.dropout(stacked, self.config.dropout, rng)
        return stacked, mask

    def _log_probs(self, ids, lengths, train=False, rng=None):
        b, t = ids.shape
        states, mask = self._states(ids, lengths, train, rng)
        flat = ad.reshape(states, (b * t, 2 * self.config.hidden_dim))
        logits = nn.linear(flat, self.params["out.W"], self.params["out.b"])
        return ad.log_softmax(logits), mask

    def loss_batch(self, ids, lengths, label_ids, rng) -> ad.Node:
        """Mean token NLL over non-pad positions."""
        logp, mask = self._log_probs(ids, lengths, train=True, rng=rng)
        flat_mask = mask.reshape(-1)
        safe = np.where(flat_mask > 0, label_ids.reshape(-1), 0)
        picked = ad.pick(logp, safe)
        total = ad.sum_all(ad.mul(picked, ad.constant(flat_mask)))
        return ad.affine(total, -1.0 / flat_mask.sum())

    def tag(self, words) -> list:
        """Per-token argmax labels, repaired to valid BIO."""
        if not words:
            raise ValueError("cannot tag an empty word sequence")
        return self.tag_batch([list(words)])[0]

    def tag_batch(self, word_rows) -> list:
        rows = [self.vocab.encode(words) for words in word_rows]
        ids, lengths = nn.pad_batch(rows, PAD_ID)
        with ad.no_grad():
            logp, _ = self._log_probs(ids, lengths)
        choices = logp.value.argmax(axis=-1).reshape(ids.shape)
        out = []
        for row, n in zip(choices, lengths):
            out.append(repair_bio([self.labels[i] for i in row[:n]]))
        return out

    def tag_corpus(self, corpus: Corpus, batch_size: int = 64) -> Corpus:
        predicted = []
        sentences = list(corpus)
        for start in range(0, len(sentences), batch_size):
            chunk = sentences[start : start + batch_size]
            labeled = self.tag_batch([list(s.words) for s in chunk])
            predicted.extend(
                LabeledSentence(s.words, tuple(labels))
                for s, labels in zip(chunk, labeled)
            )
        return Corpus(f"{corpus.domain_id}-predicted", tuple(predicted), corpus.entity_types)


def train_tagger(train: Corpus, cfg: TaggerConfig, dev: Corpus | None = None) -> Tagger:
    """Token-level cross-entropy training, deterministic under cfg.seed.

    With a dev corpus the best dev micro-F1 checkpoint across epochs is
    kept; otherwise the final parameters are returned.
    """
    if len(train) == 0:
        raise ValueError("tagger training corpus is empty")
    for i, sentence in enumerate(train):
        validate_bio(sentence.labels, train.entity_types, i)
    vocab = build_word_vocab(train, cfg.max_vocab)
    labels = label_inventory(train)
    tagger = Tagger(vocab, labels, cfg)
    opt = nn.Adam(tagger.params, lr=cfg.learning_rate)

    word_rows = [vocab.encode(s.words) for s in train]
    label_rows = [[tagger._label_ix[l] for l in s.labels] for s in train]
    best_f1 = -1.0
    best_params = None
    for epoch in range(cfg.epochs):
        rng = nn.derive_rng(cfg.seed, "tagger-epoch", epoch)
        order = rng.permutation(len(word_rows))
        for start in range(0, len(order), cfg.batch_size):
            picked = order[start : start + cfg.batch_size]
            ids, lengths = nn.pad_batch([word_rows[i] for i in picked], PAD_ID)
            targets, _ = nn.pad_batch([label_rows[i] for i in picked], 0)
            loss = tagger.loss_batch(ids, lengths, targets, rng)
            opt.zero_grad()
            ad.backward(loss)
            opt.step()
        if dev is not None:
            score = micro_f1(dev, tagger.tag_corpus(dev)).f1
            if score > best_f1:
                best_f1 = score
                best_params = tagger.state_dict()
    if best_params is not None:
        tagger.load_state_dict(best_params)
    return tagger


def micro_f1(gold: Corpus, predicted: Corpus) -> F1Report:
    """Entity-level exact (span, type) matching pooled over the corpus."""
    if len(gold) != len(predicted):
        raise ValueError("gold and predicted corpora differ in sentence count")
    tp = fp = fn = 0
    for i, (g, p) in enumerate(zip(gold, predicted)):
        if len(g.words) != len(p.words):
            raise ValueError(f"sentence {i}: length mismatch between gold and predicted")
        gold_spans = {(s.start, s.end, s.entity_type) for s in extract_entities(g)}
        pred_spans = {(s.start, s.end, s.entity_type) for s in extract_entities(p)}
        tp += len(gold_spans & pred_spans)
        fp += len(pred_spans - gold_spans)
        fn += len(gold_spans - pred_spans)
    return F1Report.from_counts(tp, fp, fn)


def token_accuracy(gold: Corpus, predicted: Corpus) -> float:
    total = correct = 0
    for g, p in zip(gold, predicted):
        for a, b in zip(g.labels, p.labels):
            total += 1
            correct += a == b
    return correct / total if total else 0.0


@dataclass(frozen=True)
class ExperimentResult:
    """Micro-F1 of the three training conditions on the target test set."""

    source: F1Report
    source_gen: F1Report
    target: F1Report
    source_size: int
    source_gen_size: int
    target_size: int

    @property
    def gain_points(self) -> float:
        """Source+Generated minus Source-only, in F1 percentage points."""
        return 100.0 * (self.source_gen.f1 - self.source.f1)

    def to_tsv(self) -> str:
        rows = [
            ("source", self.source_size, self.source.f1, None),
            ("source+generated", self.source_gen_size, self.source_gen.f1, self.gain_points),
            ("target", self.target_size, self.target.f1, None),
        ]
        lines = ["condition\ttrain_size\tf1\tgain"]
        for name, size, f1, gain in rows:
            gain_text = f"{gain:+.2f}" if gain is not None else "-"
            lines.append(f"{name}\t{size}\t{100.0 * f1:.2f}\t{gain_text}")
        return "".join(line + "\n" for line in lines)


def run_experiment(src: Corpus, tgt_train: Corpus, gen: Corpus, tgt_dev: Corpus,
                   tgt_test: Corpus, cfg: TaggerConfig) -> ExperimentResult:
    """Train Source, Source+Generated, and Target taggers; score on tgt_test.

    All three share cfg (including the seed) and select their checkpoint by
    dev micro-F1, so an empty generated corpus makes the first two
    conditions exactly identical.
    """
    combined = merge_corpora(src, gen) if len(gen) else src
    reports = []
    for corpus in (src, combined, tgt_train):
        tagger = train_tagger(corpus, cfg, dev=tgt_dev)
        reports.append(micro_f1(tgt_test, tagger.tag_corpus(tgt_test)))
    return ExperimentResult(
        source=reports[0],
        source_gen=reports[1],
        target=reports[2],
        source_size=len(src),
        source_gen_size=len(combined),
        target_size=len(tgt_train),
    )


def save_tagger(tagger: Tagger, out_dir) -> None:
    """Persist parameters, vocabulary, and settings under a directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ad.save_arrays(out / "tagger.ckpt", tagger.state_dict())
    save_vocab(tagger.vocab, out / "tagger.vocab")
    meta = {"labels": list(tagger.labels), "config": tagger.config.__dict__}
    (out / "tagger.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def load_tagger(in_dir) -> Tagger:
    path = Path(in_dir)
    meta = json.loads((path / "tagger.json").read_text(encoding="utf-8"))
    vocab = load_vocab(path / "tagger.vocab")
    tagger = Tagger(vocab, tuple(meta["labels"]), TaggerConfig(**meta["config"]))
    tagger.load_state_dict(ad.load_arrays(path / "tagger.ckpt"))
    return tagger
