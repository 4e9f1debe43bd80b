"""Cross-domain denoising sequence autoencoder with adversarial domain alignment.

Two domains share one bi-directional LSTM encoder and one attentive LSTM
decoder; each domain keeps its own embedding table and output projection, so
the shared latent space is the only bridge between them. A small feed-forward
discriminator reads the pooled encoding and predicts which domain it came
from; training drives the encoder to make that prediction impossible, pulling
the two domains onto a common representation.

All sequence operations are batched: a batch is a list of id sequences,
right-padded internally. Per-row results never depend on the other rows or on
the padding width (pad steps are blended away in the encoder and masked out
of attention, pooling, and the losses).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nn
from .vocab import BOS_ID, EOS_ID, PAD_ID

SOURCE = "src"
TARGET = "tgt"
DOMAINS = (SOURCE, TARGET)

_NEG_INF = -1e9


@dataclass(frozen=True)
class ModelConfig:
    """Architecture sizes; vocabulary sizes come from the built vocabularies."""

    src_vocab_size: int
    tgt_vocab_size: int
    embed_dim: int = 512
    encoder_hidden: int = 1024
    decoder_hidden: int = 1024
    discriminator_hidden: int = 300
    attention_dim: int | None = None
    dropout_rate: float = 0.5

    def __post_init__(self):
        for name in ("src_vocab_size", "tgt_vocab_size", "embed_dim",
                     "encoder_hidden", "decoder_hidden", "discriminator_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.attention_dim is None:
            object.__setattr__(self, "attention_dim", self.decoder_hidden)

    def to_dict(self) -> dict:
        return {
            "src_vocab_size": self.src_vocab_size,
            "tgt_vocab_size": self.tgt_vocab_size,
            "embed_dim": self.embed_dim,
            "encoder_hidden": self.encoder_hidden,
            "decoder_hidden": self.decoder_hidden,
            "discriminator_hidden": self.discriminator_hidden,
            "attention_dim": self.attention_dim,
            "dropout_rate": self.dropout_rate,
        }


@dataclass(frozen=True)
class LossWeights:
    """Weights on the reconstruction, detransformation, and adversary terms."""

    noise: float = 1.0
    trans: float = 0.0
    adv: float = 10.0

    def __post_init__(self):
        for name in ("noise", "trans", "adv"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be non-negative")


@dataclass
class LatentStates:
    """Encoder output for one batch.

    steps[t] is the (B, 2H) state at position t; stacked is the same data as
    one (B, T, 2H) node for attention; summary is the per-row mean over real
    (non-pad) positions; mask is (B, T) with ones on real positions.
    """

    steps: list = field(repr=False)
    stacked: ad.Node = field(repr=False)
    summary: ad.Node = field(repr=False)
    mask: np.ndarray = field(repr=False)
    lengths: np.ndarray = None

    @property
    def batch_size(self) -> int:
        return self.mask.shape[0]

    def state_matrix(self, row: int = 0) -> np.ndarray:
        """The (length, 2H) state matrix for one batch row."""
        length = int(self.lengths[row])
        return self.stacked.value[row, :length, :].copy()


def _validate_batch(batch, vocab_size: int, what: str):
    if not isinstance(batch, (list, tuple)) or not batch:
        raise ValueError(f"{what} must be a non-empty list of id sequences")
    for row, seq in enumerate(batch):
        if len(seq) == 0:
            raise ValueError(f"{what} row {row} is empty")
        for i in seq:
            if not 0 <= int(i) < vocab_size:
                raise ValueError(
                    f"{what} row {row} has id {int(i)} outside vocabulary of size {vocab_size}"
                )


class CrossDomainAutoencoder:
    """Shared encoder/decoder pair with per-domain embedders and projections."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = nn.derive_rng(seed, "model-init")
        e, h, d = config.embed_dim, config.encoder_hidden, config.decoder_hidden
        a, dh = config.attention_dim, config.discriminator_hidden

        arrays: dict[str, np.ndarray] = {}
        arrays["embed.src"] = nn.embedding_init(rng, config.src_vocab_size, e)
        arrays["embed.tgt"] = nn.embedding_init(rng, config.tgt_vocab_size, e)
        for direction in ("fwd", "bwd"):
            cell = nn.lstm_init(rng, e, h)
            for key, value in cell.items():
                arrays[f"enc.{direction}.{key}"] = value
        arrays["dec.init.W"] = nn.xavier(rng, 2 * h, d)
        arrays["dec.init.b"] = np.zeros(d)
        cell = nn.lstm_init(rng, e + 2 * h, d)
        for key, value in cell.items():
            arrays[f"dec.cell.{key}"] = value
        arrays["attn.W"] = nn.xavier(rng, d, a)
        arrays["attn.U"] = nn.xavier(rng, 2 * h, a)
        arrays["attn.v"] = rng.uniform(-0.1, 0.1, size=a)
        for domain, size in ((SOURCE, config.src_vocab_size), (TARGET, config.tgt_vocab_size)):
            arrays[f"proj.{domain}.W"] = nn.xavier(rng, d, size)
            arrays[f"proj.{domain}.b"] = np.zeros(size)
        arrays["disc.hidden.W"] = nn.xavier(rng, 2 * h, dh)
        arrays["disc.hidden.b"] = np.zeros(dh)
        arrays["disc.out.W"] = nn.xavier(rng, dh, 1)
        arrays["disc.out.b"] = np.zeros(1)

        self.params: dict[str, ad.Node] = {
            name: ad.parameter(value) for name, value in arrays.items()
        }

    # -- parameter management ------------------------------------------------

    def parameter_names(self):
        return tuple(self.params)

    def generator_params(self) -> dict:
        """Everything the reconstruction path trains: embedders, encoder, decoder, projections."""
        return {k: p for k, p in self.params.items() if not k.startswith("disc.")}

    def discriminator_params(self) -> dict:
        return {k: p for k, p in self.params.items() if k.startswith("disc.")}

    def state_dict(self) -> dict:
        return {name: p.value.copy() for name, p in self.params.items()}

    def load_state_dict(self, arrays: dict) -> None:
        if set(arrays) != set(self.params):
            missing = set(self.params) - set(arrays)
            extra = set(arrays) - set(self.params)
            raise ValueError(f"parameter name mismatch: missing {missing or '{}'}, extra {extra or '{}'}")
        for name, p in self.params.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != p.value.shape:
                raise ValueError(f"{name}: shape {value.shape} != expected {p.value.shape}")
            p.value = value.copy()

    def copy(self) -> "CrossDomainAutoencoder":
        twin = CrossDomainAutoencoder(self.config, seed=0)
        twin.load_state_dict(self.state_dict())
        return twin

    # -- forward passes --------------------------------------------------------

    def _vocab_size(self, domain: str) -> int:
        self._check_domain(domain)
        return self.config.src_vocab_size if domain == SOURCE else self.config.tgt_vocab_size

    @staticmethod
    def _check_domain(domain: str):
        if domain not in DOMAINS:
            raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}")

    def _embed_steps(self, domain: str, ids: np.ndarray, train: bool, rng):
        """(B, T) ids -> dropout-regularized (B, T, E) embedding node."""
        table = self.params[f"embed.{domain}"]
        b, t = ids.shape
        flat = ad.gather_rows(table, ids.reshape(-1))
        emb = ad.reshape(flat, (b, t, self.config.embed_dim))
        if train:
            emb = nn.dropout(emb, self.config.dropout_rate, rng)
        return emb

    def encode(self, domain: str, batch, train: bool = False, rng=None) -> LatentStates:
        """Run the shared bi-directional encoder over one domain's id sequences.

        Args:
            domain: "src" or "tgt"; selects the embedding table.
            batch: list of id sequences (each non-empty, ids within the domain
                vocabulary). Sequences are padded internally.
            train: apply embedding dropout (requires rng).
            rng: generator for dropout masks.

        Returns:
            LatentStates with per-position states of width 2 * encoder_hidden.
        """
        _validate_batch(batch, self._vocab_size(domain), f"{domain} batch")
        ids, lengths = nn.pad_batch(batch, PAD_ID)
        b, t = ids.shape
        mask = (np.arange(t)[None, :] < lengths[:, None]).astype(np.float64)

        emb = self._embed_steps(domain, ids, train, rng)
        keeps = [ad.constant(mask[:, i : i + 1]) for i in range(t)]
        skips = [ad.constant(1.0 - mask[:, i : i + 1]) for i in range(t)]

        hidden = self.config.encoder_hidden
        zero = ad.constant(np.zeros((b, hidden)))
        states_by_dir = []
        for direction, order in (("fwd", range(t)), ("bwd", range(t - 1, -1, -1))):
            W = self.params[f"enc.{direction}.W"]
            U = self.params[f"enc.{direction}.U"]
            bias = self.params[f"enc.{direction}.b"]
            h, c = zero, zero
            states = [None] * t
            for i in order:
                h_new, c_new = nn.lstm_step(W, U, bias, ad.slice_step(emb, i), h, c)
                h = nn.masked_blend(h_new, h, keeps[i], skips[i])
                c = nn.masked_blend(c_new, c, keeps[i], skips[i])
                states[i] = h
            states_by_dir.append(states)

        steps = [
            ad.concat([states_by_dir[0][i], states_by_dir[1][i]], axis=1)
            for i in range(t)
        ]
        stacked = ad.stack_steps(steps)
        pooled = ad.mul(steps[0], keeps[0])
        for i in range(1, t):
            pooled = ad.add(pooled, ad.mul(steps[i], keeps[i]))
        summary = ad.mul(pooled, ad.constant(1.0 / lengths[:, None]))
        return LatentStates(steps=steps, stacked=stacked, summary=summary,
                            mask=mask, lengths=lengths)

    def _decoder_start(self, latent: LatentStates):
        s = nn.linear(latent.summary, self.params["dec.init.W"], self.params["dec.init.b"])
        c = ad.constant(np.zeros((latent.batch_size, self.config.decoder_hidden)))
        return s, c

    def _attention_setup(self, latent: LatentStates):
        precomputed = ad.matmul(latent.stacked, self.params["attn.U"])
        gap = ad.constant((1.0 - latent.mask) * _NEG_INF)
        return precomputed, gap

    def _attention_step(self, s, latent, precomputed, gap, collect=None):
        query = ad.expand_dims(ad.matmul(s, self.params["attn.W"]), 1)
        scores = ad.dot_last(ad.tanh(ad.add(query, precomputed)), self.params["attn.v"])
        alpha = ad.softmax(ad.add(scores, gap))
        if collect is not None:
            dev = float(np.abs(alpha.value.sum(axis=-1) - 1.0).max())
            collect["attn_dev"] = max(collect.get("attn_dev", 0.0), dev)
        return ad.attend(alpha, latent.stacked)

    def decode_teacher_forced(self, domain: str, latent: LatentStates, targets,
                              train: bool = False, rng=None, collect=None) -> list:
        """Log-probabilities for each next-token prediction under teacher forcing.

        Args:
            domain: output domain (embedding table and projection).
            targets: list of id sequences, each beginning with the begin
                marker; or an already padded (B, T) int array.
            collect: optional dict receiving numeric audit values
                ("prob_dev", "attn_dev": worst |row sum - 1| seen).

        Returns:
            List of T-1 nodes, each (B, vocab); entry t scores target position
            t+1 given positions up to t.
        """
        vocab_size = self._vocab_size(domain)
        if isinstance(targets, np.ndarray):
            ids = targets.astype(np.int64)
        else:
            _validate_batch(targets, vocab_size, f"{domain} targets")
            ids, _ = nn.pad_batch(targets, PAD_ID)
        if ids.shape[0] != latent.batch_size:
            raise ValueError("target batch size does not match the encoded batch")
        if ids.shape[1] < 2:
            raise ValueError("targets must contain the begin marker plus at least one token")
        if not (ids[:, 0] == BOS_ID).all():
            raise ValueError("every target must begin with the begin marker")

        emb = self._embed_steps(domain, ids, train, rng)
        proj_w = self.params[f"proj.{domain}.W"]
        proj_b = self.params[f"proj.{domain}.b"]
        precomputed, gap = self._attention_setup(latent)
        s, c = self._decoder_start(latent)

        logps = []
        for t in range(ids.shape[1] - 1):
            context = self._attention_step(s, latent, precomputed, gap, collect)
            x = ad.concat([ad.slice_step(emb, t), context], axis=1)
            s, c = nn.lstm_step(self.params["dec.cell.W"], self.params["dec.cell.U"],
                                self.params["dec.cell.b"], x, s, c)
            logp = ad.log_softmax(nn.linear(s, proj_w, proj_b))
            if collect is not None:
                dev = float(np.abs(np.exp(logp.value).sum(axis=-1) - 1.0).max())
                collect["prob_dev"] = max(collect.get("prob_dev", 0.0), dev)
            logps.append(logp)
        return logps

    def decode_greedy(self, domain: str, latent: LatentStates, max_len: int) -> list:
        """Argmax decoding from the begin marker, one output row per batch row.

        Each row stops at its end marker or after max_len emitted tokens,
        whichever comes first; the end marker, when produced, is included.
        Rows are independent: finished rows feed padding and their later
        argmaxes are discarded.
        """
        self._check_domain(domain)
        if max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {max_len}")
        with ad.no_grad():
            b = latent.batch_size
            table = self.params[f"embed.{domain}"]
            proj_w = self.params[f"proj.{domain}.W"]
            proj_b = self.params[f"proj.{domain}.b"]
            precomputed, gap = self._attention_setup(latent)
            s, c = self._decoder_start(latent)
            previous = np.full(b, BOS_ID, dtype=np.int64)
            finished = np.zeros(b, dtype=bool)
            outputs: list[list[int]] = [[] for _ in range(b)]
            for _ in range(max_len):
                context = self._attention_step(s, latent, precomputed, gap)
                x = ad.concat([ad.gather_rows(table, previous), context], axis=1)
                s, c = nn.lstm_step(self.params["dec.cell.W"], self.params["dec.cell.U"],
                                    self.params["dec.cell.b"], x, s, c)
                logits = nn.linear(s, proj_w, proj_b)
                chosen = logits.value.argmax(axis=1)
                for row in range(b):
                    if not finished[row]:
                        outputs[row].append(int(chosen[row]))
                finished |= chosen == EOS_ID
                previous = np.where(finished, PAD_ID, chosen)
                if finished.all():
                    break
        return outputs

    def discriminate(self, summary: ad.Node) -> ad.Node:
        """P(encoding came from the source domain) for each pooled row."""
        hidden = ad.tanh(nn.linear(summary, self.params["disc.hidden.W"],
                                   self.params["disc.hidden.b"]))
        logit = nn.linear(hidden, self.params["disc.out.W"], self.params["disc.out.b"])
        return ad.reshape(ad.sigmoid(logit), (summary.value.shape[0],))


# ---------------------------------------------------------------------------
# losses


def loss_noise(step_logps: list, targets: np.ndarray, pad_id: int = PAD_ID) -> ad.Node:
    """Mean negative log-likelihood of the clean targets over non-pad positions.

    step_logps[t] scores targets[:, t+1]; padding positions contribute
    nothing to the sum or the divisor.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if len(step_logps) != targets.shape[1] - 1:
        raise ValueError(
            f"{len(step_logps)} prediction steps for targets of width {targets.shape[1]}"
        )
    total = None
    count = 0
    for t, logp in enumerate(step_logps):
        ids = targets[:, t + 1]
        mask = ids != pad_id
        count += int(mask.sum())
        picked = ad.pick(logp, np.where(mask, ids, 0))
        contribution = ad.sum_all(ad.mul(picked, ad.constant(mask.astype(np.float64))))
        total = contribution if total is None else ad.add(total, contribution)
    if count == 0:
        raise ValueError("no non-padding target tokens")
    return ad.affine(total, -1.0 / count)


def loss_trans(step_logps: list, targets: np.ndarray, pad_id: int = PAD_ID) -> ad.Node:
    """Reconstruction loss through the transform path; same form as loss_noise."""
    return loss_noise(step_logps, targets, pad_id)


def loss_adv(probs: ad.Node, labels: np.ndarray) -> ad.Node:
    """Mean binary cross-entropy of domain predictions against 0/1 labels."""
    labels = np.asarray(labels, dtype=np.float64)
    if probs.value.shape != labels.shape:
        raise ValueError(f"prediction shape {probs.value.shape} != label shape {labels.shape}")
    log_p = ad.log(probs)
    log_q = ad.log(ad.affine(probs, -1.0, 1.0))
    term = ad.add(ad.mul(log_p, ad.constant(labels)),
                  ad.mul(log_q, ad.constant(1.0 - labels)))
    return ad.affine(ad.mean_all(term), -1.0)


def loss_final(l_noise, l_trans, l_adv, weights: LossWeights):
    """Weighted sum of the three components; accepts nodes, floats, or a mix."""
    parts = []
    for value, weight in ((l_noise, weights.noise), (l_trans, weights.trans), (l_adv, weights.adv)):
        parts.append((value, weight))
    if all(not isinstance(value, ad.Node) for value, _ in parts):
        return sum(weight * float(value) for value, weight in parts)
    total = None
    for value, weight in parts:
        if not isinstance(value, ad.Node):
            value = ad.constant(np.asarray(float(value)))
        term = ad.affine(value, weight)
        total = term if total is None else ad.add(total, term)
    return total
