"""Generate cross-styled training sentences from one domain's corpus.

A trained model greedily transforms each clean input sentence into the
other domain; the raw decodes then pass through three filters, applied in
a fixed order with the first violation attributed:

  rule 1: structural damage (markers out of place, dangling or invalid
          label structure, empty output),
  rule 2: placeholder symbols (<UNK> or <MSK>) anywhere in the output,
  rule 3: no entity label left, so the sentence is useless as tagger data.

Survivors convert back into labeled sentences, in input order, and form
the augmentation corpus.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import autodiff as ad
from .corpus import (
    BOS_TOKEN,
    DEFAULT_ENTITY_TYPES,
    EOS_TOKEN,
    MASK_TOKEN,
    OUTSIDE,
    PAD_TOKEN,
    UNK_TOKEN,
    BioValidationError,
    Corpus,
    LinearSequence,
    delinearize,
    is_label_token,
    linearize,
    validate_bio,
)
from .model import SOURCE, TARGET, CrossDomainAutoencoder
from .vocab import Vocabulary

SRC_TO_TGT = "src2tgt"
TGT_TO_SRC = "tgt2src"

RULE_SCHEMA = 1
RULE_SPECIAL = 2
RULE_NO_ENTITY = 3

_STRUCTURAL = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN)
_PLACEHOLDERS = (UNK_TOKEN, MASK_TOKEN)


def post_process(x: LinearSequence | Sequence[str],
                 entity_types: Sequence[str] = DEFAULT_ENTITY_TYPES) -> int | None:
    """Return the number of the first violated filter rule, or None to keep.

    `x` is a full candidate sequence including the begin/end markers.
    Placeholder symbols are legitimate decoder outputs, so they are judged
    by rule 2 rather than treated as structural damage; stray structural
    markers inside the sequence are rule-1 violations.
    """
    tokens = tuple(getattr(x, "tokens", x))
    if len(tokens) < 3:
        return RULE_SCHEMA
    if tokens[0] != BOS_TOKEN or tokens[-1] != EOS_TOKEN:
        return RULE_SCHEMA
    interior = tokens[1:-1]
    if any(t in _STRUCTURAL for t in interior):
        return RULE_SCHEMA

    labels = []
    pending = None
    for token in interior:
        if is_label_token(token, entity_types):
            if pending is not None:
                return RULE_SCHEMA  # label followed by label
            pending = token
        else:
            labels.append(pending if pending is not None else OUTSIDE)
            pending = None
    if pending is not None:
        return RULE_SCHEMA  # label with no word after it
    try:
        validate_bio(labels, entity_types)
    except BioValidationError:
        return RULE_SCHEMA

    if any(t in _PLACEHOLDERS for t in interior):
        return RULE_SPECIAL
    if not any(is_label_token(t, entity_types) for t in interior):
        return RULE_NO_ENTITY
    return None


@dataclass(frozen=True)
class AugmentationReport:
    """Filter accounting plus the surviving sentences themselves."""

    generated: Corpus
    produced: int
    rejected_rule1: int
    rejected_rule2: int
    rejected_rule3: int
    accepted: int

    def __post_init__(self):
        rejected = self.rejected_rule1 + self.rejected_rule2 + self.rejected_rule3
        if self.produced != self.accepted + rejected:
            raise ValueError("report counts do not add up")
        if self.accepted != len(self.generated):
            raise ValueError("accepted count disagrees with the generated corpus")

    def counts(self) -> dict:
        return {
            "produced": self.produced,
            "rejected_rule1": self.rejected_rule1,
            "rejected_rule2": self.rejected_rule2,
            "rejected_rule3": self.rejected_rule3,
            "accepted": self.accepted,
        }

    def to_tsv(self) -> str:
        return "".join(f"{k}\t{v}\n" for k, v in self.counts().items())


def augment(model: CrossDomainAutoencoder, src: Corpus, direction: str,
            src_vocab: Vocabulary, tgt_vocab: Vocabulary, batch_size: int = 32,
            domain_id: str | None = None) -> AugmentationReport:
    """Transform every sentence of `src` and keep the filtered survivors.

    `direction` is "src2tgt" or "tgt2src"; the input corpus must be written
    in the direction's origin domain. Decoding is greedy and capped at each
    sentence's own linearized length, so the result is deterministic for a
    fixed model. A decode that stopped on its own keeps its end marker; one
    that ran into the cap is closed with an end marker before filtering.
    """
    if direction == SRC_TO_TGT:
        from_domain, to_domain = SOURCE, TARGET
        in_vocab, out_vocab = src_vocab, tgt_vocab
    elif direction == TGT_TO_SRC:
        from_domain, to_domain = TARGET, SOURCE
        in_vocab, out_vocab = tgt_vocab, src_vocab
    else:
        raise ValueError(f"direction must be {SRC_TO_TGT!r} or {TGT_TO_SRC!r}, got {direction!r}")
    if not isinstance(model, CrossDomainAutoencoder):
        raise ValueError("augment requires a trained cross-domain model")
    if (model.config.src_vocab_size != len(src_vocab)
            or model.config.tgt_vocab_size != len(tgt_vocab)):
        raise ValueError("vocabulary sizes do not match the model checkpoint")

    entity_types = src.entity_types
    clean = [in_vocab.encode(linearize(s)) for s in src]
    kept = []
    counts = {RULE_SCHEMA: 0, RULE_SPECIAL: 0, RULE_NO_ENTITY: 0}
    for start in range(0, len(clean), batch_size):
        rows = clean[start : start + batch_size]
        caps = [len(r) for r in rows]
        with ad.no_grad():
            latent = model.encode(from_domain, rows)
            emitted = model.decode_greedy(to_domain, latent, max_len=max(caps))
        for row, cap in zip(emitted, caps):
            tokens = out_vocab.decode(row[:cap])
            if tokens and tokens[-1] == EOS_TOKEN:
                tokens = tokens[:-1]
            candidate = (BOS_TOKEN, *tokens, EOS_TOKEN)
            verdict = post_process(candidate, entity_types)
            if verdict is None:
                kept.append(delinearize(LinearSequence(candidate), entity_types))
            else:
                counts[verdict] += 1
    generated = Corpus(domain_id or f"{src.domain_id}-generated", tuple(kept), entity_types)
    return AugmentationReport(
        generated=generated,
        produced=len(clean),
        rejected_rule1=counts[RULE_SCHEMA],
        rejected_rule2=counts[RULE_SPECIAL],
        rejected_rule3=counts[RULE_NO_ENTITY],
        accepted=len(kept),
    )
