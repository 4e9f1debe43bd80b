"""Labeled NER corpora: CoNLL I/O, BIO validation, linearization, domain similarity.

A corpus is a sequence of sentences, each a list of (word, BIO label) pairs.
Sentences move through the generation pipeline in a linearized form where
label tokens are spliced into the word stream, so a plain sequence model can
read and emit them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

PAD_TOKEN = "<PAD>"
UNK_TOKEN = "<UNK>"
BOS_TOKEN = "<BOS>"
EOS_TOKEN = "<EOS>"
MASK_TOKEN = "<MSK>"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN, MASK_TOKEN)

OUTSIDE = "O"

# Default entity type registry (the OntoNotes 5.0 inventory).
DEFAULT_ENTITY_TYPES = (
    "PERSON",
    "NORP",
    "FAC",
    "ORG",
    "GPE",
    "LOC",
    "PRODUCT",
    "EVENT",
    "WORK_OF_ART",
    "LAW",
    "LANGUAGE",
    "DATE",
    "TIME",
    "PERCENT",
    "MONEY",
    "QUANTITY",
    "ORDINAL",
    "CARDINAL",
)


class CorpusError(ValueError):
    """Base class for corpus-layer failures."""


class ParseError(CorpusError):
    """Malformed CoNLL input; message names the offending line."""


class BioValidationError(CorpusError):
    """Label sequence violates the BIO scheme; message names the sentence."""


class SchemaError(CorpusError):
    """Linearized sequence violates structural invariants; message names the position."""


def is_label_token(token: str, entity_types=DEFAULT_ENTITY_TYPES) -> bool:
    """True if token is a B-/I- label for a registered entity type."""
    return token[:2] in ("B-", "I-") and token[2:] in entity_types


@dataclass(frozen=True)
class LabeledSentence:
    """One sentence: words paired position-wise with BIO labels."""

    words: tuple[str, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.words) == 0:
            raise BioValidationError("sentence must contain at least one word")
        if len(self.words) != len(self.labels):
            raise BioValidationError(
                f"{len(self.words)} words but {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.words)


@dataclass(frozen=True)
class LinearSequence:
    """Marker-delimited token stream with entity label tokens spliced in.

    Each labeled word is preceded by its own label token (O labels are
    dropped), so the stream is invertible back to a labeled sentence.
    Construction does not validate: noisy or generated streams may violate
    the structural invariants, and `delinearize` / post-processing are the
    places that check them.
    """

    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def interior(self) -> tuple[str, ...]:
        """Tokens between the begin/end markers (assumes both are present)."""
        return self.tokens[1:-1]


@dataclass(frozen=True)
class EntitySpan:
    """One entity mention: half-open word-index range plus surface text."""

    surface: str
    entity_type: str
    start: int
    end: int


@dataclass(frozen=True)
class Corpus:
    """A named domain's sentences plus the entity type registry they use."""

    domain_id: str
    sentences: tuple[LabeledSentence, ...]
    entity_types: tuple[str, ...] = DEFAULT_ENTITY_TYPES

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        object.__setattr__(self, "entity_types", tuple(self.entity_types))

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]


@dataclass(frozen=True)
class DomainSimilarityReport:
    """Mention-level overlap between a training corpus and a test corpus."""

    non_overlap_count: int
    overlap_count: int
    similarity_pct: float

    @classmethod
    def from_counts(cls, non_overlap: int, overlap: int) -> "DomainSimilarityReport":
        if non_overlap < 0 or overlap < 0:
            raise CorpusError("mention counts must be non-negative")
        total = non_overlap + overlap
        if total == 0:
            raise CorpusError("no entities: similarity is undefined without mentions")
        return cls(non_overlap, overlap, 100.0 * overlap / total)


def validate_bio(labels, entity_types=DEFAULT_ENTITY_TYPES, sentence_index: int | None = None) -> None:
    """Raise BioValidationError unless `labels` is a well-formed BIO sequence.

    Every label must be O, B-T, or I-T with T in the registry, and each I-T
    must continue a mention of the same type opened by B-T.
    """
    where = f" in sentence {sentence_index}" if sentence_index is not None else ""
    prev = OUTSIDE
    for pos, label in enumerate(labels):
        if label == OUTSIDE:
            prev = label
            continue
        kind, _, etype = label.partition("-")
        if kind not in ("B", "I") or not etype:
            raise BioValidationError(f"bad label {label!r} at position {pos}{where}")
        if etype not in entity_types:
            raise BioValidationError(
                f"unregistered entity type {etype!r} at position {pos}{where}"
            )
        if kind == "I":
            prev_kind, _, prev_type = prev.partition("-")
            if prev_kind not in ("B", "I") or prev_type != etype:
                raise BioValidationError(
                    f"orphan continuation {label!r} at position {pos}{where}"
                )
        prev = label


def read_conll(path, domain_id: str | None = None, entity_types=DEFAULT_ENTITY_TYPES) -> Corpus:
    """Read a two-column CoNLL file (token, tag; blank lines split sentences).

    Args:
        path: input file, UTF-8.
        domain_id: corpus name; defaults to the file stem.
        entity_types: registry used to validate the BIO labels.

    Raises:
        ParseError: line without exactly two whitespace-separated columns,
            or an input with no sentences at all.
        BioValidationError: some sentence's labels break the BIO scheme.
    """
    path = Path(path)
    sentences: list[LabeledSentence] = []
    words: list[str] = []
    labels: list[str] = []

    def flush():
        if words:
            index = len(sentences)
            validate_bio(labels, entity_types, sentence_index=index)
            sentences.append(LabeledSentence(tuple(words), tuple(labels)))
            words.clear()
            labels.clear()

    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped:
                flush()
                continue
            columns = stripped.split()
            if len(columns) != 2:
                raise ParseError(
                    f"{path}:{lineno}: expected 'token tag', got {len(columns)} columns"
                )
            words.append(columns[0])
            labels.append(columns[1])
    flush()

    if not sentences:
        raise ParseError(f"{path}: empty corpus")
    return Corpus(domain_id or path.stem, tuple(sentences), tuple(entity_types))


def write_conll(corpus: Corpus, path) -> None:
    """Write `corpus` as tab-separated token/tag lines, blank line after each sentence."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for sentence in corpus:
            for word, label in zip(sentence.words, sentence.labels):
                handle.write(f"{word}\t{label}\n")
            handle.write("\n")


def linearize(sentence: LabeledSentence) -> LinearSequence:
    """Splice each non-O label token in front of its word and add markers.

    [New/B-GPE, York/I-GPE, wins/O] becomes
    <BOS> B-GPE New I-GPE York wins <EOS>; the word stream keeps its order and
    every labeled word carries its own label token, so the mapping inverts
    exactly.
    """
    tokens: list[str] = [BOS_TOKEN]
    for word, label in zip(sentence.words, sentence.labels):
        if label != OUTSIDE:
            tokens.append(label)
        tokens.append(word)
    tokens.append(EOS_TOKEN)
    return LinearSequence(tuple(tokens))


def delinearize(x: LinearSequence, entity_types=DEFAULT_ENTITY_TYPES) -> LabeledSentence:
    """Invert `linearize`, validating the structural invariants.

    Raises SchemaError (naming the offending position) if the stream lacks
    its markers, contains stray special tokens, has a label token without a
    following word, is empty, or decodes to labels that fail BIO validation.
    """
    tokens = x.tokens
    if len(tokens) < 2 or tokens[0] != BOS_TOKEN or tokens[-1] != EOS_TOKEN:
        raise SchemaError("sequence must begin with the begin marker and end with the end marker")
    interior = tokens[1:-1]
    if not interior:
        raise SchemaError("position 1: empty interior")

    words: list[str] = []
    labels: list[str] = []
    pending: str | None = None  # label token waiting for its word
    pending_pos = -1
    for pos, token in enumerate(interior, start=1):
        if token in SPECIAL_TOKENS:
            raise SchemaError(f"position {pos}: special token {token!r} inside the sequence")
        if is_label_token(token, entity_types):
            if pending is not None:
                raise SchemaError(f"position {pos}: label token {token!r} follows another label token")
            pending = token
            pending_pos = pos
            continue
        words.append(token)
        labels.append(pending if pending is not None else OUTSIDE)
        pending = None
    if pending is not None:
        raise SchemaError(f"position {pending_pos}: label token {pending!r} has no following word")

    try:
        validate_bio(labels, entity_types)
    except BioValidationError as exc:
        raise SchemaError(str(exc)) from exc
    return LabeledSentence(tuple(words), tuple(labels))


def extract_entities(sentence: LabeledSentence) -> tuple[EntitySpan, ...]:
    """Collect entity mentions as (surface, type, start, end) spans, end exclusive."""
    spans: list[EntitySpan] = []
    start = -1
    current = ""
    for pos, label in enumerate(sentence.labels):
        opens = label.startswith("B-")
        continues = label.startswith("I-") and start >= 0 and label[2:] == current
        if start >= 0 and not continues:
            spans.append(
                EntitySpan(" ".join(sentence.words[start:pos]), current, start, pos)
            )
            start = -1
        if opens:
            start = pos
            current = label[2:]
    if start >= 0:
        n = len(sentence.labels)
        spans.append(EntitySpan(" ".join(sentence.words[start:n]), current, start, n))
    return tuple(spans)


def merge_corpora(first: Corpus, second: Corpus, domain_id: str | None = None) -> Corpus:
    """Concatenate two corpora; entity type registries must agree."""
    if first.entity_types != second.entity_types:
        raise CorpusError("cannot merge corpora with different entity type registries")
    name = domain_id or f"{first.domain_id}+{second.domain_id}"
    return Corpus(name, first.sentences + second.sentences, first.entity_types)


def domain_similarity(train: Corpus, test: Corpus) -> DomainSimilarityReport:
    """Count train mentions whose (surface, type) also occurs as a test mention.

    Every train mention contributes one count; a mention overlaps when its
    exact surface string and type appear among the test corpus mentions.
    Raises CorpusError when the train corpus has no mentions at all.
    """
    test_mentions = {
        (span.surface, span.entity_type)
        for sentence in test
        for span in extract_entities(sentence)
    }
    overlap = 0
    non_overlap = 0
    for sentence in train:
        for span in extract_entities(sentence):
            if (span.surface, span.entity_type) in test_mentions:
                overlap += 1
            else:
                non_overlap += 1
    return DomainSimilarityReport.from_counts(non_overlap, overlap)
