"""Cross-domain augmentation toolkit for sequence labeling.

Learns to rewrite linearized, label-annotated sentences from one domain
into the textual style of another via a denoising autoencoder with
adversarial latent alignment, then uses the generated data to train a
desk-scale NER tagger. See the README for the pipeline walkthrough.
"""

from .augmenter import AugmentationReport, augment, post_process
from .corpus import (
    Corpus,
    CorpusError,
    DomainSimilarityReport,
    EntitySpan,
    LabeledSentence,
    LinearSequence,
    delinearize,
    domain_similarity,
    extract_entities,
    linearize,
    merge_corpora,
    read_conll,
    validate_bio,
    write_conll,
)
from .model import CrossDomainAutoencoder, LossWeights, ModelConfig
from .noise import NoiseConfig, apply_noise
from .synthcorpus import SynthSpec, default_spec, generate_pair, mapping_token_accuracy
from .tagger import (
    ExperimentResult,
    F1Report,
    TaggerConfig,
    micro_f1,
    run_experiment,
    train_tagger,
)
from .trainer import (
    TrainConfig,
    TrainData,
    TrainerState,
    TrainingDivergedError,
    create_state,
    evaluate_perplexity,
    train_phase1,
    train_phase2,
)
from .vocab import Vocabulary, build_vocab, load_vocab, save_vocab

__version__ = "0.1.0"

__all__ = [
    "AugmentationReport",
    "Corpus",
    "CorpusError",
    "CrossDomainAutoencoder",
    "DomainSimilarityReport",
    "EntitySpan",
    "ExperimentResult",
    "F1Report",
    "LabeledSentence",
    "LinearSequence",
    "LossWeights",
    "ModelConfig",
    "NoiseConfig",
    "SynthSpec",
    "TaggerConfig",
    "TrainConfig",
    "TrainData",
    "TrainerState",
    "TrainingDivergedError",
    "Vocabulary",
    "apply_noise",
    "augment",
    "build_vocab",
    "create_state",
    "default_spec",
    "delinearize",
    "domain_similarity",
    "evaluate_perplexity",
    "extract_entities",
    "generate_pair",
    "linearize",
    "load_vocab",
    "mapping_token_accuracy",
    "merge_corpora",
    "micro_f1",
    "post_process",
    "read_conll",
    "run_experiment",
    "save_vocab",
    "train_phase1",
    "train_phase2",
    "train_tagger",
    "validate_bio",
    "write_conll",
    "__version__",
]
