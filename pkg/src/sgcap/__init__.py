"""sgcap: caption generation by grouping video frames around phrases of the
partially decoded caption, trained with a contrastive attention loss."""

from .alignment import alignment_precision
from .corpus import (
    Example,
    SyntheticCorpus,
    SyntheticSpec,
    generate_corpus,
    load_corpus,
    load_features,
    sample_negative,
    save_corpus,
    save_features,
)
from .datamodel import (
    STOPWORDS,
    Caption,
    Config,
    DataError,
    NumericError,
    Rng,
    SgcapError,
    VideoFeatures,
    Vocabulary,
    build_vocabulary,
    encode_caption,
)
from .decoder import decode_beam, decode_greedy
from .grouping import align, relevance, suppress
from .metrics import EvalReport, bleu4, cider_d, evaluate, rouge_l
from .model import AblationFlags, CaptionModel, init_model
from .objectives import combine, contrastive_attention, cross_entropy
from .phrase_encoder import encode_phrases
from .trainer import embed_init, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "AblationFlags",
    "Caption",
    "CaptionModel",
    "Config",
    "DataError",
    "EvalReport",
    "Example",
    "NumericError",
    "Rng",
    "STOPWORDS",
    "SgcapError",
    "SyntheticCorpus",
    "SyntheticSpec",
    "VideoFeatures",
    "Vocabulary",
    "align",
    "alignment_precision",
    "bleu4",
    "build_vocabulary",
    "cider_d",
    "combine",
    "contrastive_attention",
    "cross_entropy",
    "decode_beam",
    "decode_greedy",
    "embed_init",
    "encode_caption",
    "encode_phrases",
    "evaluate",
    "generate_corpus",
    "init_model",
    "load_checkpoint",
    "load_corpus",
    "load_features",
    "relevance",
    "rouge_l",
    "sample_negative",
    "save_checkpoint",
    "save_corpus",
    "save_features",
    "suppress",
    "train",
]
