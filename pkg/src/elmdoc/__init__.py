"""Real-time document-image classification.

Two stages: a frozen convolutional stack maps images to fixed-length
feature vectors, and a random-feature classifier trained by one closed-form
linear solve does the classification.  Training the classifier takes on the
order of a millisecond per image, so models can be retrained interactively.
"""

from .dataset import (
    Corpus,
    FeatureSet,
    PartitionPlan,
    make_partitions,
    read_features,
    read_features_csv,
    scan_corpus,
    write_features,
)
from .elm import ElmClassifier, load_model, save_model
from .evaluation import GridReport, accuracy, confusion, run_grid
from .featx import (
    ConvFeatureExtractor,
    NetSpec,
    alexnet_stub,
    extract,
    load_netspec,
    save_netspec,
)

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "ConvFeatureExtractor",
    "ElmClassifier",
    "FeatureSet",
    "GridReport",
    "NetSpec",
    "PartitionPlan",
    "accuracy",
    "alexnet_stub",
    "confusion",
    "extract",
    "load_model",
    "load_netspec",
    "make_partitions",
    "read_features",
    "read_features_csv",
    "run_grid",
    "save_model",
    "save_netspec",
    "scan_corpus",
    "write_features",
    "__version__",
]
