"""Multiple-choice CNN: grouped-softmax convolutional text classification for tweets."""
from .embeddings import (
    HashedRandom, PrecomputedStore, SequenceEmbedder, StaticTable, embed_sequence, load_precomputed,
    load_static_table,
)
from .estimator import MCCNNClassifier
from .evaluation import (
    ConstantClassifier, LinearSVMBaseline, MetricsReport, TfidfFeatures, confusion_matrix,
    constant_baseline, evaluate, metrics_from_confusion, mfc_baseline, tfidf_vectorize,
    train_linear_baseline,
)
from .model import (
    Ensemble, MCCNNModel, ModelConfig, count_parameters, ensemble_predict, finite_difference_gradients,
    forward, init_model, load_model, model_gradients, save_model,
)
from .text_pipeline import (
    Example, LabelSchema, SubwordVocabulary, TokenSequence, TweetTokenizer, class_distribution,
    load_dataset, normalize_text, tokenize,
)
from .training import TrainConfig, TrainHistory, adam_step, stratified_split, train_ensemble, train_single

__version__ = "0.1.0"
