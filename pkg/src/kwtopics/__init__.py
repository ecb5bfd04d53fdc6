"""Keyword-conditioned topic modeling with energy-based keyword selection."""

__version__ = "0.1.0"

from .corpus import (Corpus, Document, RawDocument, Vocabulary,
                     build_vocabulary, encode_corpus, keyword_mask,
                     load_corpus, save_corpus)
from .keyword_dist import (GibbsChains, KeywordEnergy, estimate_log_partition,
                           exact_log_partition, gibbs_sweep,
                           negative_phase_gradient, unnormalized_log_prob)
from .recommend import (InferenceConfig, RecommendationReport,
                        recommend_keywords, score_recommendations)
from .trainer import (ModelState, TrainConfig, load_checkpoint, pretrain,
                      save_checkpoint, train)
