"""Cross-era location retrieval engine.

Subspace domain adaptation (SA, ESA, GFK), intrinsic-dimensionality
estimation, BOW and Fisher-vector encoding, nearest-neighbor evaluation
protocols, and an interactive relevance-feedback retrieval loop.
"""

from .adapt import (
    GfkModel,
    SaModel,
    esa_distance,
    gfk_similarity,
    learn_gfk,
    learn_sa,
    sa_similarity,
    select_dim_sa,
    select_dim_sdm,
)
from .data import Domain, FeatureMatrix
from .encode import (
    Codebook,
    CodebookMode,
    EncodedVector,
    EncodingScheme,
    GmmModel,
    compute_idf,
    encode_bow,
    encode_fv,
    train_codebook,
    train_gmm,
    whiten,
)
from .corpus import (
    Era,
    FeatureStore,
    Manifest,
    ManifestEntry,
    load_features,
    load_manifest,
    load_model,
    merge_distractors,
    sample_descriptors,
    save_features,
    save_manifest,
    save_model,
)
from .evaluate import (
    AdaptPlan,
    Metric,
    Prediction,
    ProtocolResult,
    evaluate_accuracy,
    mean_average_precision,
    nn_classify,
    run_protocol,
)
from .retrieve import (
    FeedbackRound,
    IndexMode,
    RetrievalIndex,
    Session,
    SessionReport,
    baseline_neighbor_query,
    build_index,
    estimate_session_dims,
    maybe_learn_alignment,
    query_topk,
    record_feedback,
    simulate_session,
)
from .subspace import (
    DimEstimate,
    DimMethod,
    Subspace,
    estimate_dim_eig,
    estimate_dim_fractal,
    estimate_dim_mle,
    fit_pca,
    project,
)

__version__ = "0.1.0"
