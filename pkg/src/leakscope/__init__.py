"""leakscope: information-leakage estimators for selectively encrypted images.

Quantifies how much a partially encrypted image still reveals about its
plaintext by comparing mutual-information estimators: the plug-in histogram
estimator on pixels, a from-scratch neural variational estimator on flattened
pixel blocks, and the same neural estimator on convolutional patch embeddings
(built-in frozen encoder or ingested pretrained features).
"""

__version__ = "0.1.0"

from .crypto import (
    BITS_PER_PIXEL,
    MASKED_LOW,
    SHIFTED_HIGH,
    EncryptionParams,
    Keystream,
    apply_keystream,
    decrypt,
    decrypt_image,
    encrypt,
    encrypt_image,
    extract_clear,
    generate_keystream,
    split_channels,
)
from .embedding import (
    BadMagicError,
    BuiltinConvEncoder,
    DimensionMismatchError,
    EmbeddingFormatError,
    EmbeddingSet,
    PatchSpec,
    TruncatedPayloadError,
    UnsupportedVersionError,
    cosine_similarity,
    encode_builtin,
    mean_cosine_similarity,
    read_coordinate_manifest,
    read_embeddings,
    sample_patch_pairs,
    sample_patches,
    similarity_curve,
    write_coordinate_manifest,
    write_embeddings,
)
from .experiment import (
    ExperimentConfig,
    ExperimentResult,
    Seeds,
    emit_reports,
    generate_synthetic_corpus,
    run_sweep,
    select_dataset,
)
from .histogram import (
    JointHistogram,
    MIEstimate,
    PluginMIEstimator,
    build_joint_histogram,
    discretize_round,
    entropy,
    mutual_information_plugin,
    mutual_information_rounded,
    pixel_mi_curve,
    theoretic_upper_bound,
)
from .images import load_image, save_image, to_grayscale
from .mine import (
    MineConfig,
    MineEstimator,
    MineTrace,
    SamplePairSet,
    StatisticsNetwork,
    TrainingDivergedError,
    dv_objective,
    estimate_mi,
    gradient_step,
    relative_distance_to_max,
    sample_pixel_pairs,
)

__all__ = [name for name in dir() if not name.startswith("_")]
