"""tdid: turn an open-vocabulary detector into a few-shot instance detector.

Enroll objects from a handful of images, optionally align embedding
statistics with a whitening-coloring adapter, and run detection plus a
full episodic evaluation harness.
"""

from .adapter import (
    DomainStats,
    WhitenColorTransform,
    apply_transform,
    build_transform,
    estimate_stats,
)
from .augment import AugmentationKind, apply_augmentation, default_augmentation_set
from .backend import (
    Backend,
    BackendDescriptor,
    ExternalFilesBackend,
    MockBackend,
    MockWorldConfig,
    read_embedding_file,
    write_embedding_file,
)
from .embedding import aggregate_prototype, cosine_similarity, l2_normalize
from .enrollment import (
    EnrollmentConfig,
    ObjectPrototype,
    PrototypeStore,
    enroll_image,
    load_store,
    locate_main_object,
    remove_example,
    save_store,
)
from .evalharness import (
    DatasetManifest,
    ExperimentGrid,
    RunResult,
    calibration,
    confusion,
    filter_train_images,
    run_episode,
    run_grid,
    sample_episode,
    silhouette,
)
from .geometry import BBox, Detection, ImageDims, crop_with_margin, iou, nms, top1
from .inference import ClassificationResult, InferenceConfig, classify_query, detect_objects

__version__ = "0.1.0"
