"""cilearn: class-incremental learning with curriculum-ordered task
ingestion, distillation-regularized training, and entropy-based exemplar
selection, plus a benchmark harness for accuracy and forgetting."""

from .backbone import (
    IncrementalModel,
    OptimizerState,
    backward,
    build_model,
    clone_frozen,
    expand_head,
    forward,
    init_optimizer,
    load_checkpoint,
    save_checkpoint,
    step,
)
from .config import load_config, parse_config_text, save_config
from .curriculum import (
    BatchPlan,
    Curriculum,
    PrototypeTable,
    compute_prototypes,
    generate_curriculum,
    schedule_batches,
    similarity_matrix,
)
from .data import (
    DatasetDescriptor,
    FeatureBatch,
    TaskSet,
    TaskStream,
    build_stream,
    generate_synthetic,
    load_dataset_file,
    synthesize,
    write_dataset_file,
)
from .harness import (
    StreamConfig,
    StreamMetrics,
    average_incremental_accuracy,
    forgetting_measure,
    run,
    run_ablation,
    run_memory_sweep,
    run_stream,
)
from .losses import (
    LossBreakdown,
    contrastive_distillation,
    cross_entropy,
    distill_probs,
    total_loss,
)
from .memory import ReplayMemory, absorb, serve_balanced, serve_training_mix
from .numkit import (
    cosine_similarity,
    derive_seed,
    entropy,
    rng,
    softmax,
    squared_distance,
)
from .subset import (
    ClusterModel,
    SelectionResult,
    best_kmeans,
    entropy_scores,
    kmeans,
    membership_probabilities,
    random_selection,
    select_exemplars,
)

__version__ = "0.1.0"
