"""Noise injection: one operation per taxonomy branch, all deterministic."""

from .common import (
    DEFAULT_RATE,
    Attempt,
    InjectionError,
    InjectionLog,
    InjectionRecord,
    NoiseSpec,
    SkipRecord,
)
from .edits import damerau_distance
from .labeling import (
    inject_annotator_noise,
    inject_class_noise,
    inject_instance_noise,
    recent_label_pool,
)
from .matrix import EmbeddingTable, TransitionMatrix, build_transition_matrix, load_embeddings
from .splits import leave_one_out, make_ood_split, sweep
from .text_noise import (
    FilePerturber,
    ServicePerturber,
    inject_breakdown_noise,
    inject_discourse_noise,
)
from .variants import VariantTables, default_variant_tables, inject_ontology_variants

__all__ = [
    "DEFAULT_RATE",
    "Attempt",
    "InjectionError",
    "InjectionLog",
    "InjectionRecord",
    "NoiseSpec",
    "SkipRecord",
    "EmbeddingTable",
    "TransitionMatrix",
    "build_transition_matrix",
    "load_embeddings",
    "inject_class_noise",
    "inject_instance_noise",
    "inject_annotator_noise",
    "inject_discourse_noise",
    "inject_breakdown_noise",
    "inject_ontology_variants",
    "recent_label_pool",
    "make_ood_split",
    "leave_one_out",
    "sweep",
    "FilePerturber",
    "ServicePerturber",
    "VariantTables",
    "default_variant_tables",
    "damerau_distance",
]
