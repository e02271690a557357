"""dialnoise: noise engineering for dialogue corpora.

Inject taxonomy-typed noise at controlled, seeded rates; audit noise
prevalence across datasets; and denoise with an ontology clean, a
disagreement filter, and co-teaching pseudo-labeling.
"""

from . import calibration, corpus, denoiser, injector, metrics, ontology, taxonomy

__version__ = "0.1.0"

__all__ = [
    "calibration",
    "corpus",
    "denoiser",
    "injector",
    "metrics",
    "ontology",
    "taxonomy",
    "__version__",
]
