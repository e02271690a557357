from .adapter import AdapterConfig, AdapterError, export_predictions
from .corpus_io import CorpusFormatError, read_corpus

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "export_predictions",
    "CorpusFormatError",
    "read_corpus",
    "__version__",
]
