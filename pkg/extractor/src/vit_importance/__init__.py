from .extract import ExtractionSpec, extract_scores
from .synth import synthesize_scores

__version__ = "0.1.0"
__all__ = ["ExtractionSpec", "extract_scores", "synthesize_scores"]
