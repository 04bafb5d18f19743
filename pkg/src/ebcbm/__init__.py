"""Energy-based concept bottleneck with quantized concept vectors."""

__version__ = "0.1.0"

from . import concept_encoder, datagen, evaluation, numerics, pipeline, qcav, trainer

__all__ = [
    "concept_encoder",
    "datagen",
    "evaluation",
    "numerics",
    "pipeline",
    "qcav",
    "trainer",
    "__version__",
]
