"""Knowledge distillation and steganalysis residual features on a small numpy engine."""

__version__ = "0.1.0"
