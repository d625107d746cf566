"""Anatomical-prior channel encoding, CTV segmentation evaluation and gender-bias auditing."""

from ._kernels import BACKEND as EDT_BACKEND

__version__ = "0.1.0"
__all__ = ["EDT_BACKEND", "__version__"]
