"""pbrgen: physically based batch rendering of indoor scenes into curated
synthetic training data with pixel-exact ground truth, plus the matching
evaluation suites."""

from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
