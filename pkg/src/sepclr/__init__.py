"""SepCLR: contrastive analysis with kernel-density InfoMax losses.

Splits representations into a hyperspherical common space shared between a
background and a target dataset and a Euclidean salient space specific to
the target, trained with alignment/uniformity terms, an information-less
anchor for backgrounds, and a joint-entropy independence regularizer.
"""

__version__ = "0.1.0"

from . import backend  # noqa: F401  (selects the kernel backend at import)
