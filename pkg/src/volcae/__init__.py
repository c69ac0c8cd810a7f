"""Convolutional autoencoders for volumetric intensity data.

End-to-end engine: volume preprocessing and augmentation, three autoencoder
architectures (frame-staged, merged joint, direct 3D), mini-batch training,
embedding extraction, gradient saliency maps and a downstream classification
harness. ``volcae --help`` lists the batch commands.
"""

__version__ = "0.1.0"

from .tensor import Tape, Tensor, grad  # noqa: F401
