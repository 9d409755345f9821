"""TcGAN: one-shot image generation from a single training image.

A multi-stage generator (transformer global network + stacked
convolutional local blocks) is trained against a patch critic on one
image, then sampled for novel images, super-resolution, and composite
harmonization.
"""

__version__ = "0.1.0"
