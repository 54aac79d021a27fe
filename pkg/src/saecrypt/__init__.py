"""Stacked-autoencoder image compression with a logistic-map XOR cipher."""

from .chaos import ChaoticKey, derive_key, decrypt, encrypt, logistic_sequence
from .codec import CompressedImage, compress, decompress
from .image_io import Image, TileSet, load_image, save_image, tile, to_grayscale, untile
from .metrics import adjacent_correlation, correlation, mse, psnr, quality_report
from .sae import SaeModel, TrainConfig, fine_tune, load_model, pretrain, save_model

__version__ = "0.1.0"
