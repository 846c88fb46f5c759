"""Diffusion-based imperceptible adversarial attacks (AdvAD, AdvAD-X) on a built-in CNN.

Images are float arrays of shape (H, W, 3) in the 0..255 range. Budgets
(``xi``) are given in byte units, so ``xi=8`` means 8/255.
"""

from ._core import (
    AdvadError,
    Model,
    Schedule,
    attack,
    l2,
    linf,
    pgd,
    psnr,
    ssim,
    synthetic,
    train,
    verify,
)

__all__ = [
    "AdvadError",
    "Model",
    "Schedule",
    "attack",
    "l2",
    "linf",
    "pgd",
    "psnr",
    "ssim",
    "synthetic",
    "train",
    "verify",
]
