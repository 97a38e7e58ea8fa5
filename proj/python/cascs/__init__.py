"""Content-aware block compressed sensing.

Thin re-export of the compiled core. Images are 2-D float64 arrays in [0, 1].
"""

from ._core import (
    DEFAULT_GAMMA,
    BudgetError,
    FormatError,
    GeneratingMatrix,
    IoError,
    Measurements,
    RangeError,
    ShapeError,
    __version__,
    bra,
    clip_round,
    initialize,
    load_image,
    mse,
    psnr,
    reconstruct,
    run_pipeline,
    saliency,
    sample,
    sample_uniform,
    save_image,
    set_num_threads,
    simulate_bra,
    ssim,
    svd_init,
)

__all__ = [
    "DEFAULT_GAMMA",
    "BudgetError",
    "FormatError",
    "GeneratingMatrix",
    "IoError",
    "Measurements",
    "RangeError",
    "ShapeError",
    "__version__",
    "bra",
    "clip_round",
    "initialize",
    "load_image",
    "mse",
    "psnr",
    "reconstruct",
    "run_pipeline",
    "saliency",
    "sample",
    "sample_uniform",
    "save_image",
    "set_num_threads",
    "simulate_bra",
    "ssim",
    "svd_init",
]
