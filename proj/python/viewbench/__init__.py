"""Viewpoint estimation benchmark: pose codecs, losses, AP/AVP evaluation and the CLI."""

from ._viewbench import (
    ViewbenchError,
    azimuth_to_bin,
    canonicalize,
    decode,
    encode,
    evaluate,
    gradcheck,
    iou,
    loss,
    pr_curve,
    run_cli,
)

__all__ = [
    "ViewbenchError",
    "azimuth_to_bin",
    "canonicalize",
    "decode",
    "encode",
    "evaluate",
    "gradcheck",
    "iou",
    "loss",
    "pr_curve",
    "run_cli",
]
