"""Functional tissue unit segmentation pipeline: pixel-size and colour
adaptation, augmentation, sliding-window ensemble inference with flip TTA,
small-region post-processing and Dice evaluation."""

from .color import channel_cdf, color_jitter, histogram_match
from .core import SampleMeta, SeededRng, read_probmap, rle_decode, rle_encode, write_probmap
from .evaluation import adjust_public_score, dice, mean_dice, stratified_kfold
from .infer import average_parameters, ensemble, plan_tiles, predict_sliding, tta_predict
from .post import binarize, connected_components, postprocess, remove_small_regions
from .scale import effective_scale, prepare_sample, resize_image, resize_mask

__version__ = "0.1.0"
