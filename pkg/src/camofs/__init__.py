"""Few-shot camouflaged instance learning: triplet and memory losses, K-shot splits, COCO metrics."""

from .autodiff import Tape, backward, cosine_distance, dot, log_sum_exp
from .cocoeval import DetectionRecord, EvalResult, evaluate
from .fewshot import FewShotSplit, build_nested_shots, export_split
from .memory import ClassMemoryBank, MemoryConfig, batch_memory_loss, memory_loss
from .objective import BaseLossTerm, CompositeConfig, final_loss
from .roi import EmptyForeground, FgBgPartition, downsample_mask, partition
from .triplet import TripletConfig, batch_triplet_loss, triplet_loss

__version__ = "0.1.0"

__all__ = [
    "Tape", "backward", "cosine_distance", "dot", "log_sum_exp",
    "DetectionRecord", "EvalResult", "evaluate",
    "FewShotSplit", "build_nested_shots", "export_split",
    "ClassMemoryBank", "MemoryConfig", "batch_memory_loss", "memory_loss",
    "BaseLossTerm", "CompositeConfig", "final_loss",
    "EmptyForeground", "FgBgPartition", "downsample_mask", "partition",
    "TripletConfig", "batch_triplet_loss", "triplet_loss",
]
