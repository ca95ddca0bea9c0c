"""Dataset condensation toolkit: multi-formation storage, gradient-matching
condensation, coreset baselines, evaluation harnesses, and the theory
self-checks that guard them."""

from .backend import backend_name
from .condense import CondenseConfig, condense_step, dm_match, matching_distance, network_step, run
from .data import Dataset, load_idx, make_blobs
from .harness import (EvalReport, continual_run, evaluate, evaluate_fixed_steps,
                      grad_norm_curve, intra_class_grad_stats,
                      loss_landscape_sweep)
from .models import ConvNet, one_hot
from .multiform import (CondensedSet, FormationSpec, budget, decode_set, form,
                        form_array, post_downsample)
from .selectors import herding_select, random_select, subset_as_condensed
from .serial import RunConfig, load_condensed, parse_run_config, save_condensed
from .tensor import Tape, Tensor, backward, forward_op, grad, grad_check, no_grad

__version__ = "0.1.0"

__all__ = [
    "backend_name", "__version__",
    "Tape", "Tensor", "backward", "grad", "grad_check", "forward_op", "no_grad",
    "FormationSpec", "CondensedSet", "form", "form_array", "decode_set",
    "budget", "post_downsample",
    "ConvNet", "one_hot",
    "CondenseConfig", "matching_distance", "condense_step", "network_step",
    "dm_match", "run",
    "random_select", "herding_select", "subset_as_condensed",
    "Dataset", "load_idx", "make_blobs",
    "RunConfig", "parse_run_config", "save_condensed", "load_condensed",
    "EvalReport", "evaluate", "evaluate_fixed_steps", "grad_norm_curve",
    "intra_class_grad_stats", "loss_landscape_sweep", "continual_run",
]
