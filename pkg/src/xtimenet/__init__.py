"""xtimenet: XceptionTime networks for sparse multichannel sEMG gesture
recognition, built on a small tape-based autodiff engine.

Subpackages/modules:
  autodiff   - Tensor/Tape reverse-mode differentiation core
  kernels    - hot conv/pool kernels (compiled core + numpy fallback)
  layers     - conv1d / batch norm / ReLU / pooling / cross-entropy
  model      - XceptionTime module & network builders, checkpoints
  preprocess - Butterworth filtering, mu-law & minmax normalization,
               sliding-window segmentation
  data       - CSV ingestion, repetition splits, synthetic generator
  training   - Adam, cyclic LR schedule, train/evaluate loops
  verify     - finite-difference gradient checks
  cli        - the `xtimenet` command
"""

__version__ = "0.1.0"

from .autodiff import (Tensor, Tape, backward, grad_check, add, mul,
                       concat_channels, tensor_sum, set_debug_checks)
from .layers import (Conv1d, DepthwiseSeparableConv1d, BatchNorm1d, conv1d,
                     relu, max_pool1d, adaptive_avg_pool1d, cross_entropy)
from .model import (XTimeModuleSpec, XTimeNetworkSpec, build_xtime_module,
                    build_xtime_network, build_v2_network, count_parameters,
                    parameter_breakdown, save_checkpoint, load_checkpoint)
from .preprocess import (butterworth_lowpass, filter_apply, mu_law_normalize,
                         minmax_normalize, segment_windows,
                         preprocess_record)
from .data import (SignalRecord, SplitSpec, WindowedDataset, load_record,
                   save_record, split_by_repetition, generate_synthetic)
from .training import (TrainConfig, Adam, adam_step, lr_at, train, evaluate,
                       majority_vote_accuracy)
from .errors import DataError, NumericsError
