# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#       http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from .tensor import Tensor, ComputationTape, backward
from .ops import matmul, softmax, layer_norm, cumsum, mean
from .scene import (
    MotionState,
    VehicleTrack,
    Scene,
    SceneTransform,
    DatasetSplit,
    normalize_scene,
)
from .loading import load_csv, chunk_scenes
from .synthetic import synth_highway
from .cache import SceneCache
from .config import ModelConfig, TrainConfig, RunConfig
from .params import ModelParams, init_params
from .layers import (
    positional_encoding,
    embed_inputs,
    temporal_attention_block,
    relative_bias,
    spatial_attention_block,
)
from .model import (
    trajectory_decoder,
    probability_decoder,
    forward,
    select_best,
    ModePrediction,
)
from .checkpoint import save_checkpoint, load_checkpoint
from .losses import wta_loss, prob_loss, gaussian_nll, compute_loss, LossBreakdown
from .training import fit
from .metrics import rmse_T, mae_T, evaluate, EvalReport
from .ablation import run_ablation
from .interpret import export_attention, counterfactual_remove, AttentionRecord
from .version import __version__

__all__ = [
    "Tensor",
    "ComputationTape",
    "backward",
    "matmul",
    "softmax",
    "layer_norm",
    "cumsum",
    "mean",
    "MotionState",
    "VehicleTrack",
    "Scene",
    "SceneTransform",
    "DatasetSplit",
    "load_csv",
    "chunk_scenes",
    "synth_highway",
    "normalize_scene",
    "SceneCache",
    "ModelConfig",
    "TrainConfig",
    "RunConfig",
    "ModelParams",
    "init_params",
    "positional_encoding",
    "embed_inputs",
    "temporal_attention_block",
    "relative_bias",
    "spatial_attention_block",
    "trajectory_decoder",
    "probability_decoder",
    "forward",
    "select_best",
    "ModePrediction",
    "save_checkpoint",
    "load_checkpoint",
    "wta_loss",
    "prob_loss",
    "gaussian_nll",
    "compute_loss",
    "LossBreakdown",
    "fit",
    "rmse_T",
    "mae_T",
    "evaluate",
    "EvalReport",
    "run_ablation",
    "export_attention",
    "counterfactual_remove",
    "AttentionRecord",
    "__version__",
]
