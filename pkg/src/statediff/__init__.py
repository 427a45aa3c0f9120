"""Latent-conditioned diffusion for one-to-many state inference.

A state that several different conditions could explain is modeled
generatively: a diffusion chain denoises unit Gaussian noise into a state,
conditioned on an auxiliary observation and a latent mode selector.  The
package trains this model on synthetic tasks whose conditional
distributions are known in closed form and numerically verifies the
error-accumulation and mode-recovery bounds the construction satisfies.

The hot numerical kernels are compiled (Cython) when the extension built;
``statediff.BACKEND`` names the implementation in use.
"""

from ._kernels import BACKEND
from .analysis import (
    BoundReport,
    conditional_variance,
    error_propagation_mc,
    evaluate_theorem1,
    evaluate_theorem2,
    voronoi_project,
    w2_1d,
    w2_empirical,
    w2_matching,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, parse_config, serialize_config
from .errors import CheckpointError, ConfigError, NumericalError
from .latent import GaussianHead, head_forward, kl_diag_gaussians, make_head, reparameterize
from .model import (
    LatentDiffusion,
    TrainConfig,
    TrainHistory,
    baseline_regressor,
    make_model,
    sample,
    timestep_embedding,
    train,
    training_loss,
)
from .net import AdamState, Network, adam_step, backward, forward, init_adam, init_network, mish
from .schedule import (
    Schedule,
    accumulation_constants,
    build_schedule,
    forward_noise,
    reverse_step,
)
from .streams import child_seed, rng_stream
from .tasks import (
    ConditionalGMM,
    Dataset,
    GridWorld,
    RolloutSpec,
    build_history_aux,
    build_joint_aux,
    generate_dataset,
    gmm_sample,
    grid_observe,
    grid_rollout,
    load_dataset,
    make_bimodal_task,
    make_unimodal_task,
    save_dataset,
)

__version__ = "0.1.0"
