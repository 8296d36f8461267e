"""RBMs with patch-restricted visible-hidden connectivity.

Hidden units attach to local pixel neighbourhoods of the image grid, which
makes the weight matrix sparse; training, likelihood evaluation (AIS),
denoising and discriminative classification all run on that support.
"""

__version__ = "0.1.0"

from .checkpoint import load_checkpoint, save_checkpoint
from .classifier import (ClassRbmParams, DiscGradientSet, class_energy, classify,
                         disc_gradient, predict_proba)
from .data import (BatchSampler, ImageDataset, SplitSpec, load_array_archive,
                   load_csv, load_idx, save_idx, split)
from .evaluation import (AisConfig, MetricsRecord, accuracy, ais_log_z,
                         balanced_class_weights, denoise, log_loss,
                         mean_loglikelihood, mse, mse_per_image)
from .rbm import (GibbsState, GradientSet, RbmParams, cd_gradient, energy,
                  exact_ll_gradient, exact_log_z, free_energy, gibbs_step,
                  prob_h_given_v, prob_v_given_h, sigmoid, softplus)
from .structure import (ConnectivityStructure, StructureSpec, build_centres,
                        build_structure, dense_structure, format_structure_spec,
                        mask_matrix, parse_structure_spec)
from .training import (NonFiniteMetricError, TrainConfig, TrainState, init_params,
                       measure_gradient_time, momentum_step, train)
