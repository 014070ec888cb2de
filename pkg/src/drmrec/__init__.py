"""Factor-based top-K recommendation with a differentiable ranking loss.

The library trains user/item factor models by jointly minimizing a
rank-weighted pairwise hinge and the squared distance between the relevance
vector and a temperature-relaxed sort of the predicted scores. All gradients
are closed-form.
"""

from .errors import (ConfigError, DrmrecError, EmptyDatasetError,
                     EvaluationError, ModelFormatError, ParseError,
                     TrainingError)
from .factors import (FactorModel, covariance_loss, covariance_stats,
                      init_model, load_model, project_unit_ball, save_model)
from .interactions import (InteractionMatrix, SplitSpec, convert_playlists,
                           eligible_users, load_interaction_splits,
                           load_interactions, persist_split,
                           split_interactions, write_pair_list)
from .metrics import (EvalReport, MetricWeight, average_precision_at,
                      evaluate_model, hit, ndcg_at, precision_at, rank_items,
                      rank_weight_vector, recall_at, unified_metric)
from .objectives import (drm_factor_grads, drm_loss, drm_loss_and_score_grad,
                         drm_score_grad, drm_workspace, hinge_gradients,
                         hinge_loss, mse_loss, phi_weight, relaxed_objective)
from .relaxed_sort import (abs_diff_matrix, hard_perm, relaxed_perm,
                           relaxed_perm_row, weighted_truncated_sum)
from .synthetic import low_rank_interactions
from .trainer import (FitResult, HyperParams, TrainingSample, draw_sample,
                      fit, hardest_pair, train_step, trainer_state)

__version__ = "0.1.0"
