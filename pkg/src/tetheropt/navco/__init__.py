"""Edge-flow recommender over combinatorial subgraphs."""

from .model import (
    EdgeFlowModel,
    ModelConfig,
    backward,
    circulation,
    compute_loss,
    cycle_loss,
    edge_loss,
    forward,
    init_params,
    lowest_score,
    recover_scores,
    sign_accuracy,
)
from .train import (
    EdgeBatch,
    ModelRecommender,
    OracleRecommender,
    TrainReport,
    evaluate,
    recommend,
    stack_records,
    train,
)
