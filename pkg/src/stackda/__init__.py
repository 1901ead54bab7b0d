"""Domain-adapted base learners (CMMD, low-rank, CORAL) combined by stacking."""

from .adapt import BaseLearner, TrainConfig, build_base_learner, predict_proba, train_base
from .data import LabeledSet, ShiftSpec, SplitPlan, generate_shift_pair, load_csv, save_csv, split
from .discrepancy import DiscrepancyMethod, LossWithGrad, Method, adaptation_loss, cmmd, coral, mmd
from .lowrank import AlmConfig, lowrank_penalty, solve_lrr
from .nn import SgdConfig, lr_at
from .stack import StackConfig, StackedModel, evaluate, fit_stack, predict_stack

__version__ = "0.1.0"
