from .checkpoint import load_tensors, save_tensors
from .model import (
    PARAMETER_NAMES,
    Batch,
    ModelConfig,
    ModelSnapshot,
    Parameters,
    ToyLanguageModel,
    backward_gradients,
    grad_l2_norm,
    gradient_norm,
    hidden_state,
    nll_loss,
    perplexities,
    perplexity,
)
from .optim import OptimizerState, optimizer_step
