"""Alpha-beta divergence distillation lab: divergences, exact gradients,
one-step mass dynamics, randomized theorem checks and a toy distillation
pipeline."""

from .divergence import DivergenceSpec, Family, ab_divergence, divergence, fkld, jsd, rkld, wsd
from .errors import (
    ABKDError,
    ConfigurationError,
    DataError,
    InputValidationError,
    NumericOverflowError,
    ParameterError,
    TrainingError,
)
from .gradient import fd_grad_logits, logit_gradient, prob_gradient

__version__ = "0.1.0"
