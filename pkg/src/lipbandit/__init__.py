"""Lagrangian and Whittle index policies for average-reward restless bandits."""
from .arm import (CONVENTION_HEADER, ArmModel, BanditInstance, InputDomainError, LambdaConvention, load_arm,
                  sample_transition, save_arm, subsidized_reward, validate_arm)
from .exact import (ConvergenceError, lagrangian_index_table, optimal_lambda, product_mdp_oracle, rvi_q,
                    whittle_index, indexability_check)
from .kernels import default_backend_name

__version__ = "0.1.0"

__all__ = [
    "CONVENTION_HEADER", "ArmModel", "BanditInstance", "ConvergenceError", "InputDomainError",
    "LambdaConvention", "default_backend_name", "indexability_check", "lagrangian_index_table", "load_arm",
    "optimal_lambda", "product_mdp_oracle", "rvi_q", "sample_transition", "save_arm", "subsidized_reward",
    "validate_arm", "whittle_index", "__version__",
]
