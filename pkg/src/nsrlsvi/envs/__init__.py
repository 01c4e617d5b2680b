from .anisotropic import AnisotropicEnv
from .base import EnvError, GreedyChoice, LayeredEnv, step
from .io import env_from_dict, load_env, save_env
from .lqr import LQREnv, build_lqr
from .reduced import ReducedEnv, reduce_to_span
from .tabular import TabularEnv, build_expansive, build_hidden_reward, build_tabular
from .verify import LBCReport, estimate_gamma, verify_lbc


def build_anisotropic(eps_scale, **kwargs):
    return AnisotropicEnv(eps_scale, **kwargs)


__all__ = [
    "AnisotropicEnv", "EnvError", "GreedyChoice", "LQREnv", "LBCReport", "LayeredEnv",
    "ReducedEnv", "TabularEnv", "build_anisotropic", "build_expansive", "build_hidden_reward",
    "build_lqr", "build_tabular", "env_from_dict", "estimate_gamma", "load_env",
    "reduce_to_span", "save_env", "step", "verify_lbc",
]
