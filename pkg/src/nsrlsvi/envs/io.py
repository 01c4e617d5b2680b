"""Environment specs as JSON documents."""

import json

from .anisotropic import AnisotropicEnv
from .base import EnvError
from .lqr import LQREnv
from .tabular import TabularEnv, build_expansive, build_hidden_reward, build_tabular


def env_from_dict(spec):
    spec = dict(spec)
    kind = spec.pop("kind", None)
    spec.pop("name", None)
    try:
        if kind == "tabular":
            return TabularEnv(**spec)
        if kind == "random_tabular":
            return build_tabular(spec.pop("S"), spec.pop("A"), spec.pop("seed"), **spec)
        if kind == "hidden_reward":
            return build_hidden_reward(**spec)
        if kind == "expansive":
            return build_expansive(spec["S"])
        if kind == "anisotropic":
            return AnisotropicEnv(**spec)
        if kind == "lqr":
            return LQREnv(**spec)
    except (TypeError, KeyError) as exc:
        raise EnvError(f"invalid {kind} spec: {exc}") from exc
    raise EnvError(f"unknown environment kind {kind!r}")


def load_env(path):
    with open(path, encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise EnvError(f"{path}: not valid JSON ({exc})") from exc
    return env_from_dict(spec)


def save_env(env, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(env.to_dict(), fh, indent=1)
        fh.write("\n")
