"""Named, independent random streams derived from one master seed.

Each stream is a Philox generator keyed by ``(seed, crc32(name))``, so adding
draws to one component never shifts another component's sequence.
"""

import os
import zlib

import numpy as np

SEED_ENV_VAR = "NSRLSVI_SEED"
STREAMS = ("agent-noise", "env-reward", "env-init", "walk")


def stream(seed, name):
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(key,))))


def streams(seed, names=STREAMS):
    return {name: stream(seed, name) for name in names}


def resolve_seed(seed):
    """The config seed unless ``NSRLSVI_SEED`` is set."""
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return int(seed)
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from exc
