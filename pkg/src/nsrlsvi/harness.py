"""Experiment plumbing: run configs, metric files, sweeps and env reports."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
import math
import os
from pathlib import Path

import numpy as np

from .agent import AgentConfig, AgentError, InvariantError, ORACLES, POLICIES, run_experiment
from .design import DesignError, DesignMeasure, frank_wolfe_design
from .envs import estimate_gamma, load_env, reduce_to_span, verify_lbc
from .oracles import feature_radius
from .rng import resolve_seed
from .schedule import compute_schedule

METRICS_HEADER = "round,regret_inst,regret_cum,span_event,optimism,residual_max,wall_ms"
SWEEP_HEADER = "config,seed,round,regret_inst,regret_cum,optimism,mean_regret_cum,stderr_regret_cum"


class ConfigError(ValueError):
    def __init__(self, message, field_name=None, line=None):
        where = []
        if field_name is not None:
            where.append(f"field {field_name!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.field_name = field_name
        self.line = line


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _opt_float(text):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _noise_model(text):
    low = text.strip().lower()
    return None if low in ("", "default", "env") else low


def _opt_str(text):
    return None if text.strip().lower() in ("", "none") else text.strip()


@dataclass
class RunConfig:
    env: str
    T: int = 1000
    seed: int = 0
    oracle: str = "exact"
    eps1: float = 0.0
    eps2: float = 0.0
    eps_B: float = None  # None takes the environment's own value
    scale_override: float = 1.0
    known_reward: bool = False
    policy: str = "nsrlsvi"
    reward_noise: str = None
    oracle_eps: float = 1e-3
    design: str = None
    timing: bool = False
    output: str = "out"
    name: str = None

    def validate(self):
        if self.T < 0:
            raise ConfigError("must be nonnegative", "T")
        if self.oracle not in ORACLES:
            raise ConfigError(f"must be one of {ORACLES}", "oracle")
        if self.policy not in POLICIES:
            raise ConfigError(f"must be one of {POLICIES}", "policy")
        if self.scale_override <= 0:
            raise ConfigError("must be positive", "scale_override")
        for name in ("eps1", "eps2", "eps_B"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError("must be nonnegative", name)
        if self.oracle_eps <= 0:
            raise ConfigError("must be positive", "oracle_eps")
        if self.reward_noise not in (None, "bernoulli", "none"):
            raise ConfigError("must be bernoulli or none", "reward_noise")
        return self

    @property
    def label(self):
        return self.name or Path(self.env).stem


_PARSERS = {
    "env": str, "T": int, "seed": int, "oracle": str, "eps1": float, "eps2": float,
    "eps_B": _opt_float, "scale_override": float, "known_reward": _bool, "policy": str,
    "reward_noise": _noise_model, "oracle_eps": float, "design": _opt_str, "timing": _bool,
    "output": str, "name": _opt_str,
}


def parse_config(text, base_dir=None):
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    Relative ``env`` and ``design`` paths resolve against ``base_dir``
    (``env`` also falls back to a shipped fixture name); ``output`` is taken
    relative to the working directory.
    """
    values, seen = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in _PARSERS:
            raise ConfigError("unknown key", key, lineno)
        if key in seen:
            raise ConfigError(f"duplicate key (first on line {seen[key]})", key, lineno)
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(str(exc), key, lineno) from exc
        seen[key] = lineno
    if "env" not in values:
        raise ConfigError("missing required key", "env")
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    values["env"] = str(resolve_env_path(values["env"], base))
    if values.get("design"):
        values["design"] = str(base / values["design"])
    cfg = RunConfig(**values)
    try:
        return cfg.validate()
    except ConfigError as exc:
        if exc.field_name in seen:
            raise ConfigError(str(exc).split(": ", 1)[1], exc.field_name, seen[exc.field_name]) from None
        raise


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, path.parent)


def fixture_path(name):
    """Path of a shipped fixture file such as ``tabular.json``."""
    return Path(str(resources.files("nsrlsvi") / "fixtures" / name))


def resolve_env_path(spec, base):
    p = Path(spec)
    cand = p if p.is_absolute() else Path(base) / p
    if cand.exists():
        return cand
    for name in (spec, spec + ".json"):
        f = fixture_path(name)
        if f.exists():
            return f
    return cand


def prepare_env(path):
    """Load an env spec and restrict it to the span of its features."""
    return reduce_to_span(load_env(path))


# -- run -----------------------------------------------------------------
def _fmt(x):
    return repr(float(x))


def metrics_lines(logs, timing=False):
    out, cum = [METRICS_HEADER], 0.0
    for log in logs:
        cum += log.regret_inst
        wall = _fmt(log.wall_ms) if timing else "0"
        out.append(f"{log.round},{_fmt(log.regret_inst)},{_fmt(cum)},{int(log.span_event)},"
                   f"{int(log.optimism)},{_fmt(log.residual_max)},{wall}")
    return out


def _write(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class RunResult:
    config: RunConfig
    logs: list
    schedule: object
    d: int
    H: int
    error: str = None
    files: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.error is None

    @property
    def regret(self):
        return float(sum(l.regret_inst for l in self.logs))

    @property
    def span_failures(self):
        return sum(not l.span_event for l in self.logs)

    @property
    def optimism_frequency(self):
        return float(np.mean([l.optimism for l in self.logs])) if self.logs else float("nan")


def _summary_lines(res):
    cfg, logs = res.config, res.logs
    n = len(logs)
    lines = [
        f"env: {cfg.env}",
        f"policy: {cfg.policy}",
        f"oracle: {cfg.oracle}",
        f"seed: {cfg.seed}",
        f"rounds: {n} of {cfg.T}",
        f"d: {res.d}",
        f"H: {res.H}",
        f"cumulative regret: {res.regret!r}",
        f"mean regret per round: {(res.regret / n if n else 0.0)!r}",
        f"span failures: {res.span_failures} (budget dH = {res.d * res.H})",
        f"optimism frequency: {res.optimism_frequency!r}",
        f"max training residual: {max((l.residual_max for l in logs), default=0.0)!r}",
        f"oracle fallbacks: {sum(l.fallback for l in logs)}",
        f"grid-approximated greedy steps: {sum(l.flagged for l in logs)}",
    ]
    lines.append(f"status: {'ok' if res.ok else 'FAILED: ' + res.error}")
    return lines


def execute(cfg, write=True):
    """Run one config; returns a :class:`RunResult`. Invariant and oracle
    failures are captured in ``result.error`` after the files are written."""
    seed = resolve_seed(cfg.seed)
    cfg = replace(cfg, seed=seed)
    env = prepare_env(cfg.env)
    design = DesignMeasure.load(cfg.design) if cfg.design else frank_wolfe_design(env.feature_set())
    gamma = env.gamma if env.gamma is not None else 1.0
    # the schedule needs T >= 1 even for an empty run
    schedule = compute_schedule(env.d, env.H, design.m, max(cfg.T, 1), gamma=gamma, eps1=cfg.eps1,
                                eps2=cfg.eps2, eps_B=env.eps_b if cfg.eps_B is None else cfg.eps_B,
                                scale_override=cfg.scale_override)
    agent_cfg = AgentConfig(policy=cfg.policy, oracle=cfg.oracle, oracle_eps=cfg.oracle_eps,
                            known_reward=cfg.known_reward, reward_noise=cfg.reward_noise)
    logs = []
    res = RunResult(cfg, logs, schedule, env.d, env.H)
    try:
        run_experiment(env, cfg.T, schedule, agent_cfg, seed, design, callback=logs.append)
    except InvariantError as exc:
        res.error = f"invariant '{exc.invariant}' violated at round {exc.round}: {exc}"
    except AgentError as exc:
        res.error = f"agent failure at round {exc.round}, layer {exc.layer}: {exc}"
    if write:
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        res.files = {k: out / f for k, f in (("metrics", "metrics.csv"), ("summary", "summary.txt"),
                                             ("schedule", "schedule.txt"), ("timing", "timing.csv"))}
        _write(res.files["metrics"], metrics_lines(logs, cfg.timing))
        _write(res.files["summary"], _summary_lines(res))
        _write(res.files["schedule"], schedule.lines())
        _write(res.files["timing"], ["round,wall_ms"] + [f"{l.round},{l.wall_ms:.3f}" for l in logs])
    return res


# -- sweep ---------------------------------------------------------------
def _sweep_child(cfg):
    try:
        res = execute(cfg)
    except Exception as exc:  # child failures are reported, not raised
        return cfg, None, f"{type(exc).__name__}: {exc}"
    rows = [(l.regret_inst, l.optimism) for l in res.logs]
    return cfg, rows, res.error


@dataclass
class SweepReport:
    rows: list
    failures: list
    optimism: dict  # config label -> pooled optimism frequency

    @property
    def ok(self):
        return not self.failures


def expand_seeds(configs, seeds, output_root):
    """One config per (config, seed), each writing to its own directory."""
    out = []
    for cfg in configs:
        for s in (seeds or [cfg.seed]):
            out.append(replace(cfg, seed=s, output=str(Path(output_root) / f"{cfg.label}_seed{s}")))
    return out


def sweep(configs, parallelism=1, output=None):
    """Run configs in worker processes and aggregate regret curves by label."""
    configs = list(configs)
    if parallelism > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_sweep_child, configs))
    else:
        results = [_sweep_child(c) for c in configs]
    failures = [(cfg.label, cfg.seed, err) for cfg, _, err in results if err is not None]
    groups = {}
    for cfg, rows, err in results:
        if rows is not None and err is None:
            groups.setdefault(cfg.label, []).append((cfg.seed, rows))
    table, optimism = [], {}
    for label, runs in groups.items():
        T = min(len(rows) for _, rows in runs)
        cums = np.array([np.cumsum([r for r, _ in rows[:T]]) for _, rows in runs]).reshape(len(runs), T)
        mean = cums.mean(axis=0)
        se = cums.std(axis=0, ddof=1) / math.sqrt(len(runs)) if len(runs) > 1 else np.zeros(T)
        optimism[label] = float(np.mean([o for _, rows in runs for _, o in rows])) if T else float("nan")
        for i, (seed, rows) in enumerate(runs):
            for t in range(T):
                table.append((label, seed, t + 1, rows[t][0], cums[i, t], int(rows[t][1]), mean[t], se[t]))
    report = SweepReport(table, failures, optimism)
    if output is not None:
        Path(output).mkdir(parents=True, exist_ok=True)
        lines = [SWEEP_HEADER] + [
            f"{lab},{seed},{t},{_fmt(r)},{_fmt(c)},{o},{_fmt(m)},{_fmt(s)}"
            for lab, seed, t, r, c, o, m, s in table]
        _write(Path(output) / "sweep.csv", lines)
        summ = [f"{lab}: runs {len(groups[lab])}, optimism frequency {optimism[lab]!r}" for lab in groups]
        summ += [f"FAILED {lab} seed {seed}: {err}" for lab, seed, err in failures]
        _write(Path(output) / "sweep_summary.txt", summ)
    return report


# -- reports -------------------------------------------------------------
def verify_report(path, num_probes=100, seed=0):
    """Lines describing LBC residuals, gamma, the design certificate and R_feat."""
    base = load_env(path)
    env = reduce_to_span(base)
    rep = verify_lbc(env, num_probes=num_probes, seed=seed)
    lines = [f"environment: {base.kind}, H = {base.H}, d = {base.d}"]
    if env is not base:
        lines.append(f"features span a {env.d}-dimensional subspace; checks run on the reduced parametrization")
    # continuous feature maps are probed at random points, so only a float-level bound is claimed
    if rep.max_violation <= 1e-9 and base.finite_features:
        verdict = "LBC exact (max residual <= 1e-9)"
    elif rep.max_violation <= 1e-6:
        verdict = "LBC residual <= 1e-6"
    else:
        verdict = f"LBC residual {rep.max_violation:.3e}" + ("" if rep.is_lbc else " (NOT LBC)")
    F = env.feature_set()
    gamma = env.gamma if env.gamma is not None else estimate_gamma(F)
    gtxt = "unknown (too many subsets)" if gamma is None else f"{gamma:.6g}"
    lines.append(f"{verdict}, gamma = {gtxt}, d = {base.d}")
    lines += rep.lines()
    try:
        design = frank_wolfe_design(F)
        lines.append(f"design certificate g(rho) = {design.g_value:.6g} (d = {env.d}, support {design.m})")
    except DesignError as exc:
        lines.append(f"design certificate unavailable: {exc}")
    lines.append(f"R_feat = {feature_radius(F):.6g}")
    return lines, rep


def design_for(path, eps_fw=0.01, output=None):
    env = prepare_env(path)
    design = frank_wolfe_design(env.feature_set(), eps_fw=eps_fw)
    if output is not None:
        design.save(output)
    return design


def cpu_count():
    return max(1, (os.cpu_count() or 1))
