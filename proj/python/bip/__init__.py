"""Bayesian inverse planning: suites, inference, weak-to-strong policies.

Thin wrappers over the compiled ``_core`` extension. Worlds, suites and
questions are plain JSON-compatible Python objects.
"""

import json

from . import _core
from ._core import (
    ConfigError,
    GenerationError,
    PreconditionError,
    StructuralError,
    SuiteError,
    boltzmann,
    ce_gradient,
    kl_bound_trial,
    theme_ids,
    w2s_combine,
)

__all__ = [
    "ConfigError",
    "GenerationError",
    "PreconditionError",
    "StructuralError",
    "SuiteError",
    "answer_question",
    "boltzmann",
    "ce_gradient",
    "evaluate",
    "generate_suite",
    "kl_bound_trial",
    "oracle",
    "retheme",
    "simulate_episode",
    "theme_ids",
    "theorem",
    "w2s",
    "w2s_combine",
]


def oracle(temperature=0.5):
    return {"oracle": {"temperature": temperature}}


def w2s(large, expert, naive):
    return {"w2s": {"large": large, "expert": expert, "naive": naive}}


def generate_suite(seed=0, n_questions=None, **config):
    config = dict(config, rng_seed=seed)
    if n_questions is not None:
        config["n_questions"] = n_questions
    return json.loads(_core.generate_suite_json(json.dumps(config)))


def simulate_episode(world, goal, state, temperature=0.5, horizon=40, seed=0):
    return json.loads(
        _core.simulate_episode_json(json.dumps(world), goal, json.dumps(state), temperature, horizon, seed)
    )


def answer_question(question, policy=None, epsilon=1e-6):
    policy = policy or oracle()
    return json.loads(_core.answer_question_json(json.dumps(question), json.dumps(policy), epsilon))


def evaluate(suite, policy=None, epsilon=1e-6, parallelism=1):
    """Returns accuracy, protocol_errors, per-question results and the table CSV."""
    policy = policy or oracle()
    out = _core.evaluate_json(json.dumps(suite), json.dumps(policy), epsilon, parallelism)
    out["results"] = [json.loads(line) for line in out.pop("results_jsonl").splitlines() if line]
    return out


def retheme(suite, theme, inverse=False):
    return json.loads(_core.retheme_json(json.dumps(suite), theme, inverse))


def theorem(ks=(2, 8, 64), etas=(1e-3, 1e-2, 1e-1), trials=1000, seed=0, slack=10.0):
    return json.loads(_core.theorem_json(list(ks), list(etas), trials, seed, slack))
