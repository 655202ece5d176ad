"""Python access to the streamforge pipeline and its evaluation tools."""

from __future__ import annotations

import json
from typing import Iterable, Mapping, Sequence

from . import _streamforge as _core
from ._streamforge import ConfigError, Error

__all__ = [
    "ConfigError",
    "Error",
    "dataset_stats",
    "dedup_vectors",
    "embed",
    "evaluate_dst",
    "gold_states",
    "judge_aggregate",
    "judge_export",
    "mix",
    "run_pipeline",
    "slot_summary",
    "top_k",
    "validate_config",
]


def run_pipeline(config_path: str, phases: Sequence[str] = (), mode: str = "") -> dict:
    """Runs the named phases (all by default) and returns the run manifest."""
    return json.loads(_core.run_pipeline(str(config_path), list(phases), mode))


def dataset_stats(counts: Mapping[str, tuple[int, int]]) -> dict:
    """counts maps domain -> (dialogues, turns)."""
    return json.loads(_core.dataset_stats(dict(counts)))


def slot_summary(coverage_pct: Sequence[float], distinct_values: Sequence[int]) -> dict:
    return json.loads(_core.slot_summary(list(coverage_pct), list(distinct_values)))


def evaluate_dst(gold: Iterable[dict], pred: Iterable[dict]) -> dict:
    return json.loads(_core.evaluate_dst(json.dumps(list(gold)), json.dumps(list(pred))))


def gold_states(sessions: Iterable[dict]) -> list[dict]:
    return json.loads(_core.gold_states(json.dumps(list(sessions))))


def mix(public_pool: Sequence[dict], synthetic_pool: Sequence[dict], budget: int, ratio: float,
        seed: int = 7) -> tuple[list[dict], dict]:
    out = json.loads(_core.mix(json.dumps(list(public_pool)), json.dumps(list(synthetic_pool)), budget, ratio, seed))
    return out["items"], out["manifest"]


def dedup_vectors(user_vecs, agent_vecs, tau_user: float = 0.85, tau_agent: float = 0.85, rho: float = 0.6,
                  method: str = "components", seed: int = 0) -> dict:
    """Similarity graph, communities and retained indices for raw vectors."""
    return json.loads(_core.dedup_vectors([list(map(float, v)) for v in user_vecs],
                                          [list(map(float, v)) for v in agent_vecs],
                                          tau_user, tau_agent, rho, method, seed))


def top_k(vectors, query, k: int) -> list[tuple[int, float]]:
    return _core.top_k([list(map(float, v)) for v in vectors], list(map(float, query)), k)


def judge_export(sources: Mapping[str, Sequence[dict]], seed: int = 7) -> dict:
    return json.loads(_core.judge_export({k: json.dumps(list(v)) for k, v in sources.items()}, seed))


def judge_aggregate(lines: Iterable[dict], key: dict) -> dict:
    return json.loads(_core.judge_aggregate(json.dumps(list(lines)), json.dumps(key)))


def validate_config(config: dict) -> list[dict]:
    return json.loads(_core.validate_config(json.dumps(config)))


def embed(text: str, dim: int = 256, seed: int = 0x5EED) -> list[float]:
    return _core.embed(text, dim, seed)
