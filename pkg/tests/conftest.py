from __future__ import annotations

import json
from dataclasses import fields, replace
from pathlib import Path

import pytest

from endcloud.backends import clear_backend_caches
from endcloud.config import BackendConfig, EccConfig, EvalConfig, default_config
from endcloud.corpus import SessionResponsePair, Turn

_EVAL_FIELDS = {f.name for f in fields(EvalConfig)}


@pytest.fixture(autouse=True)
def _fresh_caches():
    clear_backend_caches()
    yield
    clear_backend_caches()


def write_replay_fixture(path: Path, mapping: dict[str, str]) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for query, response in mapping.items():
            fh.write(json.dumps({"query": query, "response": response}, ensure_ascii=False) + "\n")
    return path


def make_pair(query: str, pair_id: str = "s:0", response: str = "ref") -> SessionResponsePair:
    return SessionResponsePair(
        context=(Turn(role="customer", text=query, index=0),),
        response=response,
        pair_id=pair_id,
    )


def replay_config(
    tmp_path: Path,
    end_map: dict[str, str],
    cloud_map: dict[str, str],
    **overrides,
) -> EccConfig:
    """Config with both backends replaying from fixtures in tmp_path.

    Overrides naming EvalConfig fields (alpha, theta, tau,
    eval_sampling_rate) land on the nested eval section.
    """
    end_fx = write_replay_fixture(tmp_path / "end-fixture.jsonl", end_map)
    cloud_fx = write_replay_fixture(tmp_path / "cloud-fixture.jsonl", cloud_map)
    cfg = default_config()
    eval_overrides = {k: overrides.pop(k) for k in list(overrides) if k in _EVAL_FIELDS}
    if eval_overrides:
        cfg = replace(cfg, eval=replace(cfg.eval, **eval_overrides))
    return replace(
        cfg,
        end_backend=BackendConfig(kind="replay", model_name="end", fixture_path=str(end_fx)),
        cloud_backend=BackendConfig(kind="replay", model_name="cloud", fixture_path=str(cloud_fx)),
        log_path=str(tmp_path / "events.jsonl"),
        queue_path=str(tmp_path / "queue.jsonl"),
        **overrides,
    )
