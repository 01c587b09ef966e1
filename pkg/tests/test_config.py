from __future__ import annotations

import random

import pytest

from endcloud.config import (
    config_fields,
    config_path_from_env,
    default_config,
    load_config,
    parse_config_text,
    serialize_config,
    validate_config,
)
from endcloud.errors import ConfigError, ConfigValidationError

PINNED_DEFAULTS = {
    "eval.alpha": 0.8,
    "eval.theta": 0.2,
    "eval.tau": 0.5,
    "eval.sampling_rate": 1.0,
    "generation.max_length": 8192,
    "generation.top_p": 0.8,
    "generation.temperature": 0.6,
    "generation.max_input_length": 256,
    "generation.max_output_length": 512,
    "training.method": "lora",
    "training.fine_tuning_steps": 30000,
    "training.learning_rate": 5e-5,
    "training.per_device_batch_size": 1,
    "training.num_virtual_tokens": 128,
    "training.lora_rank": 8,
    "training.lora_alpha": 32,
    "training.lora_dropout": 0.1,
    "prompt_n": 500,
    "queue_batch_size": 64,
    "escalation_mode": "sync",
}


def test_defaults_exact():
    fields = config_fields(default_config())
    for key, expected in PINNED_DEFAULTS.items():
        assert fields[key] == expected, key


def test_empty_file_yields_defaults(tmp_path):
    path = tmp_path / "empty.conf"
    path.write_text("", encoding="utf-8")
    assert load_config(path) == default_config()


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.conf")


def test_parse_overrides_and_comments():
    cfg = parse_config_text(
        "# comment\n"
        "\n"
        "eval.alpha = 0.5\n"
        "eval.sampling_rate = 0.25\n"
        "end_backend.kind = replay\n"
        "end_backend.fixture_path = fx/end.jsonl\n"
        "prompt_n = 12\n"
    )
    assert cfg.eval.alpha == 0.5
    assert cfg.eval.eval_sampling_rate == 0.25
    assert cfg.end_backend.kind == "replay"
    assert cfg.end_backend.fixture_path == "fx/end.jsonl"
    assert cfg.prompt_n == 12
    assert cfg.eval.theta == 0.2  # untouched default
    assert "eval.alpha" in cfg.explicit_keys
    assert "eval.theta" not in cfg.explicit_keys


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match=r"<string>:2: unknown key"):
        parse_config_text("eval.alpha = 0.5\nnot.a.key = 1\n")
    with pytest.raises(ConfigError, match=r"<string>:1: bad value"):
        parse_config_text("eval.alpha = high\n")
    with pytest.raises(ConfigError, match=r"<string>:1: expected"):
        parse_config_text("just words\n")


def test_validate_ranges():
    cfg = parse_config_text("eval.alpha = 1.5\neval.tau = -0.1\ngeneration.top_p = 0\n")
    keys = {v.key for v in validate_config(cfg)}
    assert keys == {"eval.alpha", "eval.tau", "generation.top_p"}


def test_validate_backend_kind_fields():
    cfg = parse_config_text("end_backend.kind = http_chat\n")
    keys = {v.key for v in validate_config(cfg)}
    assert "end_backend.endpoint" in keys  # endpoint required

    cfg = parse_config_text("end_backend.kind = replay\n")
    keys = {v.key for v in validate_config(cfg)}
    assert "end_backend.fixture_path" in keys

    cfg = parse_config_text("end_backend.fixture_path = x.jsonl\n")
    keys = {v.key for v in validate_config(cfg)}
    assert "end_backend.fixture_path" in keys  # only valid for replay


def test_validate_distinct_backends():
    cfg = parse_config_text(
        "end_backend.model_name = same\n"
        "end_backend.template_text = hi\n"
        "cloud_backend.model_name = same\n"
        "cloud_backend.template_text = hi\n"
    )
    assert any(v.key == "cloud_backend" for v in validate_config(cfg))


def test_validate_method_specific_knobs():
    # stock defaults never flagged, whatever the method
    cfg = parse_config_text("training.method = prefix_tuning\n")
    assert validate_config(cfg) == []
    # explicitly set lora knob under a non-lora method is flagged
    cfg = parse_config_text("training.method = prefix_tuning\ntraining.lora_rank = 4\n")
    assert any(v.key == "training.lora_rank" for v in validate_config(cfg))
    # virtual tokens under lora, explicit
    cfg = parse_config_text("training.num_virtual_tokens = 64\n")
    assert any(v.key == "training.num_virtual_tokens" for v in validate_config(cfg))
    # dropout range
    cfg = parse_config_text("training.lora_dropout = 1.0\n")
    assert any(v.key == "training.lora_dropout" for v in validate_config(cfg))


def test_load_config_raises_on_violations(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("eval.alpha = 2.0\n", encoding="utf-8")
    with pytest.raises(ConfigValidationError) as err:
        load_config(path)
    assert any(v.key == "eval.alpha" for v in err.value.violations)


def test_serialize_round_trip():
    cfg = parse_config_text(
        "eval.alpha = 0.33\n"
        "cloud_backend.kind = replay\n"
        "cloud_backend.fixture_path = c.jsonl\n"
        "training.learning_rate = 0.0001\n"
        "prompt_preamble = act as a helpful agent\n"
    )
    again = parse_config_text(serialize_config(cfg))
    assert again == cfg


def test_serialize_round_trip_fuzz():
    rng = random.Random(99)
    for _ in range(50):
        text = "\n".join(
            line
            for line in (
                f"eval.alpha = {rng.uniform(0, 1):.6f}",
                f"eval.theta = {rng.uniform(0, 1):.6f}",
                f"generation.max_length = {rng.randrange(1, 10000)}",
                f"queue_batch_size = {rng.randrange(1, 300)}",
                f"training.fine_tuning_steps = {rng.randrange(1, 50000)}",
            )
        )
        cfg = parse_config_text(text)
        assert parse_config_text(serialize_config(cfg)) == cfg


def test_config_path_from_env(monkeypatch):
    monkeypatch.delenv("ECC_CONFIG", raising=False)
    assert config_path_from_env() is None
    monkeypatch.setenv("ECC_CONFIG", "/tmp/x.conf")
    assert config_path_from_env() == "/tmp/x.conf"


def test_secrets_by_reference_only():
    cfg = parse_config_text("end_backend.api_key_env = MY_KEY\n")
    assert cfg.end_backend.api_key_env == "MY_KEY"  # the name, never the value
