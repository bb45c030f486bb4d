import logging

import pytest

from hypmetrics.services.errors import DomainError
from hypmetrics.services.sampling import (
    SearchMode,
    draw_tuples,
    parallel_map,
    resolve_mode,
    sample_blocks,
)
from hypmetrics.services.settings import load_settings


def test_env_file_is_read(tmp_path, monkeypatch):
    monkeypatch.delenv("HYPMETRICS_SEED", raising=False)
    monkeypatch.delenv("HYPMETRICS_SAMPLES", raising=False)
    env_path = tmp_path / ".env"
    env_path.write_text("HYPMETRICS_SEED=5\nHYPMETRICS_SAMPLES=1000\n")
    settings = load_settings(env_path)
    assert settings.seed == 5
    assert settings.samples == 1000


def test_process_env_beats_file(tmp_path, monkeypatch):
    env_path = tmp_path / ".env"
    env_path.write_text("HYPMETRICS_SEED=5\n")
    monkeypatch.setenv("HYPMETRICS_SEED", "9")
    assert load_settings(env_path).seed == 9


def test_bad_integer_falls_back(tmp_path, monkeypatch, caplog):
    monkeypatch.setenv("HYPMETRICS_QUAD_BUDGET", "lots")
    with caplog.at_level(logging.WARNING):
        settings = load_settings(tmp_path / "missing.env")
    assert settings.quad_budget == 500_000
    assert "HYPMETRICS_QUAD_BUDGET" in caplog.text


def test_override_ignores_none(tmp_path, monkeypatch):
    monkeypatch.delenv("HYPMETRICS_SEED", raising=False)
    settings = load_settings(tmp_path / "missing.env")
    changed = settings.override(seed=3, threads=None)
    assert changed.seed == 3
    assert changed.threads == settings.threads


def test_search_mode_validation():
    with pytest.raises(DomainError):
        SearchMode("random")
    with pytest.raises(DomainError):
        SearchMode.sampled(samples=0, seed=1)
    assert SearchMode.sampled(10, 4).as_dict() == {"kind": "sampled", "samples": 10, "seed": 4}


def test_auto_mode_resolves_by_budget():
    auto = SearchMode.auto(100, 7)
    assert resolve_mode(auto, True, "scan").is_exhaustive
    sampled = resolve_mode(auto, False, "scan")
    assert sampled == SearchMode.sampled(100, 7)


def test_sample_blocks_cover_the_budget():
    blocks = sample_blocks(70_000, 32_768)
    assert blocks == [(0, 32_768), (1, 32_768), (2, 4_464)]


def test_distinct_tuples(rng):
    idx = draw_tuples(rng, 5000, 6, 4, distinct=True)
    assert idx.shape == (5000, 4)
    assert all(len(set(row)) == 4 for row in idx.tolist())
    with pytest.raises(DomainError):
        draw_tuples(rng, 1, 3, 4, distinct=True)


def test_parallel_map_keeps_order():
    items = list(range(50))
    assert parallel_map(lambda v: v * v, items, threads=4) == [v * v for v in items]
