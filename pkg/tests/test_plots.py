from pathlib import Path

import pytest

from interviewgen import plots


@pytest.fixture()
def records():
    out = []
    for scale in (1.0, 0.5):
        for condition in ("pretrained", "scratch"):
            for seed in (1, 2):
                for metric in ("bleu1", "dist1", "entity_f1"):
                    out.append(
                        {"scale": scale, "condition": condition, "seed": seed,
                         "metric": metric, "value": 0.3 + 0.1 * seed}
                    )
    return out


def test_scale_sweep_written(records, tmp_path):
    paths = plots.scale_sweep_figures(records, tmp_path)
    assert paths and Path(paths[0]).exists()
    assert Path(paths[0]).stat().st_size > 1000


def test_heatmap_from_trace(tmp_path):
    trace = {
        "steps": [{"gate": 0.4, "slot_weights": [0.2], "top_tokens": []}],
        "memory": {
            "slots": [
                {"slot": 0, "beta": [0.7, 0.2, 0.1]},
                {"slot": 1, "beta": [0.1, 0.8, 0.1]},
            ],
            "field_keys": ["school", "experience_1", "skills"],
            "field_parts": ["basic", "work_experience", "basic"],
        },
    }
    path = plots.attention_heatmap(trace, tmp_path / "heat.png")
    assert Path(path).exists()
    spark = plots.gate_sparkline(trace, tmp_path / "gate.png")
    assert Path(spark).exists()


def test_heatmap_empty_slots_rejected(tmp_path):
    trace = {"steps": [], "memory": {"slots": [], "field_keys": [], "field_parts": []}}
    with pytest.raises(ValueError):
        plots.attention_heatmap(trace, tmp_path / "x.png")
