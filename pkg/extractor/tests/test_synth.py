import json

import numpy as np
import pytest
from click.testing import CliRunner

from vit_importance.cli import main
from vit_importance.synth import synthesize_scores


def test_ramp_values(tmp_path):
    profile = synthesize_scores(4, "ramp", 0, str(tmp_path / "p.json"))
    assert profile["scores"] == [0.25, 0.5, 0.75, 1.0]


def test_uniform_constant(tmp_path):
    profile = synthesize_scores(8, "uniform", 0, str(tmp_path / "p.json"))
    assert len(set(profile["scores"])) == 1


def test_heavytail_seeded(tmp_path):
    a = synthesize_scores(196, "heavytail", 5, str(tmp_path / "a.json"))
    b = synthesize_scores(196, "heavytail", 5, str(tmp_path / "b.json"))
    assert a["scores"] == b["scores"]
    c = synthesize_scores(196, "heavytail", 6, str(tmp_path / "c.json"))
    assert a["scores"] != c["scores"]


def test_unknown_distribution(tmp_path):
    with pytest.raises(ValueError):
        synthesize_scores(4, "spiky", 0, str(tmp_path / "p.json"))


def test_cli_synth(tmp_path):
    out = tmp_path / "profile.json"
    result = CliRunner().invoke(main, ["synth", "--g", "196", "--dist", "ramp", "--out", str(out)])
    assert result.exit_code == 0, result.output
    data = json.loads(out.read_text())
    assert data["g"] == 196
    assert data["patch_grid"] == [14, 14]


def test_primary_loader_accepts_synth(tmp_path):
    semlink_importance = pytest.importorskip("semlink.importance")

    out = tmp_path / "profile.json"
    synthesize_scores(196, "heavytail", 1, str(out))
    profile = semlink_importance.load_profile(out)
    assert profile.g == 196
    assert np.all(np.isfinite(profile.scores))
