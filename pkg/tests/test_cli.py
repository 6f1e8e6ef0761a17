import json
from pathlib import Path

import numpy as np
import pytest

from conftest import write_config
from ctxsent.cli import load_config, main
from ctxsent.datamodel import read_predictions
from ctxsent.classifier import read_outputs


def _run(*argv):
    return main([str(a) for a in argv])


def _artifacts(run_path: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(run_path.iterdir()) if p.is_file()}


class TestConfig:
    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        write_config(path)
        raw = json.loads(path.read_text())
        raw["mystery"] = 1
        path.write_text(json.dumps(raw))
        from ctxsent.backend import ConfigurationError

        with pytest.raises(ConfigurationError, match="mystery"):
            load_config(path)

    def test_overrides_change_hash(self, tmp_path):
        path = write_config(tmp_path / "config.json")
        base = load_config(path)
        tweaked = load_config(path, {"beta": 0.9})
        assert tweaked.fusion.beta == 0.9
        assert tweaked.config_hash != base.config_hash

    def test_knowledge_type_is_scope_filter_not_override(self, tmp_path):
        path = write_config(tmp_path / "config.json", knowledge_types=["historical", "financial"])
        assert _run("ingest", "--config", path) == 0
        assert _run("generate-context", "--config", path, "--knowledge-type", "financial") == 0
        run_path = tmp_path / "out" / "run"
        assert (run_path / "contexts.financial.jsonl").exists()
        assert not (run_path / "contexts.historical.jsonl").exists()


class TestPipelineCommands:
    def test_full_pipeline_writes_expected_artifacts(self, tmp_path):
        config_path = write_config(tmp_path / "config.json")
        assert _run("pipeline", "--config", config_path) == 0
        run_path = tmp_path / "out" / "run"
        names = {p.name for p in run_path.iterdir()}
        assert "samples.jsonl" in names
        assert "contexts.historical.jsonl" in names
        assert "predictions.base.jsonl" in names
        assert "predictions.historical.jsonl" in names
        assert "fused.cf.historical.jsonl" in names
        assert "metrics.predictions.base.json" in names
        assert "metrics.fused.cf.historical.json" in names
        assert "manifest.ingest.json" in names

    def test_missing_upstream_names_expected_file(self, tmp_path, capsys):
        config_path = write_config(tmp_path / "config.json")
        assert _run("fuse", "--config", config_path) == 1
        err = capsys.readouterr().err
        report = json.loads(err.strip().splitlines()[-1])
        assert "predictions.base.jsonl" in report["error"]["message"]

    def test_fuse_beta_zero_reproduces_base_vectors(self, tmp_path):
        config_path = write_config(tmp_path / "config.json")
        assert _run("ingest", "--config", config_path) == 0
        assert _run("generate-context", "--config", config_path) == 0
        assert _run("predict", "--config", config_path) == 0
        assert _run("fuse", "--config", config_path, "--beta", 0) == 0
        run_path = tmp_path / "out" / "run"
        base = read_outputs(run_path / "predictions.base.jsonl")
        fused = read_predictions(run_path / "fused.cf.historical.jsonl")
        assert len(base) == len(fused) == 30
        for b, f in zip(base, fused):
            assert f.fused.probs == b.dist.probs

    def test_sweep_command(self, tmp_path):
        config_path = write_config(
            tmp_path / "config.json",
            sweep={"alpha_grid": [0.2, 0.3], "beta_grid": [0.0, 0.45, 0.9], "mode": "two-phase"},
        )
        for command in ("ingest", "generate-context", "predict", "sweep"):
            assert _run(command, "--config", config_path) == 0
        payload = json.loads((tmp_path / "out" / "run" / "sweep.historical.json").read_text())
        assert payload["selected_beta"] in (0.0, 0.45, 0.9)
        assert payload["selected_alpha"] in (0.2, 0.3)
        betas_at_fixed = [g["beta"] for g in payload["grid"] if g["alpha"] == 0.3]
        assert set(betas_at_fixed) >= {0.0, 0.45, 0.9}

    def test_evaluate_accepts_fused_and_raw(self, tmp_path):
        config_path = write_config(tmp_path / "config.json")
        assert _run("pipeline", "--config", config_path) == 0
        run_path = tmp_path / "out" / "run"
        assert _run("evaluate", "--config", config_path, "--predictions", "predictions.historical.jsonl") == 0
        payload = json.loads((run_path / "metrics.predictions.historical.json").read_text())
        assert 0.0 <= payload["macro_f1"] <= 1.0
        entropy_payload = json.loads((run_path / "entropy.predictions.historical.json").read_text())
        assert entropy_payload["hard"]["hard_only"] is True

    def test_manifest_contents(self, tmp_path):
        config_path = write_config(tmp_path / "config.json")
        assert _run("ingest", "--config", config_path) == 0
        manifest = json.loads((tmp_path / "out" / "run" / "manifest.ingest.json").read_text())
        assert manifest["command"] == "ingest"
        assert manifest["outputs"] == ["samples.jsonl"]
        assert len(manifest["config_hash"]) == 64
        assert "tiny30.jsonl" in manifest["inputs"]
        assert "ctxsent" in manifest["versions"]


class TestDeterminism:
    def test_two_runs_byte_identical(self, tmp_path):
        (tmp_path / "first").mkdir()
        (tmp_path / "second").mkdir()
        first_config = write_config(tmp_path / "first" / "config.json")
        second_config = write_config(tmp_path / "second" / "config.json")
        second_dir = tmp_path / "second"
        assert _run("pipeline", "--config", first_config) == 0
        assert _run("pipeline", "--config", second_config) == 0
        first = _artifacts(tmp_path / "first" / "out" / "run")
        second = _artifacts(second_dir / "out" / "run")
        assert first.keys() == second.keys()
        for name in first:
            assert first[name] == second[name], f"artifact {name} differs between runs"

    def test_stage_rerun_byte_identical(self, tmp_path):
        config_path = write_config(tmp_path / "config.json")
        assert _run("pipeline", "--config", config_path) == 0
        run_path = tmp_path / "out" / "run"
        before = _artifacts(run_path)
        assert _run("predict", "--config", config_path) == 0
        assert _run("fuse", "--config", config_path) == 0
        assert _run("evaluate", "--config", config_path, "--predictions", "fused.cf.historical.jsonl") == 0
        after = _artifacts(run_path)
        assert before == after


class TestJudgeAndSaliencyCommands:
    def test_judge_prompt_stdout(self, capsys):
        assert _run("judge-prompt", "--sentence", "s", "--context1", "c1", "--context2", "c2") == 0
        out = capsys.readouterr().out
        assert "1. Context1 is better." in out
        assert 'Source Sentence: "s"' in out

    def test_analyze_saliency(self, tmp_path):
        config_path = write_config(tmp_path / "config.json")
        dump_path = tmp_path / "dump.json"
        attention = np.full((2, 4, 4), 0.5)
        grad = np.full((2, 4, 4), 2.0)
        dump_path.write_text(json.dumps({
            "metadata": {"model_id": "m", "sample_id": "s"},
            "prediction_index": 3,
            "context_indices": [0],
            "input_indices": [1, 2],
            "layers": [{"attention": attention.tolist(), "grad": grad.tolist()}],
        }))
        assert _run("analyze-saliency", "--config", config_path, "--dump", dump_path) == 0
        csv_text = (tmp_path / "out" / "run" / "saliency.dump.csv").read_text()
        assert csv_text.splitlines()[1] == "0,2.0,2.0"
