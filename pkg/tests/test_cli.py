"""Command-line interface: full pipeline, error codes, and artifacts."""

import json

import pytest
import yaml

from phonemix import cli

TINY_CLI_CFG = {
    "corpus": {
        "n_text_utts": 120,
        "n_unlabeled_speech_utts": 40,
        "n_paired_utts": 40,
        "text_vocab_size": 10,
        "phoneme_vocab_size": 5,
        "feature_dim": 6,
        "min_utt_len": 3,
        "max_utt_len": 5,
        "dev_fraction": 0.2,
    },
    "model": {"model_dim": 16, "ffn_dim": 32, "heads": 2,
              "layers_speech_enc": 1, "layers_shared_enc": 1, "layers_dec": 1},
    "train": {"stage1_steps": 6, "stage2_steps": 12, "finetune_steps": 4,
              "batch_size": 2, "eval_interval": 6, "dev_eval_utts": 4},
    "pipeline": {"codebook_k": 6, "bpe_vocab": 16, "teacher_dim": 6},
    "beam": {"beam_size": 2, "max_len": 8},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump(TINY_CLI_CFG))
    data = root / "data"
    exp = root / "exp"
    assert cli.main(["--config", str(cfg_path), "--quiet",
                     "synth-data", "--out", str(data)]) == 0
    return root, cfg_path, data, exp


def run(args):
    return cli.main(["--quiet"] + args)


class TestPipeline:
    def test_full_pipeline_emits_ter(self, workspace, capsys):
        root, cfg, data, exp = workspace
        base = ["--config", str(cfg), "--quiet"]
        common = ["--data", str(data), "--exp", str(exp)]
        assert cli.main(base + ["train-codebook"] + common) == 0
        assert cli.main(base + ["train-bpe"] + common) == 0
        assert cli.main(base + ["train-lm"] + common) == 0
        assert cli.main(base + ["pretrain"] + common) == 0
        assert cli.main(base + ["finetune"] + common) == 0
        hyp = root / "hyp.tsv"
        assert cli.main(base + ["decode"] + common
                        + ["--checkpoint", str(exp / "finetuned.npz"),
                           "--max-utts", "4", "--out", str(hyp)]) == 0
        capsys.readouterr()
        assert cli.main(["eval", "--hyp", str(hyp),
                         "--ref", str(hyp.with_suffix(".refs.tsv"))]) == 0
        out = capsys.readouterr().out
        assert out.startswith("TER ")
        float(out.split()[1])

    def test_hypothesis_format(self, workspace):
        root, *_ = workspace
        for line in (root / "hyp.tsv").read_text().splitlines():
            uid, score, tokens = line.split("\t")
            float(score)
            [int(t) for t in tokens.split()] if tokens.strip() else []

    def test_artifacts_registry_hashes(self, workspace):
        import hashlib
        root, cfg, data, exp = workspace
        reg = json.loads((exp / "artifacts.json").read_text())
        for name in ("codebook", "bpe", "lm", "pretrained", "finetuned"):
            entry = reg[name]
            digest = hashlib.sha256(
                (exp / entry["path"]).read_bytes()).hexdigest()
            assert digest == entry["sha256"]

    def test_config_snapshot_written(self, workspace):
        root, cfg, data, exp = workspace
        snap = exp / "config.yaml"
        assert snap.exists()
        loaded = yaml.safe_load(snap.read_text())
        assert loaded["train"]["stage2_steps"] == 12

    def test_encode_units_output(self, workspace, tmp_path):
        root, cfg, data, exp = workspace
        out = tmp_path / "units.tsv"
        assert cli.main(["--config", str(cfg), "--quiet", "encode-units",
                         "--data", str(data), "--exp", str(exp),
                         "--out", str(out)]) == 0
        line = out.read_text().splitlines()[0]
        uid, codes = line.split("\t")
        assert all(int(c) >= 0 for c in codes.split())


class TestErrors:
    def test_eval_identical_files_gives_zero(self, tmp_path, capsys):
        f = tmp_path / "a.tsv"
        f.write_text("u1\t1 2 3\nu2\t4\n")
        assert cli.main(["eval", "--hyp", str(f), "--ref", str(f)]) == 0
        assert "TER 0.0000" in capsys.readouterr().out

    def test_missing_artifact_names_producer(self, workspace, tmp_path,
                                             capsys):
        root, cfg, data, exp = workspace
        empty_exp = tmp_path / "fresh"
        code = cli.main(["--config", str(cfg), "--quiet", "pretrain",
                         "--data", str(data), "--exp", str(empty_exp)])
        assert code == cli.EXIT_MISSING_ARTIFACT
        assert "train-codebook" in capsys.readouterr().err

    def test_missing_data_names_synth(self, workspace, tmp_path, capsys):
        root, cfg, data, exp = workspace
        code = cli.main(["--config", str(cfg), "--quiet", "train-codebook",
                         "--data", str(tmp_path / "nowhere"),
                         "--exp", str(tmp_path / "e")])
        assert code == cli.EXIT_MISSING_ARTIFACT
        assert "synth-data" in capsys.readouterr().err

    def test_bad_config_schema(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("junk_section: {a: 1}\n")
        assert cli.main(["--config", str(bad),
                         "dump-config"]) == cli.EXIT_CONFIG
        assert "junk_section" in capsys.readouterr().err

    def test_unknown_flag_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["--no-such-flag", "eval"])
        assert exc.value.code == 2

    def test_unknown_subcommand_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 2

    def test_dump_config_prints_defaults(self, capsys):
        assert cli.main(["dump-config"]) == 0
        data = yaml.safe_load(capsys.readouterr().out)
        assert data["train"]["sample_ratios"]["msp"] == 4

    def test_seed_flag_propagates(self, capsys):
        assert cli.main(["--seed", "7", "dump-config"]) == 0
        data = yaml.safe_load(capsys.readouterr().out)
        assert data["train"]["seed"] == 7
        assert data["corpus"]["seed"] == 7


class TestDeterminism:
    def test_synth_data_reproducible(self, workspace, tmp_path):
        root, cfg, data, exp = workspace
        other = tmp_path / "data2"
        assert cli.main(["--config", str(cfg), "--quiet", "synth-data",
                         "--out", str(other)]) == 0
        assert ((other / "manifest.jsonl").read_bytes()
                == (data / "manifest.jsonl").read_bytes())
        name = next((other / "features").iterdir()).name
        assert ((other / "features" / name).read_bytes()
                == (data / "features" / name).read_bytes())
