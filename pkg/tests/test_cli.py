import json
import os

import numpy as np
import pytest

from gnnsql import autodiff as ad
from gnnsql import checks
from gnnsql.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, load_model, main
from gnnsql.nn import load_checkpoint


def read(path):
    with open(path, "rb") as f:
        return f.read()


def gen(tmp_path, name="data", seed=7, n=2, per=3, test=1):
    out = str(tmp_path / name)
    rc = main(["gen-data", "--out", out, "--seed", str(seed), "--n-schemas", str(n),
               "--per-schema", str(per), "--test-schemas", str(test),
               "--dev-schemas", "1", "--per-eval-schema", "2"])
    assert rc == EXIT_OK
    return out


TINY_TRAIN = ["--word-dim", "8", "--node-dim", "8", "--enc-hidden", "10",
              "--dec-hidden", "10", "--att-dim", "8", "--ff-hidden", "10",
              "--eval-every", "0"]


class TestGenData:
    def test_same_seed_byte_identical(self, tmp_path):
        a = gen(tmp_path, "a", seed=7)
        b = gen(tmp_path, "b", seed=7)
        for fname in ("schemas.jsonl", "train.jsonl", "dev.jsonl", "test.jsonl"):
            assert read(os.path.join(a, fname)) == read(os.path.join(b, fname))

    def test_counts_and_disjoint_schemas(self, tmp_path):
        out = gen(tmp_path, "c", seed=3, n=4, per=5, test=2)
        with open(os.path.join(out, "train.jsonl")) as f:
            train = [json.loads(l) for l in f]
        with open(os.path.join(out, "test.jsonl")) as f:
            test = [json.loads(l) for l in f]
        assert len(train) == 20
        assert not ({r["db_id"] for r in train} & {r["db_id"] for r in test})

    def test_zero_schemas_is_usage_error(self, tmp_path):
        rc = main(["gen-data", "--out", str(tmp_path / "x"), "--n-schemas", "0"])
        assert rc == EXIT_CONFIG


class TestTrain:
    def test_zero_epochs_saves_initialization(self, tmp_path):
        data = gen(tmp_path)
        out = str(tmp_path / "run")
        rc = main(["train", "--data", data, "--out", out, "--seed", "5",
                   "--epochs", "0"] + TINY_TRAIN)
        assert rc == EXIT_OK
        arrays, manifest = load_checkpoint(os.path.join(out, "model.ckpt"))
        # a fresh model with the same seed has identical initialization
        model, _ = load_model(os.path.join(out, "model.ckpt"))
        for name in model.store.names():
            assert np.array_equal(model.store[name].data, arrays[name])
        with open(os.path.join(out, "metrics.jsonl")) as f:
            lines = f.read().splitlines()
        assert len(lines) == 1  # only the epoch-0 evaluation

    def test_same_seed_byte_identical_outputs(self, tmp_path):
        data = gen(tmp_path)
        out_a, out_b = str(tmp_path / "ra"), str(tmp_path / "rb")
        argv = ["train", "--data", data, "--seed", "5", "--epochs", "2"] + TINY_TRAIN
        assert main(argv + ["--out", out_a]) == EXIT_OK
        assert main(argv + ["--out", out_b]) == EXIT_OK
        for fname in ("model.ckpt", "model_final.ckpt", "metrics.jsonl"):
            assert read(os.path.join(out_a, fname)) == read(os.path.join(out_b, fname))

    def test_missing_data_is_data_error(self, tmp_path):
        rc = main(["train", "--data", str(tmp_path / "nope"), "--out",
                   str(tmp_path / "r")])
        assert rc == EXIT_DATA

    def test_bad_config_file_is_config_error(self, tmp_path):
        data = gen(tmp_path)
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("word_dim = banana\n")
        rc = main(["train", "--data", data, "--out", str(tmp_path / "r"),
                   "--config", str(cfg)])
        assert rc == EXIT_CONFIG

    def test_config_file_with_cli_override(self, tmp_path):
        data = gen(tmp_path)
        cfg = tmp_path / "ok.cfg"
        cfg.write_text("epochs = 0\nword_dim = 8\nnode_dim = 8\nenc_hidden = 10\n"
                       "dec_hidden = 10\natt_dim = 8\nff_hidden = 10\neval_every = 0\n")
        out = str(tmp_path / "r")
        rc = main(["train", "--data", data, "--out", out, "--config", str(cfg),
                   "--seed", "9"])
        assert rc == EXIT_OK
        _, manifest = load_checkpoint(os.path.join(out, "model.ckpt"))
        assert manifest["extra"]["config"]["seed"] == 9
        assert manifest["extra"]["config"]["word_dim"] == 8


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cliw")
    data = gen(tmp, seed=13)
    run = str(tmp / "run")
    assert main(["train", "--data", data, "--out", run, "--seed", "4",
                 "--epochs", "1"] + TINY_TRAIN) == EXIT_OK
    return tmp, data, run


class TestPredictEvaluate:
    def test_predict_then_evaluate(self, world):
        tmp, data, run = world
        pred = str(tmp / "pred.jsonl")
        rc = main(["predict", "--checkpoint", os.path.join(run, "model.ckpt"),
                   "--data", data, "--split", "test", "--out", pred,
                   "--beam-size", "2"])
        assert rc == EXIT_OK
        with open(pred) as f:
            records = [json.loads(l) for l in f]
        assert records
        for r in records:
            assert {"db_id", "question", "candidates"} <= set(r)
            for c in r["candidates"]:
                assert {"sql", "logprob", "join_badness"} <= set(c)
        out_json = str(tmp / "eval.json")
        rc = main(["evaluate", "--pred", pred, "--data", data, "--split", "test",
                   "--out", out_json])
        assert rc == EXIT_OK
        doc = json.loads(open(out_json).read())
        assert 0.0 <= doc["accuracy"] <= 1.0

    def test_gold_as_prediction_scores_full_accuracy(self, world):
        tmp, data, run = world
        with open(os.path.join(data, "test.jsonl")) as f:
            gold = [json.loads(l) for l in f]
        pred = str(tmp / "gold_pred.jsonl")
        with open(pred, "w") as f:
            for g in gold:
                f.write(json.dumps({
                    "db_id": g["db_id"], "question": g["question"],
                    "candidates": [{"sql": g["gold_sql"], "logprob": 0.0,
                                    "join_badness": {"same_table_condition": False,
                                                     "unconnected_tables": False,
                                                     "ok": True}}]}) + "\n")
        out_json = str(tmp / "eval_gold.json")
        rc = main(["evaluate", "--pred", pred, "--data", data, "--split", "test",
                   "--out", out_json])
        assert rc == EXIT_OK
        assert json.loads(open(out_json).read())["accuracy"] == 1.0

    def test_analyze_joins_runs(self, world, capsys):
        tmp, data, run = world
        pred = str(tmp / "pred.jsonl")
        rc = main(["analyze-joins", "--pred", pred, "--data", data])
        assert rc == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert {"filtered", "unfiltered"} <= set(doc)

    def test_dimension_mismatch_names_both(self, world):
        tmp, data, run = world
        with pytest.raises(Exception, match="word_dim=8.*word_dim=16"):
            load_model(os.path.join(run, "model.ckpt"), {"word_dim": 16})

    def test_predict_missing_checkpoint_is_data_error(self, world):
        tmp, data, run = world
        rc = main(["predict", "--checkpoint", str(tmp / "ghost.ckpt"), "--data", data,
                   "--out", str(tmp / "o.jsonl")])
        assert rc == EXIT_DATA


class TestGradcheckCommand:
    def test_passes_on_small_components(self, monkeypatch, capsys):
        monkeypatch.setattr(checks, "COMPONENTS", {
            "gru_cell": checks.COMPONENTS["gru_cell"],
            "linking": checks.COMPONENTS["linking"],
        })
        assert main(["gradcheck", "--seed", "1"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.count("PASS") == 2

    def test_seed_variation_still_passes(self, monkeypatch):
        monkeypatch.setattr(checks, "COMPONENTS",
                            {"gru_cell": checks.COMPONENTS["gru_cell"]})
        for seed in (2, 3, 4):
            assert main(["gradcheck", "--seed", str(seed)]) == EXIT_OK

    def test_corrupted_backward_rule_fails(self, monkeypatch, capsys):
        real_tanh = ad.tanh

        def corrupt_tanh(x):
            out = real_tanh(x)
            if out._bwd is not None:
                inner = out._bwd

                def wrong(g):
                    inner(g * 1.05)
                out._bwd = wrong
            return out

        monkeypatch.setattr(ad, "tanh", corrupt_tanh)
        monkeypatch.setattr(checks, "COMPONENTS",
                            {"gru_cell": checks.COMPONENTS["gru_cell"]})
        assert main(["gradcheck", "--seed", "1"]) == EXIT_NUMERIC
        assert "FAIL" in capsys.readouterr().out
