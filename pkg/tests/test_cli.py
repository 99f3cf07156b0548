import numpy as np
import pytest

from airtk.cli import main
from airtk.dataset import Ontology, make_synthetic_corpus

RATE = 16000

# 0.975 s = exactly 96 frames = one patch at the default frontend
CLIP_S = 0.975


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    manifest, entries = make_synthetic_corpus(root, Ontology(), per_class=8,
                                              duration_s=CLIP_S, rate_hz=RATE, seed=1)
    return root, manifest, entries


@pytest.fixture(scope="module")
def model_path(corpus, tmp_path_factory):
    root, manifest, _ = corpus
    out = tmp_path_factory.mktemp("model") / "model.airf"
    rc = main(["train", str(manifest), "--out", str(out), "--seed", "7", "--trees", "5"])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def eval_wav(corpus, tmp_path_factory):
    """3-segment eval file (Rapping, Cheering, gunshot) with gaps, via mkeval."""
    root, _, _ = corpus
    out_dir = tmp_path_factory.mktemp("eval")
    spec = out_dir / "segments.csv"
    rows = ["path,start_s,end_s,labels,gap_before_s"]
    for c, name in enumerate(["Rapping", "Cheering", "Gunshot, gunfire"]):
        quoted = f'"{name}"' if "," in name else name
        rows.append(f"{root}/syn_c{c}_0000.wav,0,{CLIP_S},{quoted},1.0")
    spec.write_text("\n".join(rows) + "\n")
    out = out_dir / "eval.wav"
    assert main(["mkeval", str(spec), "--out", str(out)]) == 0
    return out


def test_featurize_row_count(corpus, tmp_path):
    root, _, _ = corpus
    manifest = tmp_path / "three.csv"
    lines = ["clip_id,path,start_s,end_s,labels"]
    for c in range(3):
        lines.append(f"ten{c},{root}/syn_c{c}_0000.wav,0,{CLIP_S},{Ontology().classes[c]}")
    # 3 clips of 10 s would give 33 rows; these are one-patch clips -> 3 rows
    manifest.write_text("\n".join(lines).replace("Gunshot, gunfire", '"Gunshot, gunfire"') + "\n")
    out = tmp_path / "feats.emb"
    assert main(["featurize", str(manifest), "--out", str(out)]) == 0
    text = out.read_text().splitlines()
    assert text[0] == "AIREMB1 256"
    assert len(text) == 1 + 3
    assert (tmp_path / "feats.grid.csv").exists()
    assert (tmp_path / "feats.emb.run.json").exists()


def test_featurize_ten_second_clips_give_eleven_patches(tmp_path):
    from airtk.audio_io import save_wav
    from airtk.dataset import synth_class_signal

    lines = ["clip_id,path,start_s,end_s,labels"]
    for c in range(3):
        wav = tmp_path / f"long{c}.wav"
        save_wav(wav, synth_class_signal(c, 10 * RATE, RATE, seed=c), RATE)
        lines.append(f"long{c},{wav},0,10,{'Cat' if c else 'Radio'}")
    manifest = tmp_path / "m.csv"
    manifest.write_text("\n".join(lines) + "\n")
    out = tmp_path / "f.emb"
    assert main(["featurize", str(manifest), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1 + 33  # 11 patches per clip


def test_featurize_empty_manifest_exit_2(tmp_path):
    manifest = tmp_path / "empty.csv"
    manifest.write_text("clip_id,path,start_s,end_s,labels\n")
    assert main(["featurize", str(manifest), "--out", str(tmp_path / "x.emb")]) == 2


def test_featurize_grid_mismatch_exit_2(corpus, tmp_path):
    root, manifest, _ = corpus
    bogus = tmp_path / "bogus.emb"
    bogus.write_text("AIREMB1 4\nwrong_clip,0,0,0.96,1,2,3,4\n")
    rc = main(["featurize", str(manifest), "--out", str(tmp_path / "f.emb"),
               "--embeddings", str(bogus)])
    assert rc == 2


def test_train_reports_and_determinism(corpus, tmp_path):
    root, manifest, _ = corpus
    outs = []
    for run in range(2):
        out = tmp_path / f"m{run}.airf"
        rc = main(["train", str(manifest), "--out", str(out), "--seed", "7", "--trees", "5"])
        assert rc == 0
        assert out.with_suffix(".report.txt").exists()
        assert out.with_suffix(".report.json").exists()
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_train_missing_class_exit_2(corpus, tmp_path):
    root, _, entries = corpus
    manifest = tmp_path / "partial.csv"
    lines = ["clip_id,path,start_s,end_s,labels"]
    for e in entries:
        if e.labels.bits[5]:  # drop every Helicopter sample
            continue
        lines.append(f"{e.clip_id},{e.path},0,{CLIP_S},{Ontology().classes[int(np.flatnonzero(e.labels.bits)[0])]}")
    manifest.write_text("\n".join(lines).replace("Gunshot, gunfire", '"Gunshot, gunfire"') + "\n")
    assert main(["train", str(manifest), "--out", str(tmp_path / "m.airf"), "--trees", "2"]) == 2


def test_query_outputs_intervals(eval_wav, model_path, capsys):
    rc = main(["query", str(eval_wav), str(model_path), "rapping"])
    assert rc == 0
    out = capsys.readouterr().out
    lines = out.strip().splitlines()
    assert lines[0] == "class,start_s,end_s,confidence"
    assert any(line.startswith("Rapping,") for line in lines[1:])


def test_query_json_output(eval_wav, model_path, capsys):
    assert main(["query", str(eval_wav), str(model_path), "cheering", "--json"]) == 0
    import json

    payload = json.loads(capsys.readouterr().out)
    assert "Cheering" in payload


def test_query_no_match_exit_3(eval_wav, model_path, capsys):
    rc = main(["query", str(eval_wav), str(model_path), "dog"])
    assert rc == 3
    assert "Cat" in capsys.readouterr().err  # class list printed


def test_query_high_threshold_yields_subset(eval_wav, model_path, capsys):
    def cells_at(threshold):
        assert main(["query", str(eval_wav), str(model_path), "rapping",
                     "--threshold", str(threshold), "--min-duration", "0", "--merge-gap", "0"]) == 0
        covered = set()
        for line in capsys.readouterr().out.strip().splitlines()[1:]:
            _, start, end, _ = line.rsplit(",", 3)
            covered |= set(range(int(round(float(start) * 100)), int(round(float(end) * 100))))
        return covered

    assert cells_at(0.99) <= cells_at(0.5)


def test_eval_report_shape(eval_wav, model_path, tmp_path, capsys):
    truth = eval_wav.with_suffix(".truth.csv")
    out = tmp_path / "report"
    rc = main(["eval", str(eval_wav), str(truth), str(model_path),
               "rapping", "cheering", "gunfire", "--out", str(out)])
    assert rc == 0
    text = out.with_suffix(".txt").read_text()
    for name in ("ROC AUC", "MCC", "Accuracy", "Precision", "F1 score"):
        assert name in text
    header = text.splitlines()[0].split("  ")
    assert header[-1].strip() == "Mean"
    import json

    payload = json.loads(out.with_suffix(".json").read_text())
    assert set(payload["classes"]) == {"Rapping", "Cheering", "Gunshot, gunfire"}


def test_eval_duration_mismatch_exit_2(eval_wav, model_path, tmp_path):
    bad_truth = tmp_path / "bad.csv"
    bad_truth.write_text("class,start_s,end_s\nCat,0,99999\n")
    rc = main(["eval", str(eval_wav), str(bad_truth), str(model_path), "cat",
               "--out", str(tmp_path / "r")])
    assert rc == 2


def test_mkeval_artifacts(eval_wav):
    assert eval_wav.exists()
    assert eval_wav.with_suffix(".truth.csv").exists()
    assert eval_wav.with_suffix(".mel.pgm").exists()
    assert eval_wav.with_suffix(".mel.csv").exists()
    assert eval_wav.with_suffix(".wav.run.json").exists()


def test_mkeval_zero_segments_exit_2(tmp_path):
    spec = tmp_path / "none.csv"
    spec.write_text("path,start_s,end_s,labels,gap_before_s\n")
    assert main(["mkeval", str(spec), "--out", str(tmp_path / "e.wav")]) == 2


def test_convert_audioset_manifest(tmp_path, capsys):
    src = tmp_path / "as.csv"
    src.write_text('# header\nvid1, 10.0, 20.0, "Cat"\nvid2, 0.0, 5.0, "Dog"\n')
    out = tmp_path / "m.csv"
    assert main(["convert-audioset-manifest", str(src), "--out", str(out),
                 "--audio-dir", str(tmp_path)]) == 0
    assert "1 manifest rows" in capsys.readouterr().out


def test_config_file_and_flag_override(corpus, tmp_path):
    root, manifest, _ = corpus
    cfg = tmp_path / "run.toml"
    cfg.write_text("[forest]\nn_trees = 3\n\n[run]\nseed = 5\n")
    out = tmp_path / "m.airf"
    assert main(["train", str(manifest), "--out", str(out), "--config", str(cfg)]) == 0
    from airtk.forest import load

    assert load(out).hp.n_trees == 3
    assert main(["train", str(manifest), "--out", str(out), "--config", str(cfg),
                 "--trees", "2"]) == 0
    assert load(out).hp.n_trees == 2
