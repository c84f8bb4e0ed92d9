"""Command-line interface: argument handling, outputs, determinism."""

import json

import pytest

from guidedcrop import cli


def _gen(tmp_path, extra=()):
    out = tmp_path / "data"
    rc = cli.main([
        "gen-synth", "--out", str(out), "--n-samples", "30",
        "--n-classes", "4", "--seed", "7", *extra,
    ])
    assert rc == 0
    return out


def test_parse_alpha_grid_forms():
    assert cli.parse_alpha_grid("0.1,0.2,1") == [0.1, 0.2, 1.0]
    grid = cli.parse_alpha_grid("0:1:0.1")
    assert grid[0] == 0.0
    assert grid[-1] == 1.0  # no floating drift at the endpoint
    assert len(grid) == 11
    assert cli.parse_alpha_grid("0:1:0.5") == [0.0, 0.5, 1.0]


def test_parse_alpha_grid_rejects_bad_input():
    from guidedcrop.errors import InvalidParameterError

    for bad in ("", "1:0:0.1", "0:1:0", "0:1", "a,b", "x:y:z"):
        with pytest.raises(InvalidParameterError):
            cli.parse_alpha_grid(bad)


def test_gen_synth_writes_dataset(tmp_path):
    out = _gen(tmp_path)
    assert (out / "manifest.jsonl").is_file()
    assert (out / "classes.json").is_file()
    assert (out / "scenes.json").is_file()
    params = json.loads((out / "params.json").read_text())
    assert params["n_samples"] == 30


def test_classify_end_to_end(tmp_path, capsys):
    data = _gen(tmp_path)
    preds = tmp_path / "preds.jsonl"
    rc = cli.main([
        "classify", "--backend", "fixture", "--manifest",
        str(data / "manifest.jsonl"), "--out", str(preds), "--seed", "5",
        "--guided",
    ])
    assert rc == 0
    lines = preds.read_text().splitlines()
    assert len(lines) == 30
    rec = json.loads(lines[0])
    assert rec["gc_pred"] is not None
    stdout = capsys.readouterr().out
    assert "accuracy" in stdout

    sidecar = json.loads((tmp_path / "preds.jsonl.provenance.json").read_text())
    assert sidecar["config"]["alpha"] == 0.2
    assert sidecar["backend"]["name"] == "fixture"
    assert sidecar["seed"] == 5
    assert not any("time" in k for k in sidecar)


def test_classify_parallelism_is_byte_identical(tmp_path):
    data = _gen(tmp_path)
    outs = []
    for workers in ("1", "4"):
        path = tmp_path / f"p{workers}.jsonl"
        rc = cli.main([
            "classify", "--manifest", str(data / "manifest.jsonl"),
            "--out", str(path), "--guided", "--aug", "raug", "--seed", "5",
            "--parallelism", workers,
        ])
        assert rc == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_classify_baseline_mode(tmp_path):
    data = _gen(tmp_path)
    preds = tmp_path / "base.jsonl"
    rc = cli.main([
        "classify", "--manifest", str(data / "manifest.jsonl"),
        "--out", str(preds),
    ])
    assert rc == 0
    rec = json.loads(preds.read_text().splitlines()[0])
    assert rec["gc_pred"] is None
    assert rec["baseline_pred"] is not None


def test_classify_errors_exit_nonzero(tmp_path, capsys):
    data = _gen(tmp_path)
    manifest_path = data / "manifest.jsonl"
    lines = manifest_path.read_text().splitlines()
    broken = json.loads(lines[0])
    broken["image"] = "no_such_scene"
    lines[0] = json.dumps(broken, sort_keys=True)
    manifest_path.write_text("\n".join(lines) + "\n")
    rc = cli.main([
        "classify", "--manifest", str(manifest_path),
        "--out", str(tmp_path / "p.jsonl"),
    ])
    assert rc == 1
    assert "no_such_scene" in capsys.readouterr().err


def test_missing_scene_store_exits_one(tmp_path, capsys):
    data = _gen(tmp_path)
    rc = cli.main([
        "classify", "--manifest", str(data / "manifest.jsonl"),
        "--scenes", str(tmp_path / "nope.json"),
        "--out", str(tmp_path / "p.jsonl"),
    ])
    assert rc == 1
    assert capsys.readouterr().err.strip()


def test_usage_error_exits_two():
    with pytest.raises(SystemExit) as exc:
        cli.main(["classify", "--backend", "bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def test_runtime_backend_requires_model_dir(capsys):
    rc = cli.main(["classify", "--backend", "runtime", "--manifest", "x.jsonl",
                   "--out", "y.jsonl"])
    assert rc == 1
    assert "--model-dir" in capsys.readouterr().err


def test_sweep_margin_csv(tmp_path):
    data = _gen(tmp_path)
    out = tmp_path / "margin.csv"
    rc = cli.main([
        "sweep-margin", "--manifest", str(data / "manifest.jsonl"),
        "--alphas", "0:1:0.5", "--out", str(out), "--seed", "3",
    ])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("alpha,")
    assert len(lines) == 4  # header + 3 grid points
    assert lines[1].startswith("0.0,")
    assert lines[3].startswith("1.0,")


def test_sweep_size_json(tmp_path):
    data = _gen(tmp_path, extra=("--object-size-range", "0.03,0.9"))
    out = tmp_path / "size.json"
    rc = cli.main([
        "sweep-size", "--manifest", str(data / "manifest.jsonl"),
        "--out", str(out), "--seed", "3",
    ])
    assert rc == 0
    report = json.loads(out.read_text())
    assert report["kind"] == "size_sweep"
    assert len(report["rows"]) == 20
    assert report["rows"][-1]["threshold"] == 1.0


def test_stability_command(tmp_path):
    data = _gen(tmp_path)
    out = tmp_path / "stab.json"
    rc = cli.main([
        "stability", "--manifest", str(data / "manifest.jsonl"),
        "--n-crops", "6", "--out", str(out), "--seed", "2",
    ])
    assert rc == 0
    report = json.loads(out.read_text())
    assert report["kind"] == "stability"
    assert len(report["per_sample"]) == 30


def test_owl_eval_command(tmp_path):
    data = _gen(tmp_path)
    out = tmp_path / "owl.json"
    rc = cli.main([
        "owl-eval", "--manifest", str(data / "manifest.jsonl"),
        "--out", str(out),
    ])
    assert rc == 0
    report = json.loads(out.read_text())
    assert report["kind"] == "accuracy"
    assert set(report["accuracy_by_k"]) == {"1", "5", "10"}


def test_filter_sm_command(tmp_path):
    data = _gen(tmp_path, extra=("--object-size-range", "0.03,0.9"))
    out = tmp_path / "small.jsonl"
    rc = cli.main([
        "filter-sm", "--manifest", str(data / "manifest.jsonl"),
        "--max-object-size", "0.2", "--out", str(out),
    ])
    assert rc == 0
    kept = [json.loads(line) for line in out.read_text().splitlines()]
    assert 0 < len(kept) < 30
    assert all(rec["size"] <= 0.2 for rec in kept)


def test_output_parent_directories_are_created(tmp_path):
    data = _gen(tmp_path)
    preds = tmp_path / "runs" / "a" / "preds.jsonl"
    rc = cli.main([
        "classify", "--manifest", str(data / "manifest.jsonl"),
        "--out", str(preds), "--guided",
    ])
    assert rc == 0 and preds.is_file()
    filtered = tmp_path / "runs" / "b" / "manifest.jsonl"
    rc = cli.main([
        "filter-sm", "--manifest", str(data / "manifest.jsonl"),
        "--max-object-size", "0.5", "--out", str(filtered),
    ])
    assert rc == 0 and filtered.is_file()
    report = tmp_path / "runs" / "c" / "margin.csv"
    rc = cli.main([
        "sweep-margin", "--manifest", str(data / "manifest.jsonl"),
        "--alphas", "0.2,1", "--out", str(report),
    ])
    assert rc == 0 and report.is_file()


def test_classify_respects_max_object_size(tmp_path):
    data = _gen(tmp_path, extra=("--object-size-range", "0.03,0.9"))
    preds = tmp_path / "preds.jsonl"
    rc = cli.main([
        "classify", "--manifest", str(data / "manifest.jsonl"),
        "--out", str(preds), "--max-object-size", "0.2",
    ])
    assert rc == 0
    assert 0 < len(preds.read_text().splitlines()) < 30


def test_classify_with_description_prompts(tmp_path, capsys):
    data = _gen(tmp_path)
    classes = json.loads((data / "classes.json").read_text())
    prompts = {name: [name, f"a photo of a {name}"] for name in classes[:2]}
    ppath = tmp_path / "prompts.json"
    ppath.write_text(json.dumps(prompts))
    rc = cli.main([
        "classify", "--manifest", str(data / "manifest.jsonl"),
        "--out", str(tmp_path / "p.jsonl"), "--prompt-mode", "descriptions",
        "--prompts", str(ppath),
    ])
    assert rc == 0
