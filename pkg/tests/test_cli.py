import json
import re

import numpy as np
import pytest

from dora import cli
from dora.cli import main
from dora.config import RunConfig
from dora.mesh import TriangleMesh, save_obj, save_ply
from dora.sampling import load_points_bin, load_points_ply
from dora.shapes import bump_box, cube, icosphere, plane_grid

from conftest import zigzag_sheet


@pytest.fixture
def meshes(tmp_path):
    d = tmp_path / "meshes"
    d.mkdir()
    save_obj(cube(0.8), d / "cube.obj")
    save_ply(icosphere(2), d / "sphere.ply")
    save_obj(plane_grid(3), d / "plane.obj")
    return d


def run(argv, capsys=None):
    code = main([str(a) for a in argv])
    out = capsys.readouterr() if capsys else None
    return code, out


def read_json(path):
    return json.loads(open(path).read())


# ------------------------------------------------------------------- help


def test_help_lists_defaults(capsys):
    defaults = RunConfig()
    for command, flags in {
        "sample": {"--tau": defaults.tau, "--n-total": defaults.n_total, "--n-desired": defaults.n_desired},
        "eval": {"--views": defaults.views, "--canny-low": defaults.canny_low, "--canny-high": defaults.canny_high},
        "train-toy": {"--epochs": defaults.epochs, "--kl-weight": defaults.kl_weight, "--arm": defaults.arm},
    }.items():
        with pytest.raises(SystemExit) as exc:
            main([command, "--help"])
        assert exc.value.code == 0
        text = re.sub(r"\s+", " ", capsys.readouterr().out)
        for flag, value in flags.items():
            assert re.search(re.escape(flag) + r"\b.*?\(default: " + re.escape(str(value)) + r"\)", text), flag


def test_every_flag_documents_default(capsys):
    for command in cli.COMMANDS:
        with pytest.raises(SystemExit):
            main([command, "--help"])
        text = capsys.readouterr().out
        for line in text.splitlines():
            m = re.match(r"\s+(--[a-z-]+)", line)
            if m and m.group(1) not in ("--help", "--config", "--verbose", "--output", "--stats", "--table",
                                        "--pred-dir", "--pairs", "--name"):
                block = text[text.index(line):].split("\n  -")[0]
                assert "default:" in block, (command, m.group(1))


# ------------------------------------------------------------------ sample


def test_sample_cube(tmp_path, meshes, capsys):
    out = tmp_path / "cube.ply"
    code, _ = run(["sample", meshes / "cube.obj", "-o", out], capsys)
    assert code == 0
    stats = read_json(f"{out}.json")
    assert stats["n_gamma"] == 12 and stats["n_points"] == 32768
    assert stats["n_salient"] == 16384 and "timings" in stats and "created" in stats
    assert len(load_points_ply(out)) == 32768


def test_sample_high_tau_all_uniform(tmp_path, meshes):
    out = tmp_path / "c.bin"
    assert main(["sample", str(meshes / "cube.obj"), "-o", str(out), "--tau", "179", "--format", "bin",
                 "--n-total", "500", "--n-desired", "100"]) == 0
    pc = load_points_bin(out)
    assert pc.n_salient == 0 and len(pc) == 500


def test_sample_seed_byte_identical(tmp_path, meshes):
    outs = []
    for i in range(2):
        o = tmp_path / f"s{i}.ply"
        assert main(["sample", str(meshes / "cube.obj"), "-o", str(o), "--seed", "7", "--n-total", "2000",
                     "--n-desired", "500", "--reproducible"]) == 0
        outs.append(o)
    assert outs[0].read_bytes() == outs[1].read_bytes()
    a, b = read_json(f"{outs[0]}.json"), read_json(f"{outs[1]}.json")
    a.pop("output"), b.pop("output")
    assert a == b and "timings" not in a and "created" not in a


def test_sample_env_seed(tmp_path, meshes, monkeypatch):
    monkeypatch.setenv("DORA_SEED", "11")
    o = tmp_path / "e.ply"
    assert main(["sample", str(meshes / "cube.obj"), "-o", str(o), "--n-total", "100", "--n-desired", "10"]) == 0
    assert read_json(f"{o}.json")["config"]["seed"] == 11
    assert load_points_ply(o).seed == 11


def test_sample_config_file(tmp_path, meshes):
    cfgp = tmp_path / "run.yaml"
    cfgp.write_text("n-total: 300\nn-desired: 30\nseed: 3\n")
    o = tmp_path / "c.ply"
    assert main(["sample", str(meshes / "cube.obj"), "-o", str(o), "--config", str(cfgp), "--seed", "4"]) == 0
    stats = read_json(f"{o}.json")
    assert stats["n_points"] == 300 and stats["config"]["seed"] == 4


# -------------------------------------------------------------- exit codes


def test_exit_codes(tmp_path, meshes, capsys, monkeypatch):
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 0\nf 1 2 3\n")
    assert main(["sample", str(bad)]) == 1
    assert main(["sample", str(tmp_path / "nope.obj")]) == 1
    assert main(["sample", str(meshes / "cube.obj"), "--n-total", "10", "--n-desired", "20"]) == 1
    assert "exceeds" in capsys.readouterr().err
    assert main(["nonsense"]) == 1
    assert main(["sample", str(meshes / "cube.obj"), "--tau", "abc"]) == 1
    assert main([]) == 1

    def boom(args, cfg):
        raise RuntimeError("unexpected")

    monkeypatch.setitem(cli.COMMANDS, "classify", boom)
    assert main(["classify", str(meshes)]) == 2
    assert "internal error" in capsys.readouterr().err


# ---------------------------------------------------------------- classify


def test_classify_fixture_set(tmp_path, meshes):
    out = tmp_path / "manifest.json"
    assert main(["classify", str(meshes), "-o", str(out)]) == 0
    man = read_json(out)
    assert man["level_counts"]["L1"] == 1 and man["level_counts"]["Unclassified"] == 2
    assert man["tau"] == 30.0 and man["config"]["tau"] == 30.0
    assert set(man["inputs"]) == {str(p) for p in sorted(meshes.iterdir())}


def test_classify_empty_directory(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    code, out = run(["classify", empty, "--reproducible"], capsys)
    assert code == 0
    assert json.loads(out.out)["entries"] == []


# -------------------------------------------------------------------- eval

FAST_EVAL = ["--eval-points", "10000", "--views", "4", "--res", "96", "--reproducible"]


def test_eval_identity(tmp_path, meshes):
    out = tmp_path / "r.json"
    m = meshes / "cube.obj"
    assert main(["eval", str(m), str(m), "-o", str(out)] + FAST_EVAL) == 0
    rep = read_json(out)
    assert rep["table"] == {"F-score(0.01)x100": 100.0, "F-score(0.005)x100": 100.0, "CDx10000": 0.0, "SNEx100": 0.0}
    assert set(rep["raw"]) == {"fscore_0.01", "fscore_0.005", "cd", "sne"}
    assert rep["inputs"]["gt"] == rep["inputs"]["pred"]


def test_eval_differs(tmp_path, meshes):
    out = tmp_path / "r.json"
    assert main(["eval", str(meshes / "cube.obj"), str(meshes / "sphere.ply"), "-o", str(out)] + FAST_EVAL) == 0
    t = read_json(out)["table"]
    assert t["CDx10000"] > 0 and t["SNEx100"] > 0 and t["F-score(0.01)x100"] < 100


# ------------------------------------------------------------------- bench


def four_level_fixture(tmp_path):
    """Zigzag sheets whose salient edge counts fall in L1..L4, each paired with a jittered copy."""
    gt, pred = tmp_path / "gt", tmp_path / "pred"
    gt.mkdir(), pred.mkdir()
    rng = np.random.default_rng(0)
    sizes = {"l1": (10, 10), "l2": (61, 100), "l3": (101, 200), "l4": (226, 225)}
    block = cube(0.3)
    for name, (nx, ny) in sizes.items():
        sheet = zigzag_sheet(nx, ny)
        # a detached block adds 12 salient edges and gives the normal maps strong contrast
        m = TriangleMesh(
            np.concatenate([sheet.vertices, block.vertices + [0.0, 0.0, 0.6]]),
            np.concatenate([sheet.faces, block.faces + sheet.n_vertices]),
        )
        save_ply(m, gt / f"{name}.ply", binary=True)
        jitter = TriangleMesh(m.vertices + rng.normal(0, 1e-3, m.vertices.shape), m.faces)
        save_ply(jitter, pred / f"{name}.ply", binary=True)
    return gt, pred


def test_bench_four_levels(tmp_path, capsys):
    gt, pred = four_level_fixture(tmp_path)
    man = tmp_path / "m.json"
    assert main(["classify", str(gt), "-o", str(man), "--jobs", "2"]) == 0
    levels = {e["id"]: e["level"] for e in read_json(man)["entries"]}
    assert levels == {"l1": "L1", "l2": "L2", "l3": "L3", "l4": "L4"}
    out, table = tmp_path / "report.json", tmp_path / "table.txt"
    code = main(["bench", str(man), "--pred-dir", str(pred), "-o", str(out), "--table", str(table),
                 "--jobs", "2"] + FAST_EVAL)
    assert code == 0
    rep = read_json(out)
    assert [r["id"] for r in rep["rows"]] == ["l1", "l2", "l3", "l4"]
    for name in ("L1", "L2", "L3", "L4"):
        assert rep["counts"][name] == 1 and rep["levels"][name]["cd"] > 0
    assert all(f"{n} (n=1)" in table.read_text() for n in ("L1", "L2", "L3", "L4"))


def test_bench_identical_pairs_and_missing(tmp_path, meshes):
    man = tmp_path / "m.json"
    assert main(["classify", str(meshes / "cube.obj"), str(meshes / "sphere.ply"), "-o", str(man)]) == 0
    box2 = tmp_path / "box2.obj"
    save_obj(bump_box(grid=(1, 1)).mesh(), box2)
    # add a second L1 mesh whose prediction is missing
    data = read_json(man)
    data["entries"].append({"id": "box2", "path": str(box2), "n_gamma": 30, "level": "L1"})
    man.write_text(json.dumps(data))
    pairs = tmp_path / "pairs.json"
    pairs.write_text(json.dumps({"cube": str(meshes / "cube.obj"), "sphere": str(meshes / "sphere.ply"),
                                 "box2": str(tmp_path / "absent.obj")}))
    out = tmp_path / "r.json"
    assert main(["bench", str(man), "--pairs", str(pairs), "-o", str(out)] + FAST_EVAL) == 0
    rep = read_json(out)
    assert rep["levels"]["L1"]["cd"] == 0.0 and rep["levels"]["L1"]["sne"] == 0.0
    assert rep["counts"]["L1"] == 1
    failed = {r["id"]: r["reason"] for r in rep["failed"]}
    assert "missing prediction" in failed["box2"]
    # a smooth sphere has no strong normal-map edges, so its SNE is undefined
    assert "empty edge masks" in failed["sphere"] and len(failed) == 2


def test_bench_mismatch(tmp_path, meshes):
    man = tmp_path / "m.json"
    assert main(["classify", str(meshes / "cube.obj"), "-o", str(man)]) == 0
    pred = tmp_path / "pred"
    pred.mkdir()
    save_obj(cube(), pred / "stranger.obj")
    assert main(["bench", str(man), "--pred-dir", str(pred)] + FAST_EVAL) == 1
    pairs = tmp_path / "pairs.json"
    pairs.write_text(json.dumps({"ghost": "x.obj"}))
    assert main(["bench", str(man), "--pairs", str(pairs)] + FAST_EVAL) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["bench", str(bad), "--pairs", str(pairs)]) == 1


# --------------------------------------------------------------- train-toy

TRAIN_FAST = ["--epochs", "2", "--n-shapes", "2", "--reproducible"]


def test_train_toy_no_ses_logs_uniform(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train-toy", "--arm", "no-ses", "--seed", "0", "-o", str(out)] + TRAIN_FAST) == 0
    lines = [json.loads(l) for l in (out / "log.jsonl").read_text().splitlines()]
    assert lines[0]["event"] == "run" and lines[0]["sampling"] == "uniform"
    epochs = [l for l in lines if l["event"] == "epoch"]
    assert len(epochs) == 2 and all("seconds" not in l for l in epochs)
    assert lines[-1]["event"] == "final" and "fscore_mean" in lines[-1]
    assert (out / "model.ckpt").is_file()
    assert json.loads(capsys.readouterr().out)["arm"] == "no-ses"
