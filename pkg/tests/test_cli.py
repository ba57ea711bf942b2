import json
import subprocess
import sys

import pytest
from helpers import CSC_REMOVED, SMALL_MODEL, csc_shaped_rows, toy_dataset, write_csv_dataset, write_dataset_manifest, write_run

from citesent.cli import main
from citesent.reports import dataset_table, load_summaries

SEVEN = [
    ("cornell", "Movie"),
    ("imdb", "Movie"),
    ("stanford", "Movie"),
    ("instruments", "Product"),
    ("sentiment140", "Twitter"),
    ("us_airline", "Twitter"),
    ("csc_clean", "Scientific"),
]
QUICK = {"epochs": 2, "batch_size": 24}


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    paths = {name: toy_dataset(d, name, prefix=name[:3], seed=i, domain=dom, n_per_class=30)
             for i, (name, dom) in enumerate(SEVEN)}
    return d, paths


def _run(args, out):
    return main(["--out", str(out), *map(str, args)])


def _read(path):
    return path.read_text(encoding="utf-8")


# ------------------------------------------------------------------ clean


def test_clean_csc_shaped_corpus(tmp_path):
    rows = csc_shaped_rows()
    f = write_csv_dataset(tmp_path, "csc", rows)
    m = write_dataset_manifest(tmp_path, "csc", f, {"p": "Positive", "o": "Neutral", "n": "Negative"}, "Scientific")
    assert _run(["clean", m], tmp_path / "out") == 0
    audit = _read(tmp_path / "out/clean/csc.audit.csv").splitlines()
    total = audit[-1].split(",")
    assert total[0] == "Total" and total[4] == "757" and f"{float(total[5]):.2f}" == "8.67"
    removed = {line.split(",")[0]: int(line.split(",")[4]) for line in audit[1:-1]}
    assert removed == CSC_REMOVED
    cleaned = tmp_path / "out/clean/csc.clean.csv"
    assert len(_read(cleaned).splitlines()) == 1 + 8736 - 757

    # idempotent on its own output
    m2 = write_dataset_manifest(tmp_path, "csc2", cleaned, {"p": "Positive", "o": "Neutral", "n": "Negative"}, "Scientific")
    assert _run(["clean", m2, "-o", tmp_path / "again"], tmp_path / "out") == 0
    assert _read(tmp_path / "again/csc2.clean.csv") == _read(cleaned)
    assert _read(tmp_path / "again/csc2.audit.csv").splitlines()[-1].split(",")[4] == "0"


def test_clean_conflicting_pair_and_drop_rows(tmp_path):
    rows = [("Same text", "pos"), ("same  TEXT", "neg"), ("fine", "pos"), ("skip me", "mid"), ("skip me", "mid")]
    f = write_csv_dataset(tmp_path, "c", rows)
    m = write_dataset_manifest(tmp_path, "c", f, {"pos": "Positive", "neg": "Negative", "mid": "Drop"})
    assert _run(["clean", m, "-o", tmp_path / "o"], tmp_path) == 0
    assert _read(tmp_path / "o/c.clean.csv") == "text,label\nfine,pos\nskip me,mid\nskip me,mid\n"
    assert _read(tmp_path / "o/c.audit.csv").splitlines()[-1].split(",")[4] == "2"


def test_clean_jsonl_verbatim(tmp_path):
    lines = ['{"text": "A", "label": "pos", "extra": 1}', '{"label": "pos", "text": "a"}', '{"text": "b", "label": "neg"}']
    f = tmp_path / "j.jsonl"
    f.write_text("\n".join(lines) + "\n")
    m = write_dataset_manifest(tmp_path, "j", f, {"pos": "Positive", "neg": "Negative"}, fmt="jsonl")
    assert _run(["clean", m, "-o", tmp_path / "o"], tmp_path) == 0
    assert _read(tmp_path / "o/j.clean.jsonl") == lines[0] + "\n" + lines[2] + "\n"


# ------------------------------------------------------------------ errors


def test_missing_dataset_file_exits_1_without_run_dir(tmp_path, capsys):
    m = write_dataset_manifest(tmp_path, "gone", tmp_path / "gone.csv", {"p": "Positive", "n": "Negative"})
    run = write_run(tmp_path, "r", [m], model=SMALL_MODEL)
    assert _run(["train", run], tmp_path / "out") == 1
    assert not (tmp_path / "out").exists()
    assert "not found" in capsys.readouterr().err


@pytest.mark.parametrize("blocks", [
    {"schedule": {"kind": "zigzag"}},
    {"schedule": {"kind": "sequential", "order": "SQ"}},
    {"schedule": {"sampling": "up:abc"}},
    {"model": {"encoder": {"variant": "gru"}}},
    {"training": {"epochs": 0}},
    {"split": {"ratios": [0.5, 0.5, 0.5]}},
])
def test_invalid_manifest_exits_1(data, tmp_path, blocks):
    _, paths = data
    run = write_run(tmp_path, "bad", [paths["imdb"]], **blocks)
    assert _run(["train", run], tmp_path / "out") == 1
    assert not (tmp_path / "out").exists()


def test_matrix_needs_two_datasets(data, tmp_path):
    _, paths = data
    run = write_run(tmp_path, "m1", [paths["imdb"]], model=SMALL_MODEL)
    assert _run(["matrix", run], tmp_path / "out") == 1
    assert not (tmp_path / "out").exists()


def test_nan_abort_recorded(data, tmp_path):
    _, paths = data
    run = write_run(tmp_path, "nan", [paths["imdb"]], model=SMALL_MODEL, schedule=QUICK, training={"lr": 1e300})
    assert _run(["train", run], tmp_path / "out") == 2
    s = json.loads(_read(tmp_path / "out/nan/summary.json"))
    assert s["status"] == "diverged" and "non-finite" in s["error"]


# ------------------------------------------------------------------ training runs


def test_train_run_directory_and_determinism(data, tmp_path):
    _, paths = data
    sched = {"kind": "sequential", "order": "STPM", "sampling": "up:60", **QUICK}
    run = write_run(tmp_path, "seq", list(paths.values()), model=SMALL_MODEL, schedule=sched)
    assert _run(["train", run], tmp_path / "a") == 0
    assert _run(["train", run], tmp_path / "b") == 0
    a, b = tmp_path / "a/seq", tmp_path / "b/seq"
    for name in ("train_log.csv", "test_reports.csv", "summary.json", "manifest.json"):
        assert _read(a / name) == _read(b / name), name
    for name in ("manifest.original.json", "checkpoint.npz", "metadata.json"):
        assert (a / name).is_file()
    s = json.loads(_read(a / "summary.json"))
    assert s["label"] == "Up S T P M" and s["status"] == "ok"
    assert s["dataset_order"] == [n for n, _ in SEVEN] and set(s["test"]) == set(s["dataset_order"])
    assert "wall_seconds" in json.loads(_read(a / "metadata.json"))
    # the copied manifest alone re-executes the run
    assert main(["--out", str(tmp_path / "c"), "train", str(a / "manifest.json")]) == 0
    assert _read(tmp_path / "c/seq/train_log.csv") == _read(a / "train_log.csv")


def test_seed_override_and_env_output(data, tmp_path, monkeypatch):
    _, paths = data
    run = write_run(tmp_path, "s", [paths["imdb"]], model=SMALL_MODEL, schedule=QUICK)
    monkeypatch.setenv("CITESENT_OUT", str(tmp_path / "env"))
    assert main(["train", str(run), "--seed", "7"]) == 0
    assert json.loads(_read(tmp_path / "env/s/manifest.json"))["seed"] == 7
    assert main(["--seed", "8", "train", str(run)]) == 0
    assert json.loads(_read(tmp_path / "env/s/summary.json"))["seed"] == 8


def test_shuffled_down_label(data, tmp_path):
    _, paths = data
    run = write_run(tmp_path, "down", [paths["imdb"], paths["csc_clean"]], model=SMALL_MODEL,
                    schedule={"kind": "shuffled", "sampling": "down", **QUICK})
    assert _run(["train", run], tmp_path / "out") == 0
    assert json.loads(_read(tmp_path / "out/down/summary.json"))["label"] == "Shuffled Down"


def test_finetune_logs_both_phases(data, tmp_path):
    _, paths = data
    base = write_run(tmp_path, "base", [paths["imdb"]], model=SMALL_MODEL, schedule=QUICK)
    assert _run(["train", base], tmp_path / "out") == 0
    ft = write_run(tmp_path, "ft", [paths["csc_clean"]], schedule=QUICK,
                   finetune={"checkpoint": str(tmp_path / "out/base"), "epochs": 2})
    assert _run(["finetune", ft], tmp_path / "out") == 0
    log = _read(tmp_path / "out/ft/train_log.csv").splitlines()
    assert [line.split(",")[0] for line in log[1:]] == ["train", "train", "finetune", "finetune"]
    bad = write_run(tmp_path, "ft2", [paths["csc_clean"]], finetune={"checkpoint": str(tmp_path / "nowhere")})
    assert _run(["finetune", bad], tmp_path / "out") == 1


def _multitask_sets(d):
    s = toy_dataset(d, "sent3", ("p", "n", "u"), {"p": "Positive", "n": "Negative", "u": "Neutral"}, 30, 1, "s",
                    "Scientific")
    i = toy_dataset(d, "scicite", ("r", "m", "b"), {"r": "Result", "m": "Method", "b": "Background"}, 30, 2, "i",
                    "Scientific", "Intent")
    return s, i


def test_multitask_and_table8_report(tmp_path):
    s, i = _multitask_sets(tmp_path)
    mt = write_run(tmp_path, "mt", [s, i], model=SMALL_MODEL, schedule={"kind": "multitask", "epochs": 3})
    st_s = write_run(tmp_path, "single_sent", [s], model=SMALL_MODEL, binary=False, schedule=QUICK)
    st_i = write_run(tmp_path, "single_int", [i], model=SMALL_MODEL, task="Intent", schedule=QUICK)
    for r in (mt, st_s, st_i):
        cmd = "multitask" if r == mt else "train"
        assert _run([cmd, r], tmp_path / "out") == 0
    s_mt = json.loads(_read(tmp_path / "out/mt/summary.json"))
    assert set(s_mt["tasks"]) == {"Sentiment", "Intent"}
    assert "val_Intent_macro_f1" in _read(tmp_path / "out/mt/train_log.csv")
    dirs = [tmp_path / "out" / n for n in ("mt", "single_sent", "single_int")]
    assert main(["report", *map(str, dirs), "-o", str(tmp_path / "r.md")]) == 0
    text = _read(tmp_path / "r.md")
    table = text.split("## Multi-task vs single task")[1]
    assert "| Model | Sentiment | Intent |" in table
    assert "| Multi-task |" in table and "| Single task (single_sent) |" in table
    assert "| Single task (single_int) |" in table


def test_report_sequential_table_shape(data, tmp_path):
    _, paths = data
    dirs = []
    for order in ("STPM", "MSTP", "PMST", "TPMS"):
        run = write_run(tmp_path, f"up_{order}", list(paths.values()), model=SMALL_MODEL,
                        schedule={"kind": "sequential", "order": order, "sampling": "up:30", "epochs": 1})
        assert _run(["train", run], tmp_path / "out") == 0
        dirs.append(tmp_path / "out" / f"up_{order}")
    assert main(["report", *map(str, dirs), str(tmp_path / "missing")]) == 0
    table = dataset_table(load_summaries(dirs)).splitlines()
    assert table[0] == "| Run | " + " | ".join(n for n, _ in SEVEN) + " |"
    assert [row.split("|")[1].strip() for row in table[2:]] == ["Up S T P M", "Up M S T P", "Up P M S T", "Up T P M S"]
    assert all(row.count("|") == 9 for row in table)
    one = dataset_table(load_summaries(dirs[:1])).splitlines()
    assert len(one) == 3
    assert main(["report", str(tmp_path / "missing")]) == 1


def test_matrix_and_crossval(data, tmp_path):
    _, paths = data
    mat = write_run(tmp_path, "mat", [paths["imdb"], paths["csc_clean"]], model=SMALL_MODEL, schedule=QUICK)
    assert _run(["--jobs", "2", "matrix", mat], tmp_path / "out") == 0
    csv = _read(tmp_path / "out/mat/matrix.csv").splitlines()
    assert csv[0] == "train\\test,imdb,csc_clean" and len(csv) == 3
    assert "matrix_markdown" in json.loads(_read(tmp_path / "out/mat/summary.json"))
    cv = write_run(tmp_path, "cv", [paths["imdb"]], model=SMALL_MODEL, schedule={"epochs": 1})
    assert _run(["crossval", cv], tmp_path / "out") == 0
    s = json.loads(_read(tmp_path / "out/cv/summary.json"))
    assert s["k"] == 10 and s["stratified"] is True and len(s["folds"]) == 10
    assert len(_read(tmp_path / "out/cv/folds.csv").splitlines()) == 12
    two = write_run(tmp_path, "cv2", [paths["imdb"], paths["csc_clean"]], model=SMALL_MODEL)
    assert _run(["crossval", two], tmp_path / "out") == 1


def test_prepare_and_stats(data, tmp_path, capsys):
    _, paths = data
    run = write_run(tmp_path, "prep", [paths["imdb"], paths["csc_clean"]])
    assert _run(["prepare", run], tmp_path / "out") == 0
    base = tmp_path / "out/prep/prepared/csc_clean"
    n = [len(_read(base / f"{s}.jsonl").splitlines()) for s in ("train", "val", "test")]
    assert n == [48, 6, 6]
    assert not (tmp_path / "out/prep/summary.json").exists()
    assert _run(["stats", paths["csc_clean"]], tmp_path / "out") == 0
    assert "| Positive | 24 | 3 | 3 | 30 | 50.00 |" in capsys.readouterr().out


def test_console_script_and_schema(tmp_path):
    out = subprocess.run([sys.executable, "-m", "citesent.cli", "schema"], capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["required"] == ["datasets"]
    bad = subprocess.run([sys.executable, "-m", "citesent.cli", "train", str(tmp_path / "nope.json")],
                         capture_output=True, text=True)
    assert bad.returncode == 1 and "not found" in bad.stderr
