import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from corpus import photo_corpus
from dctshield.image import write_image
from dctshield.quant import QuantTable, save_table


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "dctshield", *map(str, args)],
        capture_output=True, text=True, cwd=cwd,
    )


def tree_hash(directory, suffix=".png"):
    digest = hashlib.sha256()
    for p in sorted(directory.rglob(f"*{suffix}")):
        digest.update(p.name.encode())
        digest.update(p.read_bytes())
    return digest.hexdigest()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    imgs = root / "imgs"
    imgs.mkdir()
    for i, img in enumerate(photo_corpus(6, seed=3, width=48, height=48, style="soft")):
        write_image(img, imgs / f"img{i:02d}.png")
    table = root / "table.json"
    save_table(QuantTable(np.full(64, 16, dtype=int)), table)
    return root


class TestDefend:
    def test_single_file(self, workdir, tmp_path):
        out = tmp_path / "out.png"
        proc = run_cli("defend", "--in", workdir / "imgs" / "img00.png",
                       "--out", out, "--table", workdir / "table.json",
                       "--color-path", "rgb")
        assert proc.returncode == 0, proc.stderr
        assert out.exists()

    def test_batch_hash_stable_across_jobs(self, workdir, tmp_path):
        hashes = []
        for jobs in (1, 3):
            out = tmp_path / f"jobs{jobs}"
            proc = run_cli("defend", "--in", workdir / "imgs", "--out", out,
                           "--table", workdir / "table.json", "--jobs", jobs)
            assert proc.returncode == 0, proc.stderr
            hashes.append(tree_hash(out))
        assert hashes[0] == hashes[1]

    def test_json_flag_emits_machine_output(self, workdir, tmp_path):
        out = tmp_path / "o.png"
        proc = run_cli("defend", "--in", workdir / "imgs" / "img00.png",
                       "--out", out, "--table", "standard-jpeg",
                       "--quality", 75, "--json")
        assert proc.returncode == 0
        doc = json.loads(proc.stdout)
        assert doc["format"] == 1


class TestExitCodes:
    def test_usage_error_is_1(self):
        proc = run_cli("defend", "--in", "x.png")  # missing required flags
        assert proc.returncode == 1

    def test_missing_input_is_2(self, workdir, tmp_path):
        proc = run_cli("defend", "--in", tmp_path / "nope.png",
                       "--out", tmp_path / "o.png",
                       "--table", workdir / "table.json")
        assert proc.returncode == 2

    def test_alpha_image_is_2(self, workdir, tmp_path):
        rgba = tmp_path / "rgba.png"
        Image.new("RGBA", (8, 8), (1, 2, 3, 4)).save(rgba)
        proc = run_cli("defend", "--in", rgba, "--out", tmp_path / "o.png",
                       "--table", workdir / "table.json")
        assert proc.returncode == 2

    def test_corrupted_archive_is_3(self, workdir, tmp_path):
        archive = tmp_path / "a.dsh"
        proc = run_cli("encode", "--in", workdir / "imgs" / "img00.png",
                       "--out", archive, "--table", workdir / "table.json")
        assert proc.returncode == 0
        blob = bytearray(archive.read_bytes())
        blob[:4] = b"XXXX"
        archive.write_bytes(bytes(blob))
        proc = run_cli("decode", "--in", archive, "--out", tmp_path / "o.png",
                       "--table", workdir / "table.json")
        assert proc.returncode == 3

    def test_failing_evaluator_is_4(self, workdir, tmp_path):
        stub = tmp_path / "bad_eval.py"
        stub.write_text("import sys; sys.exit(9)\n")
        proc = run_cli("design", "--benign-dir", workdir / "imgs",
                       "--adv-dir", workdir / "imgs", "--eps", 0.004,
                       "--evaluator", f"{sys.executable} {stub}",
                       "--out", tmp_path / "design.json")
        assert proc.returncode == 4


class TestEncodeDecode:
    def test_directory_mode_round_trip(self, workdir, tmp_path):
        archives = tmp_path / "archives"
        decoded = tmp_path / "decoded"
        defended = tmp_path / "defended"
        for cmd in (
            ("encode", "--in", workdir / "imgs", "--out", archives),
            ("decode", "--in", archives, "--out", decoded),
            ("defend", "--in", workdir / "imgs", "--out", defended),
        ):
            proc = run_cli(*cmd, "--table", workdir / "table.json", "--jobs", 2)
            assert proc.returncode == 0, proc.stderr
        assert sorted(p.name for p in archives.glob("*.dsh")) == \
               [f"img{i:02d}.dsh" for i in range(6)]
        assert tree_hash(decoded) == tree_hash(defended)

    def test_round_trip_matches_defend(self, workdir, tmp_path):
        src = workdir / "imgs" / "img01.png"
        archive = tmp_path / "a.dsh"
        decoded = tmp_path / "dec.png"
        defended = tmp_path / "def.png"
        assert run_cli("encode", "--in", src, "--out", archive,
                       "--table", workdir / "table.json").returncode == 0
        assert run_cli("decode", "--in", archive, "--out", decoded,
                       "--table", workdir / "table.json").returncode == 0
        assert run_cli("defend", "--in", src, "--out", defended,
                       "--table", workdir / "table.json").returncode == 0
        a = np.asarray(Image.open(decoded))
        b = np.asarray(Image.open(defended))
        assert np.array_equal(a, b)


class TestDesign:
    def test_infeasible_grid_exits_zero_with_flag(self, workdir, tmp_path):
        stub = tmp_path / "infeasible.sh"
        stub.write_text('#!/bin/sh\necho \'{"acc_dec": 0.5, "def_eff": 0.1}\'\n')
        stub.chmod(0o755)
        out = tmp_path / "design.json"
        proc = run_cli("design", "--benign-dir", workdir / "imgs",
                       "--adv-dir", workdir / "imgs", "--eps", 0.004,
                       "--evaluator", str(stub),
                       "--out", out, "--json")
        assert proc.returncode == 0, proc.stderr
        doc = json.loads(out.read_text())
        assert doc["report"]["infeasible"] is True
        assert json.loads(proc.stdout)["infeasible"] is True

    def test_external_evaluator_argmax(self, workdir, tmp_path):
        # prefers larger qs_af but declares anything above 26 infeasible
        stub = tmp_path / "eval.sh"
        stub.write_text(
            "#!/bin/sh\n"
            'table=$6\n'
            "qs_af=$(tr ',' '\\n' < \"$table\" | grep -o '[0-9]*' | sort -n | tail -1)\n"
            'if [ "$qs_af" -le 26 ]; then acc=0.0; else acc=0.5; fi\n'
            'echo "{\\"acc_dec\\": $acc, \\"def_eff\\": 0.$qs_af}"\n'
        )
        stub.chmod(0o755)
        out = tmp_path / "design.json"
        table_out = tmp_path / "best.json"
        proc = run_cli("design", "--benign-dir", workdir / "imgs",
                       "--adv-dir", workdir / "imgs", "--eps", 0.004,
                       "--evaluator", str(stub),
                       "--out", out, "--table-out", table_out, "--json")
        assert proc.returncode == 0, proc.stderr
        doc = json.loads(out.read_text())
        assert doc["qs_af"] == 26
        assert doc["qs_of"] == 16
        assert table_out.exists()


class TestPerturbAnalyzeRatio:
    def test_pipeline_and_seed_determinism(self, workdir, tmp_path):
        out_a = tmp_path / "adv_a"
        out_b = tmp_path / "adv_b"
        for out in (out_a, out_b):
            proc = run_cli("perturb", "--in", workdir / "imgs", "--out", out,
                           "--kind", "sign", "--eps", 0.004)
            assert proc.returncode == 0, proc.stderr
        assert tree_hash(out_a) == tree_hash(out_b)
        assert tree_hash(out_a, suffix=".npy") == tree_hash(out_b, suffix=".npy")

        stats_ben = tmp_path / "stats_ben"
        stats_adv = tmp_path / "stats_adv"
        assert run_cli("analyze", "--images", workdir / "imgs",
                       "--channels", "r,g,b", "--out-dir", stats_ben,
                       "--csv").returncode == 0
        csv_lines = (stats_ben / "stats_r.csv").read_text().splitlines()
        assert csv_lines[0] == "band,zigzag_pos,delta" and len(csv_lines) == 65
        assert run_cli("analyze", "--residuals", out_a / "residuals",
                       "--channels", "r,g,b", "--out-dir", stats_adv).returncode == 0
        ratio_path = tmp_path / "ratio.json"
        assert run_cli("ratio", "--adv", stats_adv, "--benign", stats_ben,
                       "--channels", "r,g,b", "--out", ratio_path).returncode == 0
        doc = json.loads(ratio_path.read_text())
        assert sorted(doc["order"]) == list(range(64))


class TestOtherCommands:
    def test_scale_table(self, workdir, tmp_path):
        out = tmp_path / "scaled.json"
        proc = run_cli("scale-table", "--table", workdir / "table.json",
                       "--quality", 25, "--out", out)
        assert proc.returncode == 0
        assert json.loads(out.read_text())["zigzag_steps"] == [32] * 64

    def test_export_augment_deterministic(self, workdir, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            proc = run_cli("export-augment", "--images", workdir / "imgs",
                           "--out", out, "--table", workdir / "table.json",
                           "--qualities", "90,30", "--sigma", 3.0, "--seed", 4)
            assert proc.returncode == 0, proc.stderr
            outs.append(out)
        assert (outs[0] / "manifest.json").read_text() == \
               (outs[1] / "manifest.json").read_text()

    def test_vote_stdout(self, tmp_path):
        (tmp_path / "m1.jsonl").write_text('{"image": "a", "scores": [0.6, 0.4]}\n')
        (tmp_path / "m2.jsonl").write_text('{"image": "a", "scores": [0.3, 0.7]}\n')
        proc = run_cli("vote", "--scores", tmp_path / "m1.jsonl",
                       tmp_path / "m2.jsonl", "--rule", "average")
        assert proc.returncode == 0
        doc = json.loads(proc.stdout.strip())
        assert doc["label"] == 1

    def test_ablate_csv(self, workdir, tmp_path):
        adv = tmp_path / "adv"
        assert run_cli("perturb", "--in", workdir / "imgs", "--out", adv,
                       "--kind", "sign", "--eps", 0.004).returncode == 0
        proc = run_cli("ablate", "--benign-dir", workdir / "imgs",
                       "--adv-dir", adv, "--table", workdir / "table.json",
                       "--csv")
        assert proc.returncode == 0, proc.stderr
        lines = proc.stdout.strip().splitlines()
        assert lines[0].startswith("label,")
        assert len(lines) == 5
