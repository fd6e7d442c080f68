"""End-to-end runs of the neo command through its python entry point."""

import json
import subprocess
import sys

import numpy as np
import pytest

from neotta import load_state, read_embeddings
from neotta.cli import main


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    """One simulated dataset shared by the adapt/eval/diagnose tests."""
    out = tmp_path_factory.mktemp("sim") / "data"
    code = run_cli(
        "simulate", "--classes", 6, "--dim", 24, "--per-class", 40,
        "--within-std", 0.05, "--shift-norm", 3.0, "--seed", 5, "--out", out,
    )
    assert code == 0
    return out


class TestSimulate:
    def test_writes_expected_files(self, sim_dir):
        for name in ("clean.neoe", "corrupt.neoe", "labels.neol",
                     "head.neoe", "head.bias.neoe", "params.json"):
            assert (sim_dir / name).is_file()
        params = json.loads((sim_dir / "params.json").read_text())
        assert params["classes"] == 6
        assert params["config"]["command"] == "simulate"
        checks = params["collapse_check"]
        assert checks["gram_deviation"]["passed"]
        assert checks["global_mean_norm"]["passed"]

    def test_deterministic_for_fixed_seed(self, sim_dir, tmp_path):
        again = tmp_path / "again"
        code = run_cli(
            "simulate", "--classes", 6, "--dim", 24, "--per-class", 40,
            "--within-std", 0.05, "--shift-norm", 3.0, "--seed", 5, "--out", again,
        )
        assert code == 0
        for name in ("clean.neoe", "corrupt.neoe", "labels.neol", "head.neoe"):
            assert (again / name).read_bytes() == (sim_dir / name).read_bytes()

    def test_other_seed_changes_data(self, sim_dir, tmp_path):
        other = tmp_path / "other"
        run_cli("simulate", "--classes", 6, "--dim", 24, "--per-class", 40,
                "--seed", 6, "--out", other)
        assert (other / "corrupt.neoe").read_bytes() != (sim_dir / "corrupt.neoe").read_bytes()

    def test_rejects_single_class(self, tmp_path):
        assert run_cli("simulate", "--classes", 1, "--dim", 8,
                       "--out", tmp_path / "x") == 3


class TestAdapt:
    def test_snapshot_holds_stream_mean(self, sim_dir, tmp_path, capsys):
        state_path = tmp_path / "state.json"
        code = run_cli("adapt", "--embeddings", sim_dir / "corrupt.neoe",
                       "--state-out", state_path)
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        corrupt = read_embeddings(sim_dir / "corrupt.neoe")
        state = load_state(state_path).to_state()
        assert state.count == corrupt.rows
        np.testing.assert_allclose(
            state.mean, corrupt.data.mean(axis=0), rtol=1e-12, atol=1e-15
        )
        assert doc["n"] == corrupt.rows
        assert doc["mean_norm"] == pytest.approx(np.linalg.norm(state.mean))
        assert doc["config"]["flags"]["batch-size"] == 64

    def test_batch_size_does_not_move_the_mean(self, sim_dir, tmp_path):
        paths = []
        for bs in (5, 64):
            p = tmp_path / f"state_{bs}.json"
            run_cli("adapt", "--embeddings", sim_dir / "corrupt.neoe",
                    "--batch-size", bs, "--state-out", p)
            paths.append(load_state(p).to_state().mean)
        np.testing.assert_allclose(paths[0], paths[1], rtol=1e-12)

    def test_state_in_continues_the_stream(self, sim_dir, tmp_path):
        first = tmp_path / "first.json"
        second = tmp_path / "second.json"
        run_cli("adapt", "--embeddings", sim_dir / "corrupt.neoe",
                "--state-out", first)
        run_cli("adapt", "--embeddings", sim_dir / "corrupt.neoe",
                "--state-in", first, "--state-out", second)
        assert load_state(second).to_state().count == 2 * load_state(first).to_state().count

    def test_unknown_mode_exits_3(self, sim_dir, tmp_path, capsys):
        code = run_cli("adapt", "--embeddings", sim_dir / "corrupt.neoe",
                       "--mode", "none", "--state-out", tmp_path / "s.json")
        capsys.readouterr()
        assert code == 3

    def test_missing_file_exits_2(self, tmp_path, capsys):
        code = run_cli("adapt", "--embeddings", tmp_path / "absent.neoe",
                       "--state-out", tmp_path / "s.json")
        capsys.readouterr()
        assert code == 2

    def test_bad_alpha_exits_3(self, sim_dir, tmp_path, capsys):
        code = run_cli("adapt", "--embeddings", sim_dir / "corrupt.neoe",
                       "--mode", "neo-continual", "--alpha", 1.5,
                       "--state-out", tmp_path / "s.json")
        capsys.readouterr()
        assert code == 3

    def test_csv_summary(self, sim_dir, tmp_path):
        out = tmp_path / "summary.csv"
        run_cli("adapt", "--embeddings", sim_dir / "corrupt.neoe",
                "--state-out", tmp_path / "s.json", "--format", "csv",
                "--out", out)
        lines = out.read_text().splitlines()
        assert lines[0] == "key,value"
        assert any(line.startswith("mean_norm,") for line in lines)


class TestEval:
    def eval_accuracy(self, sim_dir, tmp_path, capsys, *extra):
        code = run_cli(
            "eval", "--embeddings", sim_dir / "corrupt.neoe",
            "--labels", sim_dir / "labels.neol",
            "--head", sim_dir / "head.neoe", *extra,
        )
        assert code == 0
        return json.loads(capsys.readouterr().out)

    def test_adaptation_beats_none_on_shifted_data(self, sim_dir, tmp_path, capsys):
        adapted = self.eval_accuracy(sim_dir, tmp_path, capsys, "--mode", "neo")
        plain = self.eval_accuracy(sim_dir, tmp_path, capsys, "--mode", "none")
        assert adapted["accuracy"] > plain["accuracy"] + 0.1
        assert adapted["config"]["flags"]["protocol"] == "online"
        assert adapted["protocol"] == "online"

    def test_frozen_protocol_with_state_in(self, sim_dir, tmp_path, capsys):
        state_path = tmp_path / "state.json"
        run_cli("adapt", "--embeddings", sim_dir / "corrupt.neoe",
                "--state-out", state_path)
        capsys.readouterr()
        frozen = self.eval_accuracy(
            sim_dir, tmp_path, capsys,
            "--mode", "neo", "--protocol", "frozen", "--state-in", state_path,
        )
        assert frozen["accuracy"] > 0.9

    def test_bad_bins_exits_3(self, sim_dir, capsys):
        code = run_cli("eval", "--embeddings", sim_dir / "corrupt.neoe",
                       "--labels", sim_dir / "labels.neol",
                       "--head", sim_dir / "head.neoe", "--bins", 0)
        capsys.readouterr()
        assert code == 3

    def test_label_length_mismatch_exits_2(self, sim_dir, tmp_path, capsys):
        from neotta import write_labels

        short = tmp_path / "short.neol"
        write_labels(short, np.array([0, 1, 2]))
        code = run_cli("eval", "--embeddings", sim_dir / "corrupt.neoe",
                       "--labels", short, "--head", sim_dir / "head.neoe")
        capsys.readouterr()
        assert code == 2

    def test_csv_report_file(self, sim_dir, tmp_path):
        out = tmp_path / "report.csv"
        code = run_cli("eval", "--embeddings", sim_dir / "corrupt.neoe",
                       "--labels", sim_dir / "labels.neol",
                       "--head", sim_dir / "head.neoe",
                       "--format", "csv", "--out", out)
        assert code == 0
        text = out.read_text()
        assert text.startswith("# n=")
        assert "bin,lo,hi,count,mean_confidence,mean_accuracy" in text
        data_lines = [l for l in text.splitlines()
                      if l and not l.startswith(("#", "bin,"))]
        assert len(data_lines) == 15


class TestDiagnose:
    def diagnose_args(self, sim_dir):
        return ["diagnose", "--clean", sim_dir / "clean.neoe",
                "--corrupt", sim_dir / "corrupt.neoe",
                "--labels", sim_dir / "labels.neol"]

    def test_json_document_shape(self, sim_dir, capsys):
        code = run_cli(*self.diagnose_args(sim_dir), "--no-figures")
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["summary"]["n"] == 240
        assert doc["summary"]["classes"] == 6
        assert doc["summary"]["global_shift_norm"] == pytest.approx(3.0, abs=0.2)
        kinds = [row["adjustment"] for row in doc["alignment"]]
        assert kinds == ["raw", "minus_global", "minus_global_class",
                         "minus_all", "minus_corrupt_mean"]
        assert doc["top_dims"]["n"] == 240
        assert doc["figures"] == []

    def test_figures_render_next_to_out_dir(self, sim_dir, tmp_path):
        out = tmp_path / "report"
        code = run_cli(*self.diagnose_args(sim_dir), "--out", out)
        assert code == 0
        assert (out / "diagnosis.json").is_file()
        assert (out / "alignment.png").stat().st_size > 0
        assert (out / "top_dims.png").stat().st_size > 0
        doc = json.loads((out / "diagnosis.json").read_text())
        assert sorted(doc["figures"]) == [
            str(out / "alignment.png"), str(out / "top_dims.png")
        ]

    def test_explicit_figures_dir(self, sim_dir, tmp_path):
        figs = tmp_path / "figs"
        code = run_cli(*self.diagnose_args(sim_dir), "--figures", figs,
                       "--out", tmp_path / "d.json")
        assert code == 0
        assert (figs / "alignment.png").is_file()

    def test_csv_files(self, sim_dir, tmp_path):
        out = tmp_path / "csvs"
        code = run_cli(*self.diagnose_args(sim_dir), "--format", "csv",
                       "--out", out, "--no-figures")
        assert code == 0
        assert (out / "alignment.csv").read_text().startswith("adjustment,")
        assert (out / "top_dims.csv").read_text().startswith("rank,")

    def test_missing_labels_exits_2(self, sim_dir, tmp_path, capsys):
        code = run_cli("diagnose", "--clean", sim_dir / "clean.neoe",
                       "--corrupt", sim_dir / "corrupt.neoe",
                       "--labels", tmp_path / "absent.neol")
        capsys.readouterr()
        assert code == 2


class TestTransfer:
    @pytest.fixture()
    def manifest(self, tmp_path):
        for i, seed in enumerate((3, 4)):
            run_cli("simulate", "--classes", 5, "--dim", 16, "--per-class", 30,
                    "--shift-norm", 2.0, "--seed", seed,
                    "--out", tmp_path / f"d{i}")
        doc = {
            "domains": [
                {"name": "first", "embeddings": "d0/corrupt.neoe",
                 "labels": "d0/labels.neol"},
                {"name": "second", "embeddings": "d1/corrupt.neoe",
                 "labels": "d1/labels.neol"},
            ],
            "head": "d0/head.neoe",
        }
        path = tmp_path / "run.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        return path

    def test_json_matrices(self, manifest, capsys):
        code = run_cli("transfer", "--manifest", manifest, "--no-figures")
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["domains"] == ["first", "second"]
        cosine = np.array(doc["centroid_cosine"])
        assert cosine.shape == (2, 2)
        np.testing.assert_allclose(np.diag(cosine), 1.0, atol=1e-12)
        delta = np.array(doc["accuracy_delta"])
        assert delta[0, 0] >= 0.0

    def test_figures_and_files(self, manifest, tmp_path):
        out = tmp_path / "report"
        code = run_cli("transfer", "--manifest", manifest, "--out", out)
        assert code == 0
        assert (out / "transfer.json").is_file()
        assert (out / "transfer.png").stat().st_size > 0

    def test_csv_matrices(self, manifest, tmp_path):
        out = tmp_path / "csvs"
        code = run_cli("transfer", "--manifest", manifest, "--format", "csv",
                       "--out", out, "--no-figures")
        assert code == 0
        cosine = (out / "centroid_cosine.csv").read_text()
        assert cosine.splitlines()[0] == "domain,first,second"
        assert (out / "accuracy_delta.csv").is_file()

    def test_single_domain_exits_3(self, manifest, tmp_path, capsys):
        doc = json.loads(manifest.read_text())
        doc["domains"] = doc["domains"][:1]
        solo = manifest.parent / "solo.json"
        solo.write_text(json.dumps(doc), encoding="utf-8")
        code = run_cli("transfer", "--manifest", solo, "--no-figures")
        capsys.readouterr()
        assert code == 3

    def test_bad_manifest_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{", encoding="utf-8")
        code = run_cli("transfer", "--manifest", bad, "--no-figures")
        capsys.readouterr()
        assert code == 2


class TestEntryPoint:
    def test_module_version_smoke(self):
        proc = subprocess.run(
            [sys.executable, "-m", "neotta", "--version"],
            capture_output=True, text=True, timeout=60,
        )
        assert proc.returncode == 0
        assert proc.stdout.strip() == "neo 0.1.0"

    def test_no_command_exits_3(self, capsys):
        code = run_cli()
        capsys.readouterr()
        assert code == 3
