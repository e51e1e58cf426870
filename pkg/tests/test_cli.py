"""CLI behavior: subcommands, JSON output, and exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from dermtriage.cli import main
from dermtriage.imaging import save_image
from dermtriage.inference import clear_backend_cache
from dermtriage.reporting import DISCLAIMER

DATA = Path(__file__).parent / "data"


@pytest.fixture(autouse=True)
def fresh_backend_cache():
    clear_backend_cache()
    yield
    clear_backend_cache()


@pytest.fixture
def runner():
    return CliRunner()


def write_png(path, shade=0.5, size=8):
    rng = np.random.default_rng(7)
    arr = np.clip(rng.normal(shade, 0.05, size=(size, size, 3)), 0.0, 1.0)
    save_image(path, arr)
    return path


def write_manifest_file(path, n_nv=10, n_bcc=10):
    lines = [f"img/nv_{i}.png,NV" for i in range(n_nv)]
    lines += [f"img/bcc_{i}.png,BCC" for i in range(n_bcc)]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_roster(tmp_path, dists):
    entries = []
    for i, (p_nv, p_bcc) in enumerate(dists):
        cfg = tmp_path / f"mock_{i}.cfg"
        cfg.write_text(f"mode=table\nfallback={p_nv},{p_bcc}\n")
        entries.append(
            {
                "model_id": f"mock-{i}",
                "kind": "mock",
                "source": str(cfg),
                "input_shape": None,
            }
        )
    roster = tmp_path / "roster.json"
    roster.write_text(json.dumps({"backends": entries}))
    return roster


class TestPreprocess:
    def test_processes_directory(self, runner, tmp_path):
        src = tmp_path / "in"
        src.mkdir()
        write_png(src / "a.png")
        write_png(src / "b.png", shade=0.3)
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            [
                "preprocess", str(src), str(out),
                "--patch", "1", "--search", "2", "--size", "8",
            ],
        )
        assert result.exit_code == 0, result.output
        assert "processed 2 of 2" in result.output
        assert sorted(p.name for p in out.iterdir()) == ["a.png", "b.png"]

    def test_json_summary(self, runner, tmp_path):
        src = tmp_path / "in"
        src.mkdir()
        write_png(src / "a.png")
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            ["preprocess", str(src), str(out), "--no-denoise", "--size", "8", "--json"],
        )
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["processed"] == 1
        assert payload["failed"] == []

    def test_partial_failure_exits_1(self, runner, tmp_path):
        src = tmp_path / "in"
        src.mkdir()
        write_png(src / "good.png")
        (src / "bad.png").write_bytes(b"not really an image")
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            ["preprocess", str(src), str(out), "--no-denoise", "--size", "8", "--json"],
        )
        assert result.exit_code == 1
        payload = json.loads(result.output)
        assert payload["processed"] == 1
        assert payload["failed"][0]["file"] == "bad.png"

    def test_worker_pool_matches_serial(self, runner, tmp_path):
        src = tmp_path / "in"
        src.mkdir()
        for i in range(4):
            write_png(src / f"img_{i}.png", shade=0.2 + 0.15 * i)
        serial, pooled = tmp_path / "serial", tmp_path / "pooled"
        for out, workers in ((serial, "1"), (pooled, "3")):
            result = runner.invoke(
                main,
                [
                    "preprocess", str(src), str(out),
                    "--no-denoise", "--size", "8", "--workers", workers,
                ],
            )
            assert result.exit_code == 0
        for name in ("img_0.png", "img_3.png"):
            assert (serial / name).read_bytes() == (pooled / name).read_bytes()

    def test_empty_directory_exits_2(self, runner, tmp_path):
        src = tmp_path / "in"
        src.mkdir()
        result = runner.invoke(main, ["preprocess", str(src), str(tmp_path / "out")])
        assert result.exit_code == 2

    def test_nonpositive_h_exits_2(self, runner, tmp_path):
        src = tmp_path / "in"
        src.mkdir()
        write_png(src / "a.png")
        result = runner.invoke(
            main,
            ["preprocess", str(src), str(tmp_path / "out"), "--nlm-h", "0"],
        )
        assert result.exit_code == 2


class TestSplit:
    def test_writes_three_manifests(self, runner, tmp_path):
        manifest = write_manifest_file(tmp_path / "all.txt")
        result = runner.invoke(main, ["split", str(manifest), "--json"])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["train"]["count"] == 16
        assert payload["val"]["count"] == 2
        assert payload["test"]["count"] == 2
        assert payload["train"]["by_class"] == {"NV": 8, "BCC": 8}
        for name in ("train", "val", "test"):
            assert Path(payload[name]["path"]).is_file()
        assert (tmp_path / "all.train.txt").is_file()

    def test_split_is_a_partition(self, runner, tmp_path):
        manifest = write_manifest_file(tmp_path / "all.txt")
        result = runner.invoke(main, ["split", str(manifest), "--json"])
        payload = json.loads(result.output)
        seen = []
        for name in ("train", "val", "test"):
            seen += [
                line.rsplit(",", 1)[0]
                for line in Path(payload[name]["path"]).read_text().splitlines()
                if line.strip()
            ]
        original = [
            line.rsplit(",", 1)[0]
            for line in manifest.read_text().splitlines()
            if line.strip()
        ]
        assert sorted(seen) == sorted(original)

    def test_bad_fractions_exit_2(self, runner, tmp_path):
        manifest = write_manifest_file(tmp_path / "all.txt")
        result = runner.invoke(
            main, ["split", str(manifest), "--train", "0.9", "--val", "0.2"]
        )
        assert result.exit_code == 2

    def test_malformed_manifest_exits_1(self, runner, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("img/a.png,NV\nimg/b.png,WAT\n")
        result = runner.invoke(main, ["split", str(bad)])
        assert result.exit_code == 1


class TestClassify:
    def test_json_decision(self, runner, tmp_path):
        roster = write_roster(tmp_path, [(0.2, 0.8), (0.3, 0.7), (0.1, 0.9)])
        image = write_png(tmp_path / "lesion.png")
        result = runner.invoke(
            main,
            [
                "classify", "--image", str(image), "--backends", str(roster),
                "--no-denoise", "--no-equalize", "--size", "8", "--json",
            ],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["decision"]["final_class"] == "BCC"
        assert payload["decision"]["consensus"] == "unanimous"
        assert len(payload["image_key"]) == 64
        assert payload["average_distribution"]["BCC"] == pytest.approx(0.8)

    def test_human_output_flags_review(self, runner, tmp_path):
        roster = write_roster(tmp_path, [(0.9, 0.1), (0.2, 0.8), (0.3, 0.7)])
        image = write_png(tmp_path / "lesion.png")
        result = runner.invoke(
            main,
            [
                "classify", "--image", str(image), "--backends", str(roster),
                "--no-denoise", "--no-equalize", "--size", "8",
            ],
        )
        assert result.exit_code == 0
        assert "final class: BCC" in result.output
        assert "flagged for specialist review" in result.output

    def test_missing_roster_exits_2(self, runner, tmp_path):
        image = write_png(tmp_path / "lesion.png")
        result = runner.invoke(
            main,
            ["classify", "--image", str(image), "--backends", str(tmp_path / "nope.json")],
        )
        assert result.exit_code == 2


class TestEvaluate:
    def test_summary_and_table(self, runner, tmp_path):
        preds = tmp_path / "preds.txt"
        preds.write_text(
            "a,NV,0.9,0.1\nb,BCC,0.2,0.8\nc,NV,0.8,0.2\nd,BCC,0.3,0.7\n"
        )
        result = runner.invoke(
            main, ["evaluate", "--predictions", str(preds), "--table"]
        )
        assert result.exit_code == 0, result.output
        assert "accuracy" in result.output.lower()
        assert "BCC" in result.output

    def test_json_output(self, runner, tmp_path):
        preds = tmp_path / "preds.txt"
        preds.write_text("a,NV,0.9,0.1\nb,BCC,0.2,0.8\n")
        result = runner.invoke(
            main, ["evaluate", "--predictions", str(preds), "--json"]
        )
        payload = json.loads(result.output)
        assert payload["summary"]["accuracy"] == 1.0
        assert payload["rates"][0]["class"] == "NV"

    def test_parse_error_exits_1_with_line(self, runner, tmp_path):
        preds = tmp_path / "preds.txt"
        preds.write_text("a,NV,0.9,0.1\nbroken line\n")
        result = runner.invoke(main, ["evaluate", "--predictions", str(preds)])
        assert result.exit_code == 1
        assert "line 2" in result.stderr


class TestReport:
    def decision_file(self, runner, tmp_path):
        roster = write_roster(tmp_path, [(0.2, 0.8), (0.3, 0.7), (0.1, 0.9)])
        image = write_png(tmp_path / "lesion.png")
        result = runner.invoke(
            main,
            [
                "classify", "--image", str(image), "--backends", str(roster),
                "--no-denoise", "--no-equalize", "--size", "8", "--json",
            ],
        )
        path = tmp_path / "decision.json"
        path.write_text(result.output)
        return path

    def test_offline_stub_renders_report(self, runner, tmp_path):
        decision = self.decision_file(runner, tmp_path)
        result = runner.invoke(
            main,
            [
                "report", "--decision", str(decision),
                "--offline-stub", str(DATA / "stub_report.json"),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "Basal Cell Carcinoma" in result.output
        assert result.output.rstrip().endswith(DISCLAIMER)

    def test_offline_stub_json(self, runner, tmp_path):
        decision = self.decision_file(runner, tmp_path)
        result = runner.invoke(
            main,
            [
                "report", "--decision", str(decision),
                "--offline-stub", str(DATA / "stub_report.json"), "--json",
            ],
        )
        payload = json.loads(result.output)
        assert payload["disease_name"] == "Basal Cell Carcinoma"
        assert payload["parse_warning"] is False
        assert len(payload["sections"]) == 4

    def test_no_llm_config_exits_2(self, runner, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_BASE_URL", raising=False)
        decision = self.decision_file(runner, tmp_path)
        result = runner.invoke(main, ["report", "--decision", str(decision)])
        assert result.exit_code == 2


class TestServe:
    def test_wires_uvicorn(self, runner, tmp_path, monkeypatch):
        import uvicorn

        calls = {}

        def fake_run(app, host, port):
            calls["host"], calls["port"] = host, port
            calls["routes"] = {route.path for route in app.routes}

        monkeypatch.setattr(uvicorn, "run", fake_run)
        roster = write_roster(tmp_path, [(0.2, 0.8), (0.3, 0.7), (0.1, 0.9)])
        result = runner.invoke(
            main,
            [
                "serve", "--backends", str(roster),
                "--data-dir", str(tmp_path / "data"), "--port", "9999",
            ],
        )
        assert result.exit_code == 0, result.output
        assert calls["port"] == 9999
        assert "/v1/cases" in calls["routes"]

    def test_missing_roster_exits_2(self, runner, tmp_path):
        result = runner.invoke(
            main, ["serve", "--backends", str(tmp_path / "none.json")]
        )
        assert result.exit_code == 2
