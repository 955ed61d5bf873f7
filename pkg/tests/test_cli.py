import json
import shutil

import pytest
from click.testing import CliRunner

from app.core.exceptions import EXIT_OK, EXIT_USAGE
from app.schemas.orchestrator import OutcomeFile
from app.services.run_store import TrajectoryWriter
from main import cli
from tests.helpers import BUGGY, FIXTURE_TASKS, FIXTURES, GOLDEN, SCRIPTS, TASKS, fenced

CONFIG = str(FIXTURES / "config.example.json")


@pytest.fixture
def runner(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("RTLSMITH_SCRATCH", str(tmp_path / "scratch"))
    monkeypatch.setenv("RTLSMITH_OUTPUT", str(tmp_path / "runs"))
    return CliRunner()


def write_module(path, name, lines=35):
    body = "\n".join(f"  wire w{i};" for i in range(lines - 3))
    path.write_text(f"module {name} (input a, output y);\n{body}\n  assign y = a;\nendmodule\n")


# ============================================
# run
# ============================================


@pytest.mark.requires_iverilog
def test_run_solves_adder(runner, tmp_path):
    out = tmp_path / "adder_run"
    result = runner.invoke(cli, ["--config", CONFIG, "run", str(TASKS / "adder_spec2rtl"), "--output", str(out)])

    assert result.exit_code == EXIT_OK, result.output
    assert "solved by process" in result.output
    outcome = OutcomeFile.model_validate_json((out / "outcome.json").read_text())
    assert outcome.winner is not None
    assert outcome.iterations_to_success == 2
    assert "a + b + cin" in (out / "adder8.v").read_text()
    assert (out / f"trajectory_p{outcome.winner}.jsonl").exists()


def test_run_missing_task(runner, tmp_path):
    result = runner.invoke(cli, ["run", str(tmp_path / "nowhere")])
    assert result.exit_code == EXIT_USAGE


def test_run_rejects_zero_processes(runner):
    result = runner.invoke(cli, ["run", str(TASKS / "adder_spec2rtl"), "--parallel", "0"])
    assert result.exit_code == EXIT_USAGE


def test_run_with_missing_cassette(runner, tmp_path):
    result = runner.invoke(
        cli, ["--replay", str(tmp_path / "none.jsonl"), "run", str(TASKS / "adder_spec2rtl")]
    )
    assert result.exit_code == EXIT_USAGE
    assert "Cassette" in result.output


# ============================================
# bench
# ============================================


def test_bench_empty_suite(runner, tmp_path):
    (tmp_path / "suite").mkdir()
    result = runner.invoke(cli, ["bench", str(tmp_path / "suite")])
    assert result.exit_code == EXIT_USAGE
    assert "No task bundles" in result.output


@pytest.mark.requires_iverilog
def test_bench_with_solo_baseline(runner, tmp_path):
    suite = tmp_path / "suite"
    shutil.copytree(TASKS / "adder_spec2rtl", suite / "adder_spec2rtl")
    out = tmp_path / "bench"
    result = runner.invoke(
        cli,
        ["--config", CONFIG, "bench", str(suite), "--runs", "2", "--solo-baseline", "--output", str(out)],
    )

    assert result.exit_code == EXIT_OK, result.output
    assert "Pass@1 | APR" in result.output
    task_dirs = sorted(p.name for p in (out / "adder_spec2rtl").iterdir())
    assert task_dirs == ["run_00", "run_00_solo", "run_01", "run_01_solo"]
    report = json.loads((out / "report.json").read_text())
    assert report["overall"]["apr"] == 100.0
    assert report["iteration_stats"]["pairs"] == 2


def suite_config(tmp_path):
    """Scripted generator that answers every fixture task: buggy first, golden on repair"""
    rules = []
    for task_name, stem in sorted(FIXTURE_TASKS.items()):
        golden_code = (GOLDEN / f"{stem}.v").read_text()
        marker = f"`{stem}`"
        rules += [
            {"tag": "generator", "pattern": marker, "contains": "PREVIOUS ATTEMPTS", "response": fenced(golden_code)},
            {"tag": "generator", "pattern": marker, "response": fenced(BUGGY[task_name])},
        ]
    config = {
        "backends": {
            "generator": {"kind": "scripted", "rules": rules},
            "reflector": {"kind": "scripted", "script_path": str(SCRIPTS / "reflector.json")},
            "coordinator": {"kind": "scripted", "script_path": str(SCRIPTS / "coordinator.json")},
        },
        "loop": {"max_iterations": 5},
        "parallel": {"processes": 2, "cancellation_grace": 1.0},
    }
    path = tmp_path / "suite_config.json"
    path.write_text(json.dumps(config))
    return str(path)


@pytest.mark.requires_iverilog
def test_bench_report_is_reproducible(runner, tmp_path):
    suite = tmp_path / "suite"
    for task_name in FIXTURE_TASKS:
        shutil.copytree(TASKS / task_name, suite / task_name)
    config = suite_config(tmp_path)

    reports = []
    for attempt in ("first", "second"):
        out = tmp_path / attempt
        result = runner.invoke(
            cli, ["--config", config, "bench", str(suite), "--runs", "2", "--output", str(out)]
        )
        assert result.exit_code == EXIT_OK, result.output
        report = json.loads((out / "report.json").read_text())
        assert report.pop("generated_at")
        reports.append(report)

    assert reports[0] == reports[1]
    assert reports[0]["overall"]["problems"] == 3
    assert reports[0]["overall"]["apr"] == 100.0


# ============================================
# forge
# ============================================


def test_forge_empty_corpus(runner, tmp_path):
    (tmp_path / "corpus").mkdir()
    out = tmp_path / "forged"
    result = runner.invoke(cli, ["forge", str(tmp_path / "corpus"), str(GOLDEN), "--output", str(out)])
    assert result.exit_code == EXIT_OK, result.output
    assert (out / "retained.jsonl").read_text() == ""
    assert json.loads((out / "filter_report.json").read_text())["stages"]


def test_forge_needs_golden_dir(runner, tmp_path):
    (tmp_path / "corpus").mkdir()
    result = runner.invoke(cli, ["forge", str(tmp_path / "corpus")])
    assert result.exit_code == EXIT_USAGE


def test_forge_without_syntax_stage(runner, tmp_path):
    config = tmp_path / "forge.json"
    config.write_text(json.dumps({"forge": {"stages": {"syntax": False}}}))
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    write_module(corpus / "clean_a.v", "clean_a")
    write_module(corpus / "clean_b.v", "clean_b")
    (corpus / "copy.v").write_text((GOLDEN / "adder8.v").read_text() + "// pad\n" * 30)
    out = tmp_path / "forged"

    result = runner.invoke(
        cli, ["--config", str(config), "forge", str(corpus), str(GOLDEN), "--output", str(out)]
    )
    assert result.exit_code == EXIT_OK, result.output
    assert "Retained 2 of 3" in result.output
    retained = [json.loads(line)["id"] for line in (out / "retained.jsonl").read_text().splitlines()]
    assert retained == ["clean_a.v", "clean_b.v"]
    report = json.loads((out / "filter_report.json").read_text())
    assert report["rejections"]["copy.v"]["detail"] == "adder8.v"


# ============================================
# report / info
# ============================================


def test_report_without_outcomes(runner, tmp_path):
    (tmp_path / "runs").mkdir()
    result = runner.invoke(cli, ["report", str(tmp_path / "runs")])
    assert result.exit_code == EXIT_USAGE


def test_report_skips_corrupt_outcome(runner, tmp_path):
    root = tmp_path / "runs"
    for index, winner in enumerate([0, None]):
        TrajectoryWriter(root / "cid003_adder8" / f"run_{index:02d}").write_outcome(
            OutcomeFile(
                task_id="cid003_adder8", category="cid003", run_index=index, processes=5, winner=winner
            )
        )
    broken = root / "cid003_adder8" / "run_02"
    broken.mkdir()
    (broken / "outcome.json").write_text("not json")

    result = runner.invoke(cli, ["report", str(root), "--output", str(tmp_path / "report")])
    assert result.exit_code == EXIT_OK, result.output
    assert "| Overall | 1 | 50.00 | 100.00 |" in result.output
    assert (tmp_path / "report" / "report.md").read_text() in result.output


def test_info(runner):
    result = runner.invoke(cli, ["info"])
    assert result.exit_code == EXIT_OK
    assert "Application: rtlsmith" in result.output
    assert "iverilog:" in result.output
