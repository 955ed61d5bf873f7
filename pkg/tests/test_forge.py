import random

import numpy as np
import pytest

from app.core.exceptions import ConfigError, SchemaViolation
from app.schemas.forge import (
    ExamplePool,
    ForgeConfig,
    ForgeStages,
    PairKind,
    PoolExample,
    RawScript,
    TokenGranularity,
)
from app.services.forge import (
    ForgeService,
    GoldenIndex,
    contamination_filter,
    dedup,
    jaccard,
    line_filter,
    load_corpus,
    load_golden_set,
    load_pool,
    machine_generated_filter,
    parse_pair_sections,
    stub_harness,
)
from tests.helpers import FIXTURES, GOLDEN, fenced, scripted

NO_SYNTAX = ForgeStages(syntax=False)


def module(name: str, lines: int, body: str = "  wire w{i};") -> str:
    """A module of exactly `lines` lines: header, filler body, assign, endmodule"""
    filler = [body.format(i=i) for i in range(lines - 3)]
    return "\n".join([f"module {name} (input a, output y);", *filler, "  assign y = a;", "endmodule"])


def raw(script_id: str, content: str) -> RawScript:
    return RawScript(id=script_id, content=content)


def padded(code: str, lines: int = 35) -> str:
    return code + "\n".join(f"// note {i}" for i in range(lines))


@pytest.fixture
def golden_set():
    return load_golden_set(GOLDEN)


# ============================================
# Stages
# ============================================


def test_dedup_keeps_first_and_ignores_trailing_whitespace():
    rejections = {}
    corpus = [raw("a.v", "module a; endmodule\n"), raw("b.v", "module a; endmodule   \n\n"), raw("c.v", "x")]
    kept = dedup(corpus, rejections)
    assert [s.id for s in kept] == ["a.v", "c.v"]
    assert rejections["b.v"].detail == "a.v"


@pytest.mark.parametrize(
    "lines, reason",
    [(29, "too_short"), (30, None), (2000, None), (2001, "too_long")],
)
def test_line_bounds(lines, reason):
    rejections = {}
    script = raw("m.v", module("m", lines))
    assert script.line_count == lines
    kept = line_filter([script], ForgeConfig(), rejections)
    if reason is None:
        assert kept == [script]
    else:
        assert kept == []
        assert rejections["m.v"].reason == reason


def test_banner_is_machine_generated():
    content = "// Automatically generated by synth-tool 3.1\n" + module("top", 40)
    assert machine_generated_filter(raw("t.v", content), ForgeConfig()).reason == "banner"


def test_gate_netlist_is_machine_generated():
    content = module("net", 40, body="  and g{i} (n{i}, a, y);")
    assert machine_generated_filter(raw("n.v", content), ForgeConfig()).reason == "netlist"


def test_escaped_identifiers_are_machine_generated():
    content = module("flat", 40, body="  wire \\u_core/n{i}_reg ;")
    assert machine_generated_filter(raw("f.v", content), ForgeConfig()).reason == "synthesized_names"


def test_hand_written_passes(golden_set):
    for name, code in golden_set.items():
        assert machine_generated_filter(raw(name, code), ForgeConfig()) is None


def test_late_banner_is_ignored():
    content = module("top", 40) + "\n// generated by nobody"
    assert machine_generated_filter(raw("t.v", content), ForgeConfig()) is None


def test_stub_harness():
    extra, top = stub_harness("module dut(input a); endmodule")
    assert top == "forge_stub"
    assert "dut dut ();" in extra["forge_stub.v"]
    assert stub_harness("module tb; endmodule") == ({}, None)


# ============================================
# Similarity
# ============================================


def test_jaccard_examples():
    assert jaccard("assign y = a & b;", "assign y = a | b;") == 1.0
    assert jaccard("alpha beta", "gamma delta") == 0.0
    assert jaccard("alpha beta gamma", "beta gamma delta") == pytest.approx(0.5)
    assert jaccard("// only a comment", "") == 1.0
    assert jaccard("abcdef", "abcdeg", TokenGranularity.CHAR_5GRAM) == pytest.approx(1 / 3)


def test_jaccard_against_brute_force():
    rng = random.Random(3)
    vocab = [f"t{i}" for i in range(12)]
    for _ in range(1000):
        a = rng.sample(vocab, rng.randint(0, 8))
        b = rng.sample(vocab, rng.randint(0, 8))
        union = set(a) | set(b)
        expected = len(set(a) & set(b)) / len(union) if union else 1.0
        assert jaccard(" ".join(a), " ".join(b)) == pytest.approx(expected)


def test_golden_index_finds_the_closest_solution():
    rng = random.Random(5)
    vocab = [f"s{i}" for i in range(15)]
    golden = {f"g{k}.v": " ".join(rng.sample(vocab, rng.randint(1, 10))) for k in range(8)}
    index = GoldenIndex(golden, TokenGranularity.WORD)
    for _ in range(200):
        query = " ".join(rng.sample(vocab, rng.randint(1, 10)))
        _, best = index.most_similar(query)
        assert best == pytest.approx(max(jaccard(query, text) for text in golden.values()))


def test_contamination_threshold_is_exclusive():
    golden = {"g.v": "alpha beta gamma delta epsilon"}
    at_threshold = raw("edge.v", "alpha beta gamma delta")
    above = raw("near.v", "alpha beta gamma delta epsilon zeta")
    rejections = {}
    kept, report = contamination_filter([at_threshold, above], golden, ForgeConfig(), rejections)
    assert kept == [at_threshold]
    assert rejections["near.v"].detail == "g.v"
    assert rejections["near.v"].similarity == pytest.approx(5 / 6, abs=1e-6)
    assert report.stages[0].retained == 1


def test_threshold_one_rejects_identical_token_sets():
    golden = {"g.v": "alpha beta"}
    config = ForgeConfig(similarity_threshold=1.0)
    kept, _ = contamination_filter([raw("same.v", "beta alpha // reordered"), raw("x.v", "alpha")], golden, config)
    assert [s.id for s in kept] == ["x.v"]


def test_contamination_needs_golden_solutions():
    with pytest.raises(ConfigError):
        contamination_filter([raw("a.v", "x")], {}, ForgeConfig())


def test_planted_near_copies_are_removed(golden_set):
    corpus = [raw(f"copy_{name}", padded(code)) for name, code in golden_set.items() if name != "pulse.v"]
    corpus += [raw(f"clean_{k}.v", module(f"clean_{k}", 40)) for k in range(5)]
    kept, report = contamination_filter(corpus, golden_set, ForgeConfig())
    assert [s.id for s in kept] == [f"clean_{k}.v" for k in range(5)]
    assert {r.detail for r in report.rejections.values()} == {"adder8.v", "arbiter4.v", "counter4.v"}


# ============================================
# Pipeline
# ============================================


def planted_corpus(golden_set):
    clean = [raw(f"clean_{k}.v", module(f"clean_{k}", 30 + k)) for k in range(7)]
    broken = [
        raw(f"broken_{k}.v", module(f"broken_{k}", 40).replace("assign y = a;", "assign y = a"))
        for k in range(2)
    ]
    return [
        *clean,
        raw("dup_0.v", clean[0].content),
        raw("dup_1.v", clean[1].content + "  \n"),
        raw("banner_0.v", "// Auto-generated file. Do not edit.\n" + module("gen_0", 40)),
        raw("banner_1.v", "/* This file was generated by a script */\n" + module("gen_1", 40)),
        raw("netlist.v", module("net", 50, body="  nand g{i} (n{i}, a, a);")),
        raw("short_0.v", module("short_0", 10)),
        raw("short_1.v", module("short_1", 29)),
        raw("long.v", module("long", 2100)),
        *broken,
        *[raw(f"copy_{n}", padded(golden_set[n])) for n in ("adder8.v", "counter4.v", "arbiter4.v")],
    ]


def stage_counts(report):
    return [(s.name, s.input, s.rejected, s.retained) for s in report.stages]


async def test_pipeline_without_syntax_stage(golden_set):
    corpus = planted_corpus(golden_set)
    assert len(corpus) == 20
    retained, report = await ForgeService(ForgeConfig(stages=NO_SYNTAX)).run_pipeline(corpus, golden_set)

    assert stage_counts(report) == [
        ("dedup", 20, 2, 18),
        ("machine_generated", 18, 3, 15),
        ("line_bounds", 15, 3, 12),
        ("contamination", 12, 3, 9),
    ]
    assert sorted(s.id for s in retained) == sorted(
        [f"clean_{k}.v" for k in range(7)] + ["broken_0.v", "broken_1.v"]
    )
    assert report.rejections["dup_1.v"].detail == "clean_1.v"
    assert report.retained == 9


async def test_pipeline_is_idempotent(golden_set):
    service = ForgeService(ForgeConfig(stages=NO_SYNTAX))
    first, _ = await service.run_pipeline(planted_corpus(golden_set), golden_set)
    second, report = await service.run_pipeline(first, golden_set)
    assert second == first
    assert report.rejections == {}


@pytest.mark.requires_iverilog
async def test_full_pipeline(golden_set, harness):
    service = ForgeService(ForgeConfig(workers=3), harness)
    retained, report = await service.run_pipeline(planted_corpus(golden_set), golden_set)

    assert [s.name for s in report.stages] == [
        "dedup",
        "machine_generated",
        "line_bounds",
        "syntax",
        "contamination",
    ]
    assert stage_counts(report)[3] == ("syntax", 12, 2, 10)
    assert [s.id for s in retained] == [f"clean_{k}.v" for k in range(7)]
    assert report.rejections["broken_0.v"].stage == "syntax"


async def test_pipeline_configuration_errors(golden_set):
    with pytest.raises(ConfigError):
        await ForgeService(ForgeConfig(stages=NO_SYNTAX)).run_pipeline([], None)
    with pytest.raises(ConfigError):
        await ForgeService(ForgeConfig()).run_pipeline([], golden_set)


async def test_empty_corpus(golden_set):
    retained, report = await ForgeService(ForgeConfig(stages=NO_SYNTAX)).run_pipeline([], golden_set)
    assert retained == []
    assert report.retained == 0


# ============================================
# Pair generation
# ============================================

POOL = ExamplePool(
    examples=[
        PoolExample(
            kind=PairKind.GENERATION,
            specification="Design and2 with inputs a, b and output y = a & b.",
            golden_code="module and2(input a, input b, output y); assign y = a & b; endmodule",
        )
    ]
)

AND3 = "module and3 (input a, input b, input c, output y);\n  assign y = a & b & c;\nendmodule"


def pair_reply(code: str, spec: str = "Design and3, a three-input AND gate.") -> str:
    return f"KIND: generation\nSPECIFICATION: {spec}\nCODE:\n{fenced(code)}"


def test_parse_pair_sections():
    sections = parse_pair_sections("**KIND:** debugging\n## SPECIFICATION: fix it\nFAULTY_CODE:\nx\nCODE:\ny")
    assert sections == {"KIND": "debugging", "SPECIFICATION": "fix it", "FAULTY_CODE": "x", "CODE": "y"}


@pytest.mark.requires_iverilog
async def test_accepted_pair(harness, golden_set):
    backend = scripted([{"tag": "forge", "contains": "module clean_0", "response": pair_reply(AND3)}])
    result = await ForgeService(ForgeConfig(), harness).generate_pairs(
        raw("clean_0.v", module("clean_0", 30)), POOL, backend, golden_set, np.random.default_rng(0)
    )
    assert result.reason is None
    [pair] = result.pairs
    assert pair.golden_code == AND3
    assert pair.provenance == "clean_0.v"
    assert pair.kind == PairKind.GENERATION


@pytest.mark.requires_iverilog
async def test_pair_that_does_not_compile(harness):
    backend = scripted([{"contains": "*", "response": pair_reply(AND3.replace("c;", "c"))}])
    result = await ForgeService(ForgeConfig(), harness).generate_pairs(
        raw("s.v", module("s", 30)), POOL, backend, {}
    )
    assert result.pairs == []
    assert result.reason == "syntax"


@pytest.mark.requires_iverilog
async def test_pair_too_close_to_golden(harness, golden_set):
    backend = scripted([{"contains": "*", "response": pair_reply(golden_set["adder8.v"])}])
    result = await ForgeService(ForgeConfig(), harness).generate_pairs(
        raw("s.v", module("s", 30)), POOL, backend, golden_set
    )
    assert result.reason == "contamination"


@pytest.mark.parametrize(
    "reply, reason",
    [
        ("SPECIFICATION: something", "format: no golden code"),
        (f"CODE:\n{fenced(AND3)}", "format: no specification"),
    ],
)
async def test_malformed_pair_reply(reply, reason):
    backend = scripted([{"contains": "*", "response": reply}])
    result = await ForgeService(ForgeConfig()).generate_pairs(raw("s.v", "module s; endmodule"), POOL, backend, {})
    assert result.reason == reason


async def test_backend_failure_gives_empty_result():
    backend = scripted([{"contains": "*", "error": "overloaded"}])
    result = await ForgeService(ForgeConfig()).generate_pairs(raw("s.v", "module s; endmodule"), POOL, backend, {})
    assert result.pairs == []
    assert result.reason == "backend: overloaded"


# ============================================
# Corpus files
# ============================================


def test_load_corpus_directory(tmp_path):
    (tmp_path / "rtl").mkdir()
    (tmp_path / "rtl" / "b.sv").write_text("module b; endmodule\n")
    (tmp_path / "a.v").write_text("module a; endmodule\n")
    (tmp_path / "notes.txt").write_text("ignored")
    assert [s.id for s in load_corpus(tmp_path)] == ["a.v", "rtl/b.sv"]


def test_load_corpus_manifest(tmp_path):
    manifest = tmp_path / "corpus.jsonl"
    manifest.write_text('{"id": "x", "content": "module x; endmodule"}\n\n{"id": "y", "content": ""}\n')
    assert [s.id for s in load_corpus(manifest)] == ["x", "y"]


@pytest.mark.parametrize(
    "text",
    ['{"id": "x", "content": "a"}\n{"id": "x", "content": "b"}\n', "{not json}\n"],
)
def test_load_corpus_rejects_bad_manifest(tmp_path, text):
    manifest = tmp_path / "corpus.jsonl"
    manifest.write_text(text)
    with pytest.raises(SchemaViolation):
        load_corpus(manifest)


def test_load_pool(tmp_path):
    pool = load_pool(FIXTURES / "forge" / "example_pool.json")
    assert pool.size == 1
    assert pool.examples[0].kind == PairKind.GENERATION

    bad = tmp_path / "pool.json"
    bad.write_text("[]")
    with pytest.raises(ConfigError):
        load_pool(bad)


def test_missing_golden_dir(tmp_path):
    with pytest.raises(ConfigError):
        load_golden_set(tmp_path / "nowhere")
