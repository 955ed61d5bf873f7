"""
Data Forge
Curation pipeline for raw RTL corpora (dedup, machine-generated filtering, line
bounds, syntax validation, contamination filtering) and spec/code pair generation
"""

import asyncio
import json
import logging
import re
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

import numpy as np
from pydantic import ValidationError
from tqdm import tqdm

from app.core.exceptions import ConfigError, GatewayError, NoCodeBlock, SchemaViolation
from app.core.hasher import DigestHelper
from app.schemas.forge import (
    ExamplePool,
    FilterReport,
    ForgeConfig,
    PairGenerationResult,
    PairKind,
    RawScript,
    Rejection,
    SpecCodePair,
    TokenGranularity,
)
from app.schemas.llm import ChatMessage, ChatRequest, ChatRole
from app.services.sim_harness import SimHarnessService
from app.utils.llm_component.base import BaseBackend
from app.utils.llm_component.service import complete
from app.utils.prompts import get_forge_system_message, get_pair_prompt
from app.utils.verilog import (
    char_ngrams,
    extract_code,
    module_names,
    normalize_whitespace,
    portless_module,
    strip_comments,
    word_tokens,
)

logger = logging.getLogger(__name__)

HDL_SUFFIXES = (".v", ".sv")
FORGE_TAG = "forge"
STUB_TOP = "forge_stub"

BANNER_MARKERS = (
    "generated by",
    "do not edit",
    "auto-generated",
    "autogenerated",
    "automatically generated",
    "this file was generated",
)
GATE_PRIMITIVE = re.compile(
    r"^\s*(and|or|nand|nor|xor|xnor|not|buf|bufif0|bufif1|notif0|notif1)\b\s*"
    r"(#\s*\S+\s*)?([A-Za-z_][\w$]*\s*)?\(",
)
IDENTIFIER = re.compile(r"\\\S+|[A-Za-z_][A-Za-z0-9_$]*")

PAIR_SECTION = re.compile(
    r"^[\s*#]*(KIND|SPECIFICATION|FAULTY_CODE|CODE)[\s*]*:[ \t]*",
    re.MULTILINE,
)


# ============================================
# Stages
# ============================================


def dedup(
    corpus: List[RawScript], rejections: Optional[Dict[str, Rejection]] = None
) -> List[RawScript]:
    """Keep the first script per content digest (trailing whitespace ignored)"""
    first_by_digest: Dict[str, str] = {}
    kept: List[RawScript] = []
    for script in corpus:
        digest = DigestHelper.sha256(normalize_whitespace(script.content))
        if digest in first_by_digest:
            if rejections is not None:
                rejections[script.id] = Rejection(
                    stage="dedup", reason="duplicate", detail=first_by_digest[digest]
                )
            continue
        first_by_digest[digest] = script.id
        kept.append(script)
    return kept


def line_filter(
    corpus: List[RawScript],
    config: ForgeConfig,
    rejections: Optional[Dict[str, Rejection]] = None,
) -> List[RawScript]:
    """Keep scripts with min_lines <= line_count <= max_lines"""
    kept: List[RawScript] = []
    for script in corpus:
        lines = script.line_count
        if config.min_lines <= lines <= config.max_lines:
            kept.append(script)
        elif rejections is not None:
            reason = "too_short" if lines < config.min_lines else "too_long"
            rejections[script.id] = Rejection(
                stage="line_bounds", reason=reason, detail=f"{lines} lines"
            )
    return kept


def machine_generated_filter(script: RawScript, config: ForgeConfig) -> Optional[Rejection]:
    """
    None when the script looks hand-written, otherwise the rejection: a generator
    banner near the top, gate-primitive netlist density, or escaped-identifier
    density above the configured ratios.
    """
    head = "\n".join(script.content.splitlines()[: config.banner_scan_lines]).lower()
    for marker in BANNER_MARKERS:
        if marker in head:
            return Rejection(stage="machine_generated", reason="banner", detail=marker)

    code_lines = [line for line in strip_comments(script.content).splitlines() if line.strip()]
    if code_lines:
        primitives = sum(1 for line in code_lines if GATE_PRIMITIVE.match(line))
        density = primitives / len(code_lines)
        if density > config.primitive_density:
            return Rejection(
                stage="machine_generated", reason="netlist", detail=f"primitive density {density:.2f}"
            )

    identifiers = IDENTIFIER.findall(strip_comments(script.content))
    if identifiers:
        escaped = sum(1 for token in identifiers if token.startswith("\\"))
        density = escaped / len(identifiers)
        if density > config.escaped_identifier_density:
            return Rejection(
                stage="machine_generated",
                reason="synthesized_names",
                detail=f"escaped identifier density {density:.2f}",
            )
    return None


def stub_harness(source: str) -> Tuple[Dict[str, str], Optional[str]]:
    """
    Extra files and top module for a compile-only check. A source that already
    holds a port-less module is its own top; otherwise a stub instantiates the
    first module.
    """
    if portless_module(source):
        return {}, None
    names = module_names(source)
    stub = f"module {STUB_TOP};\n  {names[0]} dut ();\nendmodule\n"
    return {f"{STUB_TOP}.v": stub}, STUB_TOP


async def _compiles(
    harness: SimHarnessService, label: str, source: str
) -> Optional[str]:
    """None if the source compiles, else the first error line"""
    if not module_names(source):
        return "no module declaration"
    extra, top = stub_harness(source)
    outcome = await harness.check_syntax(label, {"script.v": source, **extra}, top=top)
    if outcome.ok:
        return None
    return outcome.feedback.error_message or outcome.feedback.failure_class.value


async def syntax_filter(
    corpus: List[RawScript],
    harness: SimHarnessService,
    workers: int = 4,
    rejections: Optional[Dict[str, Rejection]] = None,
    progress: bool = False,
) -> List[RawScript]:
    """
    Keep scripts that compile. Up to `workers` compilations run at once; results
    keep corpus order.

    Raises:
        ToolError: compiler missing; the whole stage fails
    """
    gate = asyncio.Semaphore(workers)
    bar = tqdm(total=len(corpus), desc="Syntax check", unit="script", disable=not progress)

    async def check(script: RawScript) -> Optional[str]:
        async with gate:
            error = await _compiles(harness, "forge", script.content)
            bar.update(1)
            return error

    try:
        errors = await asyncio.gather(*(check(script) for script in corpus))
    finally:
        bar.close()

    kept: List[RawScript] = []
    for script, error in zip(corpus, errors):
        if error is None:
            kept.append(script)
        elif rejections is not None:
            rejections[script.id] = Rejection(stage="syntax", reason="syntax", detail=error)
    return kept


def tokens(text: str, granularity: TokenGranularity = TokenGranularity.WORD) -> Set[str]:
    if granularity == TokenGranularity.CHAR_5GRAM:
        return char_ngrams(text, 5)
    return word_tokens(text)


def set_similarity(a: Set[str], b: Set[str]) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def jaccard(a: str, b: str, granularity: TokenGranularity = TokenGranularity.WORD) -> float:
    """|T(a) ∩ T(b)| / |T(a) ∪ T(b)|; two empty token sets are identical (1.0)"""
    return set_similarity(tokens(a, granularity), tokens(b, granularity))


class GoldenIndex:
    """Inverted token index over golden solutions for max-similarity lookups."""

    def __init__(self, golden_set: Dict[str, str], granularity: TokenGranularity):
        self.granularity = granularity
        self.token_sets = {gid: tokens(text, granularity) for gid, text in golden_set.items()}
        self.postings: Dict[str, Set[str]] = defaultdict(set)
        self.empty: List[str] = []
        for gid, token_set in self.token_sets.items():
            if not token_set:
                self.empty.append(gid)
            for token in token_set:
                self.postings[token].add(gid)

    def most_similar(self, text: str) -> Tuple[Optional[str], float]:
        """(golden id, similarity) of the closest golden solution"""
        query = tokens(text, self.granularity)
        candidates: Set[str] = set()
        if query:
            for token in query:
                candidates |= self.postings.get(token, set())
        else:
            candidates.update(self.empty)

        best_id, best = None, 0.0
        for gid in sorted(candidates):
            similarity = set_similarity(query, self.token_sets[gid])
            if similarity > best:
                best_id, best = gid, similarity
        return best_id, best


def _contaminated(similarity: float, threshold: float) -> bool:
    # At threshold 1.0 identical token sets count as contaminated
    if threshold >= 1.0:
        return similarity >= 1.0
    return similarity > threshold


def contamination_filter(
    corpus: List[RawScript],
    golden_set: Dict[str, str],
    config: ForgeConfig,
    rejections: Optional[Dict[str, Rejection]] = None,
) -> Tuple[List[RawScript], FilterReport]:
    """
    Drop scripts whose similarity to any golden solution exceeds the threshold.

    Raises:
        ConfigError: empty golden set
    """
    if not golden_set:
        raise ConfigError("Contamination filtering needs a non-empty golden set")

    index = GoldenIndex(golden_set, config.token_granularity)
    rejected: Dict[str, Rejection] = {}
    kept: List[RawScript] = []
    for script in corpus:
        golden_id, similarity = index.most_similar(script.content)
        if _contaminated(similarity, config.similarity_threshold):
            rejected[script.id] = Rejection(
                stage="contamination",
                reason="contamination",
                detail=golden_id,
                similarity=round(similarity, 6),
            )
        else:
            kept.append(script)

    report = FilterReport()
    report.add_stage("contamination", len(corpus), rejected)
    if rejections is not None:
        rejections.update(rejected)
    return kept, report


# ============================================
# Pipeline
# ============================================


class ForgeService:
    """Runs the enabled stages in a fixed order with per-stage accounting."""

    def __init__(self, config: ForgeConfig, harness: Optional[SimHarnessService] = None):
        self.config = config
        self.harness = harness

    async def run_pipeline(
        self,
        corpus: List[RawScript],
        golden_set: Optional[Dict[str, str]] = None,
        progress: bool = False,
    ) -> Tuple[List[RawScript], FilterReport]:
        """
        dedup → machine_generated → line_bounds → syntax → contamination.

        Raises:
            ConfigError: contamination enabled without golden solutions, or
                syntax enabled without a harness
            ToolError: compiler missing
        """
        stages = self.config.stages
        if stages.contamination and not golden_set:
            raise ConfigError("Contamination stage enabled but no golden solutions given")
        if stages.syntax and self.harness is None:
            raise ConfigError("Syntax stage enabled but no simulation harness given")

        report = FilterReport()
        current = list(corpus)

        def record(name: str, before: int, rejected: Dict[str, Rejection]) -> None:
            report.add_stage(name, before, rejected)
            logger.info(f"Stage {name}: {before} in, {len(rejected)} rejected, {before - len(rejected)} kept")

        if stages.dedup:
            rejected: Dict[str, Rejection] = {}
            before = len(current)
            current = dedup(current, rejected)
            record("dedup", before, rejected)

        if stages.machine_generated:
            rejected = {}
            before = len(current)
            kept = []
            for script in current:
                verdict = machine_generated_filter(script, self.config)
                if verdict is None:
                    kept.append(script)
                else:
                    rejected[script.id] = verdict
            current = kept
            record("machine_generated", before, rejected)

        if stages.line_bounds:
            rejected = {}
            before = len(current)
            current = line_filter(current, self.config, rejected)
            record("line_bounds", before, rejected)

        if stages.syntax:
            rejected = {}
            before = len(current)
            current = await syntax_filter(
                current, self.harness, self.config.workers, rejected, progress
            )
            record("syntax", before, rejected)

        if stages.contamination:
            rejected = {}
            before = len(current)
            current, _ = contamination_filter(current, golden_set, self.config, rejected)
            record("contamination", before, rejected)

        return current, report

    async def validate_pool(self, pool: ExamplePool) -> None:
        """
        Raises:
            SchemaViolation: a pool example's golden code does not compile
        """
        for position, example in enumerate(pool.examples):
            error = await _compiles(self.harness, "pool", example.golden_code)
            if error is not None:
                raise SchemaViolation(f"Pool example {position} does not compile: {error}")

    async def generate_pairs(
        self,
        script: RawScript,
        pool: ExamplePool,
        backend: BaseBackend,
        golden_set: Dict[str, str],
        rng: Optional[np.random.Generator] = None,
    ) -> PairGenerationResult:
        """
        Ask the backend for a spec/golden-code pair modelled on one sampled pool
        example. The pair must compile and stay clear of the golden set. Failures
        give an empty result with a reason; nothing is raised.
        """
        rng = rng if rng is not None else np.random.default_rng(self.config.pair_seed)
        example = pool.examples[int(rng.integers(pool.size))]
        kind = example.kind

        request = ChatRequest(
            messages=[
                ChatMessage(role=ChatRole.SYSTEM, content=get_forge_system_message()),
                ChatMessage(
                    role=ChatRole.USER, content=get_pair_prompt(kind, example, script.content)
                ),
            ],
            tag=FORGE_TAG,
        )
        try:
            response = await complete(backend, request)
        except GatewayError as e:
            logger.warning(f"Pair generation for {script.id} failed: {e.message}")
            return PairGenerationResult(reason=f"backend: {e.message}")

        sections = parse_pair_sections(response.content)
        try:
            golden_code = extract_code(sections.get("CODE", ""))
        except NoCodeBlock:
            return PairGenerationResult(reason="format: no golden code")
        specification = sections.get("SPECIFICATION", "").strip()
        if not specification:
            return PairGenerationResult(reason="format: no specification")

        if kind != PairKind.GENERATION:
            try:
                faulty = extract_code(sections.get("FAULTY_CODE", ""))
            except NoCodeBlock:
                return PairGenerationResult(reason="format: no faulty code")
            specification = f"{specification}\n\nEXISTING CODE:\n```verilog\n{faulty}\n```"

        error = await _compiles(self.harness, "pair", golden_code)
        if error is not None:
            logger.info(f"Pair from {script.id} rejected: {error}")
            return PairGenerationResult(reason="syntax")

        if golden_set:
            golden_id, similarity = GoldenIndex(
                golden_set, self.config.token_granularity
            ).most_similar(golden_code)
            if _contaminated(similarity, self.config.similarity_threshold):
                logger.info(f"Pair from {script.id} too close to {golden_id} ({similarity:.2f})")
                return PairGenerationResult(reason="contamination")

        pair = SpecCodePair(
            specification=specification,
            golden_code=golden_code,
            kind=kind,
            provenance=script.id,
        )
        return PairGenerationResult(pairs=[pair])


def parse_pair_sections(text: str) -> Dict[str, str]:
    sections: Dict[str, str] = {}
    markers = list(PAIR_SECTION.finditer(text))
    for position, marker in enumerate(markers):
        end = markers[position + 1].start() if position + 1 < len(markers) else len(text)
        sections[marker.group(1)] = text[marker.end() : end].strip()
    return sections


# ============================================
# Corpus files
# ============================================


def load_corpus(path: Union[str, Path]) -> List[RawScript]:
    """
    Read a directory tree of .v/.sv files (ids are relative paths) or a JSONL
    manifest of {id, source, content}.

    Raises:
        SchemaViolation: unreadable input, malformed manifest line or duplicate id
    """
    root = Path(path)
    scripts: List[RawScript] = []
    if root.is_dir():
        for file in sorted(p for p in root.rglob("*") if p.suffix in HDL_SUFFIXES and p.is_file()):
            try:
                content = file.read_text(encoding="utf-8", errors="replace")
            except OSError as e:
                raise SchemaViolation(f"Cannot read {file}: {e}")
            relative = file.relative_to(root).as_posix()
            scripts.append(RawScript(id=relative, source=str(file), content=content))
        return scripts

    try:
        lines = root.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise SchemaViolation(f"Cannot read corpus {root}: {e}")
    seen = set()
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            script = RawScript.model_validate_json(line)
        except ValidationError as e:
            raise SchemaViolation(f"Malformed corpus line {number} in {root}: {e}")
        if script.id in seen:
            raise SchemaViolation(f"Duplicate script id {script.id!r} in {root}")
        seen.add(script.id)
        scripts.append(script)
    return scripts


def load_golden_set(path: Union[str, Path]) -> Dict[str, str]:
    """Golden solutions by relative path from a directory of .v/.sv files"""
    root = Path(path)
    if not root.is_dir():
        raise ConfigError(f"Golden directory not found: {root}")
    return {
        p.relative_to(root).as_posix(): p.read_text(encoding="utf-8", errors="replace")
        for p in sorted(root.rglob("*"))
        if p.suffix in HDL_SUFFIXES and p.is_file()
    }


def load_pool(path: Union[str, Path]) -> ExamplePool:
    """
    Raises:
        ConfigError: unreadable or invalid pool file
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(data, list):
            data = {"examples": data}
        return ExamplePool.model_validate(data)
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise ConfigError(f"Invalid example pool {path}: {e}")


def write_jsonl(items: Iterable, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8") as f:
        for item in items:
            f.write(json.dumps(item.model_dump(mode="json"), sort_keys=True) + "\n")
    return target


def write_filter_report(report: FilterReport, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return target
