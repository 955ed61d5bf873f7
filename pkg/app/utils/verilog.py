"""
Verilog text helpers: code extraction from model replies and lexical views of
HDL sources used by the data forge.
"""

import re
from typing import List, Optional, Set, Tuple

from app.core.exceptions import NoCodeBlock

FENCE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[^\n]*\n(.*?)```", re.DOTALL)
HDL_FENCE_TAGS = {"verilog", "systemverilog", "sv", "v"}
MODULE_TOKEN = re.compile(r"\bmodule\b")
ENDMODULE_TOKEN = re.compile(r"\bendmodule\b")

LINE_COMMENT = re.compile(r"//[^\n]*")
BLOCK_COMMENT = re.compile(r"/\*.*?\*/", re.DOTALL)
WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_$]*|\d+'[sS]?[bBoOdDhH][0-9a-fA-FxXzZ_?]+|\d+")
MODULE_HEADER = re.compile(
    r"\bmodule\s+([A-Za-z_][A-Za-z0-9_$]*)\s*(#\s*\(.*?\)\s*)?(\((.*?)\))?\s*;",
    re.DOTALL,
)


def _blocks(text: str) -> List[Tuple[str, str]]:
    return [(tag.lower(), _drop_final_newline(body)) for tag, body in FENCE.findall(text)]


def _drop_final_newline(body: str) -> str:
    return body[:-1] if body.endswith("\n") else body


def extract_code(response_text: str) -> str:
    """
    Pull RTL source out of a model reply.

    Selection order: the last fenced block tagged verilog/systemverilog; else the
    last fenced block containing `module`; else the span from the first `module`
    to the last `endmodule` of the whole reply.

    Raises:
        NoCodeBlock: none of the above applies
    """
    blocks = _blocks(response_text)

    tagged = [body for tag, body in blocks if tag in HDL_FENCE_TAGS]
    if tagged:
        return tagged[-1]

    with_module = [body for _, body in blocks if MODULE_TOKEN.search(body)]
    if with_module:
        return with_module[-1]

    start = MODULE_TOKEN.search(response_text)
    ends = list(ENDMODULE_TOKEN.finditer(response_text))
    if start and ends and ends[-1].end() > start.start():
        return response_text[start.start() : ends[-1].end()]

    raise NoCodeBlock("Reply contains no Verilog code block")


def wrap_in_verilog_fence(code: str) -> str:
    return f"```verilog\n{code}\n```"


def strip_comments(source: str) -> str:
    return LINE_COMMENT.sub("", BLOCK_COMMENT.sub(" ", source))


def word_tokens(source: str) -> Set[str]:
    """Identifier, keyword and literal tokens of a source with comments removed"""
    return set(WORD.findall(strip_comments(source)))


def char_ngrams(source: str, n: int = 5) -> Set[str]:
    """Character n-grams over whitespace-collapsed, comment-free text"""
    text = " ".join(strip_comments(source).split())
    if len(text) < n:
        return {text} if text else set()
    return {text[i : i + n] for i in range(len(text) - n + 1)}


def module_names(source: str) -> List[str]:
    return [m.group(1) for m in MODULE_HEADER.finditer(strip_comments(source))]


def portless_module(source: str) -> Optional[str]:
    """Name of the first module declared without a port list, if any"""
    for match in MODULE_HEADER.finditer(strip_comments(source)):
        ports = match.group(4)
        if match.group(3) is None or not (ports or "").strip():
            return match.group(1)
    return None


def normalize_whitespace(source: str) -> str:
    """Strip trailing whitespace per line; the content key used by dedup"""
    return "\n".join(line.rstrip() for line in source.splitlines())
