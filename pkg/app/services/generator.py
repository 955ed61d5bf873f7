"""
Generator Service
Assembles the generator prompt from the task and the evolving context and pulls
RTL source out of the reply
"""

import logging
from typing import Optional

from app.core.exceptions import PromptOverflow
from app.schemas.context import EvolvingContext
from app.schemas.generator import AttemptKind, GeneratorPrompt
from app.schemas.llm import ChatMessage, ChatRequest, ChatRole
from app.schemas.task import RtlTask
from app.services.coordinator import CoordinatorService
from app.utils.llm_component.base import BaseBackend
from app.utils.llm_component.service import complete
from app.utils.prompts import (
    get_category_instruction,
    get_generator_system_message,
    get_output_instruction,
)
from app.utils.verilog import extract_code

logger = logging.getLogger(__name__)

GENERATOR_TAG = "generator"

CONTEXT_HEADERS = {
    AttemptKind.REPAIR: "PREVIOUS ATTEMPTS",
    AttemptKind.RESTART: "LESSONS FROM DISCARDED ATTEMPTS",
}


class GeneratorService:
    @staticmethod
    def build_prompt(
        task: RtlTask,
        context: EvolvingContext,
        kind: AttemptKind,
        depth: int = 8,
        char_budget: Optional[int] = None,
    ) -> GeneratorPrompt:
        """
        Assemble the prompt. Sections always appear in this order: task
        instruction, specification, existing code, context, output instruction.

        Args:
            task: The design problem
            context: Evolving context (ignored for Fresh attempts)
            kind: Fresh, Repair or Restart
            depth: Open history entries to render
            char_budget: Maximum prompt size in characters

        Raises:
            PromptOverflow: the prompt exceeds char_budget
        """
        context_render = ""
        if kind == AttemptKind.RESTART:
            # Only distilled insights survive a restart
            context_render = CoordinatorService.render(
                EvolvingContext(insights=context.insights), 0
            )
        elif kind == AttemptKind.REPAIR:
            context_render = CoordinatorService.render(context, depth)

        sections = [
            get_category_instruction(task.category),
            f"SPECIFICATION:\n{task.specification.strip()}",
        ]
        if task.prior_code is not None:
            sections.append(f"EXISTING CODE:\n```verilog\n{task.prior_code.rstrip()}\n```")
        if context_render:
            sections.append(f"{CONTEXT_HEADERS[kind]}:\n{context_render}")
        sections.append(get_output_instruction(task.top_module))

        prompt = GeneratorPrompt(
            system=get_generator_system_message(),
            spec=task.specification,
            prior_code=task.prior_code,
            context_render=context_render,
            attempt_kind=kind,
            user="\n\n".join(sections),
        )
        if char_budget is not None and prompt.size > char_budget:
            raise PromptOverflow(
                f"Generator prompt of {prompt.size} chars exceeds budget {char_budget}"
            )
        return prompt

    @staticmethod
    def build_fitting_prompt(
        task: RtlTask,
        context: EvolvingContext,
        kind: AttemptKind,
        depth: int,
        char_budget: int,
    ) -> GeneratorPrompt:
        """
        build_prompt, halving the rendered history depth on overflow.

        Raises:
            PromptOverflow: still too large with no history rendered
        """
        while True:
            try:
                return GeneratorService.build_prompt(task, context, kind, depth, char_budget)
            except PromptOverflow:
                if kind != AttemptKind.REPAIR or depth == 0:
                    raise
                depth //= 2
                logger.info(f"Prompt over budget; re-rendering with history depth {depth}")

    @staticmethod
    async def generate(
        task: RtlTask,
        context: EvolvingContext,
        kind: AttemptKind,
        backend: BaseBackend,
        temperature: float = 1.2,
        max_tokens: int = 4096,
        depth: int = 8,
        char_budget: int = 100_000,
    ) -> str:
        """
        Build the prompt and make one gateway call; the context is only read.

        Returns:
            Extracted RTL source

        Raises:
            NoCodeBlock: the reply holds no Verilog
            PromptOverflow: no history depth fits the budget
            GatewayError: propagated from the backend
        """
        prompt = GeneratorService.build_fitting_prompt(
            task, context, kind, depth, char_budget
        )
        request = ChatRequest(
            messages=[
                ChatMessage(role=ChatRole.SYSTEM, content=prompt.system),
                ChatMessage(role=ChatRole.USER, content=prompt.user),
            ],
            temperature=temperature,
            max_tokens=max_tokens,
            tag=GENERATOR_TAG,
        )
        response = await complete(backend, request)
        return extract_code(response.content)
