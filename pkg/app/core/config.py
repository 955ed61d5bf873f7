import json
import logging
import os
import re
import shutil
from pathlib import Path
from typing import List, Optional, Union

from pydantic import BaseModel, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.exceptions import ConfigError, ToolError
from app.schemas.forge import ForgeConfig
from app.schemas.llm import BackendKind, BackendSpec
from app.schemas.orchestrator import LoopConfig, ParallelConfig
from app.schemas.sim import SimConfig

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    # Application Information
    app_name: str = Field(default="rtlsmith")
    app_version: str = Field(default="0.1.0")
    debug: bool = Field(default=False)

    # Logging
    log_level: str = Field(default="info")
    log_dir: str = Field(default="logs")
    log_to_file: bool = Field(default=False)

    # Storage
    output_root: str = Field(default="runs")
    scratch_root: str = Field(default=".scratch")
    keep_workspaces: bool = Field(default=False)

    # Simulator tools
    iverilog_path: str = Field(default="iverilog")
    vvp_path: str = Field(default="vvp")
    compile_flags: Union[str, List[str]] = Field(default=["-g2012"])

    # LLM backends
    max_concurrent_requests: int = Field(default=8)
    default_seed: int = Field(default=0)

    # Prompt templates (None = bundled app/templates)
    prompt_dir: Optional[str] = Field(default=None)

    # ============================
    # Generic comma-separated parser
    # ============================
    @staticmethod
    def _parse_csv(value, default):
        if isinstance(value, str):
            items = [x.strip() for x in value.split(",") if x.strip()]
            return items if items else default
        if isinstance(value, list):
            return value
        return default

    @field_validator("compile_flags", mode="before")
    def validate_compile_flags(cls, v):
        return cls._parse_csv(v, ["-g2012"])

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


def load_settings() -> Settings:
    try:
        return Settings()
    except ValidationError as e:
        logger.error(f"❌ Invalid settings: {e}")
        raise


settings = load_settings()


# ============================================
# Run configuration (JSON file)
# ============================================


def _default_backend() -> BackendSpec:
    return BackendSpec(kind=BackendKind.SCRIPTED, rules=[])


class BackendSet(BaseModel):
    """One backend spec per agent role"""

    generator: BackendSpec = Field(default_factory=_default_backend)
    reflector: BackendSpec = Field(default_factory=_default_backend)
    coordinator: BackendSpec = Field(default_factory=_default_backend)

    def roles(self):
        return {
            "generator": self.generator,
            "reflector": self.reflector,
            "coordinator": self.coordinator,
        }


class WorkspaceConfig(BaseModel):
    scratch_root: str = Field(default_factory=lambda: settings.scratch_root)
    keep_workspaces: bool = Field(default_factory=lambda: settings.keep_workspaces)
    retain_failed: bool = True


class GlobalConfig(BaseModel):
    backends: BackendSet = Field(default_factory=BackendSet)
    sim: SimConfig = Field(
        default_factory=lambda: SimConfig(
            compiler_command=settings.iverilog_path,
            simulator_command=settings.vvp_path,
            compile_flags=list(settings.compile_flags),
        )
    )
    loop: LoopConfig = Field(default_factory=LoopConfig)
    parallel: ParallelConfig = Field(default_factory=ParallelConfig)
    forge: ForgeConfig = Field(default_factory=ForgeConfig)
    workspace: WorkspaceConfig = Field(default_factory=WorkspaceConfig)
    output_root: str = Field(default_factory=lambda: settings.output_root)
    max_concurrent_requests: int = Field(
        default_factory=lambda: settings.max_concurrent_requests, ge=1
    )


_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::-([^}]*))?\}")


def interpolate_env(text: str) -> str:
    """Replace ${VAR} and ${VAR:-default} with environment values"""

    def _sub(match: re.Match) -> str:
        name, default = match.group(1), match.group(2)
        value = os.environ.get(name)
        if value is not None:
            return value
        if default is not None:
            return default
        raise ConfigError(f"Environment variable {name} is not set")

    return _ENV_PATTERN.sub(_sub, text)


def _resolve_relative(spec: BackendSpec, base_dir: Path) -> BackendSpec:
    updates = {}
    if spec.script_path and not Path(spec.script_path).is_absolute():
        updates["script_path"] = str(base_dir / spec.script_path)
    if spec.cassette_path and not Path(spec.cassette_path).is_absolute():
        updates["cassette_path"] = str(base_dir / spec.cassette_path)
    if spec.inner is not None:
        updates["inner"] = _resolve_relative(spec.inner, base_dir)
    return spec.model_copy(update=updates) if updates else spec


def load_global_config(path: Optional[Union[str, Path]] = None) -> GlobalConfig:
    """
    Load the run configuration from a JSON file.

    Args:
        path: JSON config file; None yields the defaults from Settings

    Returns:
        Validated GlobalConfig with backend file paths made absolute

    Raises:
        ConfigError: unreadable file, bad JSON, unset env var or schema violation
    """
    if path is None:
        return GlobalConfig()

    config_path = Path(path)
    try:
        raw = config_path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {config_path}: {e}")

    try:
        data = json.loads(interpolate_env(raw))
        config = GlobalConfig.model_validate(data)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {config_path} is not valid JSON: {e}")
    except ValidationError as e:
        raise ConfigError(f"Invalid config {config_path}: {e}")

    base_dir = config_path.resolve().parent
    backends = BackendSet(
        **{
            role: _resolve_relative(spec, base_dir)
            for role, spec in config.backends.roles().items()
        }
    )
    return config.model_copy(update={"backends": backends})


def with_replay(config: GlobalConfig, cassette: Union[str, Path]) -> GlobalConfig:
    """Swap every role to replay mode over one cassette"""
    replay = BackendSpec(
        kind=BackendKind.REPLAY, cassette_path=str(cassette), fallback="error"
    )
    return config.model_copy(
        update={
            "backends": BackendSet(
                generator=replay, reflector=replay, coordinator=replay
            )
        }
    )


def validate_paths(config: GlobalConfig, need_simulator: bool = True) -> None:
    """
    Fail fast on every file and executable the config references.

    Raises:
        ConfigError: a script or cassette file is missing
        ToolError: a simulator executable is not found
    """
    for role, spec in config.backends.roles().items():
        for candidate in (spec, spec.inner):
            if candidate is None:
                continue
            if candidate.kind == BackendKind.SCRIPTED and candidate.script_path:
                if not Path(candidate.script_path).is_file():
                    raise ConfigError(
                        f"Script for {role} not found: {candidate.script_path}"
                    )
            if (
                candidate.kind == BackendKind.REPLAY
                and candidate.replay_fallback() == "error"
                and not Path(candidate.cassette_path).is_file()
            ):
                raise ConfigError(
                    f"Cassette for {role} not found: {candidate.cassette_path}"
                )

    if need_simulator:
        for tool in (config.sim.compiler_command, config.sim.simulator_command):
            if shutil.which(tool) is None:
                raise ToolError(f"Executable not found: {tool}")
