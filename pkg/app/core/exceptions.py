from functools import wraps

EXIT_OK = 0
EXIT_UNSOLVED = 1
EXIT_USAGE = 2
EXIT_TOOL = 3


class RtlAgentError(Exception):
    def __init__(self, message: str, exit_code: int = EXIT_USAGE):
        self.message = message
        self.exit_code = exit_code
        super().__init__(message)


class ConfigError(RtlAgentError):
    pass


class ToolError(RtlAgentError):
    def __init__(self, message: str):
        super().__init__(message, EXIT_TOOL)


# Task model
class SchemaViolation(RtlAgentError):
    pass


class UnknownCategory(SchemaViolation):
    pass


class InvalidCandidate(RtlAgentError):
    pass


class WorkspaceError(RtlAgentError):
    def __init__(self, message: str):
        super().__init__(message, EXIT_TOOL)


# LLM gateway
class GatewayError(RtlAgentError):
    def __init__(self, message: str, exit_code: int = EXIT_TOOL):
        super().__init__(message, exit_code)


class RetriesExhausted(GatewayError):
    pass


class ScriptNoMatch(GatewayError):
    pass


class CassetteMiss(GatewayError):
    pass


class AuthMissing(GatewayError):
    def __init__(self, message: str):
        super().__init__(message, EXIT_USAGE)


class BackendFailure(GatewayError):
    pass


# Agent roles
class NoCodeBlock(RtlAgentError):
    pass


class PromptOverflow(RtlAgentError):
    pass


class EmptyReflection(RtlAgentError):
    pass


class EvalError(RtlAgentError):
    pass


def tool_errors(func):
    """Map OS-level failures of an async external-tool call to ToolError"""

    @wraps(func)
    async def wrapper(*args, **kwargs):
        try:
            return await func(*args, **kwargs)
        except FileNotFoundError as e:
            raise ToolError(f"Executable not found: {e.filename or e}")
        except PermissionError as e:
            raise ToolError(f"Permission denied: {e.filename or e}")
        except OSError as e:
            raise ToolError(f"Failed to spawn tool: {e}")

    return wrapper


class RunCancelled(RtlAgentError):
    """Raised inside a loop when its cancel signal is observed"""

    pass
