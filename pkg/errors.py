"""Typed pipeline errors.

Each error carries the process exit code the CLI returns for it, the way an
HTTP handler would carry a status code.
"""


class PipelineError(Exception):
    exit_code = 1

    def __init__(self, detail: str, exit_code: int = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code

    def with_stage(self, stage: str) -> "PipelineError":
        return type(self)(f"{stage}: {self.detail}", self.exit_code)


class ConfigError(PipelineError):
    exit_code = 2


class DataError(PipelineError):
    exit_code = 3


class ConvergenceError(PipelineError):
    exit_code = 4
