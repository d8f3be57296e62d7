"""Exception types shared across the pipeline.

Each carries the process exit code the command line maps it to.
"""


class PipelineError(Exception):
    exit_code = 1


class ConfigError(PipelineError, ValueError):
    exit_code = 1


class DatasetError(PipelineError, ValueError):
    exit_code = 2


class CheckpointError(PipelineError):
    exit_code = 2


class NumericError(PipelineError, FloatingPointError):
    exit_code = 3
