"""Exception hierarchy. The CLI maps each family to an exit code."""


class PipelineError(Exception):
    exit_code = 5


class ConfigError(PipelineError):
    exit_code = 2


class DataError(PipelineError, ValueError):
    exit_code = 3


class SchemaError(DataError):
    """A corpus, rule, or artifact file does not match its documented format."""


class MissingArtifactError(DataError):
    def __init__(self, path, producer: str):
        self.path = path
        self.producer = producer
        super().__init__(f"missing artifact {path}; run `{producer}` first")


class BackendError(PipelineError):
    """An external model backend failed or could not be reached."""

    exit_code = 4
