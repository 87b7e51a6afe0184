"""Exception types shared across the engine."""


class MigresError(Exception):
    """Base class for all engine errors."""


class CorpusError(MigresError):
    """Invalid corpus input or index file."""


class ConfigError(MigresError):
    """Invalid configuration key, value, or file."""


class DatasetError(MigresError):
    """Invalid evaluation dataset input."""


class ProtocolError(MigresError):
    """A model backend violated its wire contract."""


class StubUnderflowError(ProtocolError):
    """A scripted stub ran out of canned responses."""


class ChatTransportError(MigresError):
    """Network-level chat failure after exhausting the retry budget."""

    def __init__(self, message, attempts):
        super().__init__(message)
        self.attempts = attempts


class ChatHttpError(MigresError):
    """Terminal non-2xx response from a chat backend."""

    def __init__(self, message, status_code):
        super().__init__(message)
        self.status_code = status_code
