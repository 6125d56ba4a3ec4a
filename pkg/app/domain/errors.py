from typing import Optional


class SwitchAbsError(ValueError):
    """Base class for every domain failure raised by the toolkit"""


class InvalidInputError(SwitchAbsError):
    pass


class DwellViolationError(SwitchAbsError):
    """A mode switch was requested before the dwell time elapsed"""


class CertificateError(SwitchAbsError):
    pass


class UnsupportedGainError(SwitchAbsError):
    """Gain composition left the linear family"""


class CompositionError(SwitchAbsError):
    pass


class MemoryCapError(SwitchAbsError):
    def __init__(self, message: str, estimate_gb: float):
        super().__init__(message)
        self.estimate_gb = estimate_gb


class ArtifactIntegrityError(SwitchAbsError):
    pass


class ArtifactVersionError(SwitchAbsError):
    pass


class MissingArtifactError(SwitchAbsError):
    pass


class ConfigError(SwitchAbsError):
    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key
