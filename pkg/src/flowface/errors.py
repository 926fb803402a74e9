"""Exception hierarchy shared across the package and the HTTP service."""


class FlowfaceError(Exception):
    """Base class for all domain errors; the service maps these to HTTP 400."""


class MeshError(FlowfaceError):
    pass


class CameraError(FlowfaceError):
    pass


class WeightError(FlowfaceError):
    pass


class KernelError(FlowfaceError):
    pass


class LossError(FlowfaceError):
    pass


class FormatError(FlowfaceError):
    """Malformed or truncated file payloads (.flo, tensor container, images)."""


class ConfigError(FlowfaceError):
    pass


class PipelineError(FlowfaceError):
    pass
