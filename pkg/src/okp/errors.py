"""Exception types shared across the okp package."""


class OkpError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateInput(OkpError):
    """Point-set alignment input is unusable (too few or collapsed points)."""


class DegenerateFrame(OkpError):
    """Frame construction input vectors are zero or (anti)parallel."""


class ConfigError(OkpError):
    """Skeleton configuration is inconsistent; message names the field."""


class IncompleteKeypoints(OkpError):
    """A keypoint set has missing (non-finite) entries."""

    def __init__(self, missing_indices):
        self.missing_indices = list(missing_indices)
        super().__init__(f"missing keypoints at indices {self.missing_indices}")


class SpaceMismatch(OkpError):
    """Operands carry different coordinate-space tags."""


class CountMismatch(OkpError):
    """Operands have incompatible lengths or layouts."""


class EmptyDataset(OkpError):
    """An operation that needs at least one frame received none."""


class FormatError(OkpError):
    """A data file does not conform to its documented format."""
