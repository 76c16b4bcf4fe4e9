"""Exception types shared across the library."""


class MaskAnyNetError(Exception):
    pass


class DimensionError(MaskAnyNetError, ValueError):
    """Shapes or sizes incompatible (non-divisible dims, mismatched arrays)."""


class RangeError(MaskAnyNetError, ValueError):
    """A numeric argument is outside its legal range."""


class UnsupportedRatioError(MaskAnyNetError, ValueError):
    """Grid masking only supports ratios of the form 1/k^2."""

    def __init__(self, ratio, nearest):
        self.ratio = ratio
        self.nearest = tuple(nearest)
        near = ", ".join(f"1/{k}^2 = {1.0 / (k * k):.6g}" for k in nearest)
        super().__init__(
            f"grid mask ratio {ratio} is not 1/k^2 for integer k; nearest supported: {near}"
        )


class EmptyMaskError(MaskAnyNetError, ValueError):
    """An operation that needs masked cells was given a mask with none."""


class LayoutError(MaskAnyNetError, ValueError):
    """Reuse-image layout inconsistent with the mask it claims to come from."""


class ConfigurationError(MaskAnyNetError, ValueError):
    """Invalid configuration (unknown split point, bad toggles, bad schema)."""


class IngestionError(MaskAnyNetError, RuntimeError):
    """Dataset unavailable; message carries fetch instructions."""


class ConsistencyError(MaskAnyNetError, ValueError):
    """Checkpoint and requested evaluation disagree."""


class UndefinedSimilarityError(MaskAnyNetError, ValueError):
    """Cosine similarity undefined (zero feature vector)."""
