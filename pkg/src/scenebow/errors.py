"""Exception types raised across the scenebow pipeline."""


class ScenebowError(Exception):
    """Base class for all scenebow errors."""


class DataError(ScenebowError):
    """Problems with input data (images, label files, caches)."""


class ConfigError(ScenebowError):
    """Invalid configuration or invalid operation parameters."""


class ConvergenceError(ScenebowError):
    """An iterative solver failed to converge."""


# -- dataset ----------------------------------------------------------------

class MissingLabelFile(DataError):
    pass


class MalformedLabelFile(DataError):
    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}: line {line_no}: {reason}")
        self.path = path
        self.line_no = line_no


class UnknownConcept(DataError):
    def __init__(self, token, path=None):
        where = f" in {path}" if path else ""
        super().__init__(f"unknown concept token {token!r}{where}")
        self.token = token


class UnreadableImage(DataError):
    pass


class MissingCategory(DataError):
    pass


class ImageTooSmall(DataError):
    pass


class OutOfBounds(ConfigError):
    pass


# -- keypoints --------------------------------------------------------------

class KeypointTooCloseToEdge(ConfigError):
    pass


class CacheFingerprintMismatch(DataError):
    pass


class CorruptCache(DataError):
    pass


# -- features ---------------------------------------------------------------

class EmptyRegion(ConfigError):
    pass


class RegionTooSmall(ConfigError):
    pass


# -- vocabulary / cbow ------------------------------------------------------

class TooFewPoints(ConfigError):
    def __init__(self, n_points, k):
        super().__init__(f"k-means needs at least K={k} points, got {n_points}")
        self.n_points = n_points
        self.k = k


class EmptyCategory(ConfigError):
    pass


class DescriptorLengthMismatch(ConfigError):
    pass


class HalfVocabularyModeMismatch(ConfigError):
    pass


class MixedVocabularies(ConfigError):
    pass


# -- annotators -------------------------------------------------------------

class EmptyConcept(ConfigError):
    pass


class DimensionMismatch(ConfigError):
    pass


class SingleClass(ConfigError):
    pass


class NonConvergence(ConvergenceError):
    def __init__(self, residual, tol, iterations):
        super().__init__(
            f"SMO did not converge: KKT residual {residual:.3e} > tol {tol:.1e} "
            f"after {iterations} iterations"
        )
        self.residual = residual
        self.tol = tol
        self.iterations = iterations


# -- evaluation / analysis --------------------------------------------------

class ConceptTooSmall(ConfigError):
    pass


class EmptyMatrix(ConfigError):
    pass


class UnknownCategory(ConfigError):
    pass


class CacheMiss(DataError):
    def __init__(self, image_id):
        super().__init__(f"no cached descriptors for image {image_id!r}")
        self.image_id = image_id


class ConstantInput(ConfigError):
    pass
