"""Exception hierarchy shared by all priorseg modules."""


class PriorsegError(Exception):
    """Base class for every error raised by priorseg."""


# -- NIfTI parsing / writing -------------------------------------------------


class NiftiError(PriorsegError):
    """A NIfTI file could not be read or written."""


class BadMagic(NiftiError):
    pass


class UnsupportedDatatype(NiftiError):
    pass


class TruncatedFile(NiftiError):
    pass


class DimOutOfRange(NiftiError):
    pass


class ByteOrderError(NiftiError):
    """File is big-endian; only little-endian files are accepted."""


class InvalidHeaderField(NiftiError):
    pass


class NonFiniteData(NiftiError):
    pass


class ValueOverflow(NiftiError):
    pass


class IoFailure(PriorsegError):
    pass


class GridMismatch(PriorsegError):
    pass


# -- cohort manifests --------------------------------------------------------


class ManifestError(PriorsegError):
    pass


class SchemaError(ManifestError):
    pass


class UnknownStructureName(ManifestError):
    pass


class DuplicatePatientId(ManifestError):
    pass


class MissingFile(ManifestError):
    pass


# -- encoding ----------------------------------------------------------------


class TooManyStructures(PriorsegError):
    pass


class MissingStructure(PriorsegError):
    pass


# -- metrics, regions, fairness ----------------------------------------------


class EmptyMask(PriorsegError):
    pass


class EmptyLandmark(PriorsegError):
    pass


class NonMonotonicLandmarks(PriorsegError):
    pass


class EmptyGroup(PriorsegError):
    def __init__(self, sex: str, region: str = "WHOLE"):
        super().__init__(f"no {sex} samples in region {region}")
        self.sex = sex
        self.region = region


class SliceOutOfRange(PriorsegError):
    pass
