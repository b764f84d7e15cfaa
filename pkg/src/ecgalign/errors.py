"""Exception hierarchy shared across the package."""


class EcgAlignError(Exception):
    """Base class for all domain errors raised by this package."""


class IoError(EcgAlignError):
    """Filesystem-level failure while reading or writing an artifact."""


class MalformedRecord(EcgAlignError):
    """An ECG record file or array violates the record contract."""


class MalformedManifest(EcgAlignError):
    """A dataset manifest is structurally invalid."""


class NoBeatsDetected(EcgAlignError):
    """Fewer than two R peaks were found in the signal."""


class EmptyReport(EcgAlignError):
    """A text report is empty where content is required."""


class EmptyCorpus(EcgAlignError):
    """Vocabulary construction was given no documents."""


class UnknownId(EcgAlignError):
    """A token id falls outside the vocabulary."""


class ShapeMismatch(EcgAlignError):
    """Tensor or array shapes do not agree."""


class SequenceTooLong(EcgAlignError):
    """A token sequence exceeds the configured maximum length."""


class BatchMismatch(EcgAlignError):
    """Paired batches differ in size or are empty."""


class EmptyDataset(EcgAlignError):
    """A training run was started with no usable samples."""


class IncompatibleVersion(EcgAlignError):
    """A checkpoint container has the wrong magic or inconsistent layout."""


class DuplicateId(EcgAlignError):
    """Ids passed to an index or manifest are not unique."""


class NormViolation(EcgAlignError):
    """An embedding expected to be unit-norm is not."""


class EmptyIndex(EcgAlignError):
    """A query was issued against an index with no entries."""


class DegenerateLabels(EcgAlignError):
    """A label column is all-positive or all-negative, or no labels exist."""


class LengthMismatch(EcgAlignError):
    """Parallel prediction/reference lists differ in length."""


class EmptyCandidate(EcgAlignError):
    """A metric candidate has no tokens."""


class EmptyReports(EcgAlignError):
    """An instruction record was requested with no source reports."""


class NoAbsentLabels(EcgAlignError):
    """Negative injection found no taxonomy label absent from the report."""


class BackendUnavailable(EcgAlignError):
    """The narrative backend could not be reached."""


class BackendMalformedResponse(EcgAlignError):
    """The narrative backend answered with an unusable payload."""
