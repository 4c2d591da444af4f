"""Exception hierarchy shared by all modules."""


class TreebnError(Exception):
    """Base class for all errors raised by this package."""


class MissingAssignment(TreebnError):
    """A tree evaluation reached a test whose variable is unassigned."""


class InvalidLocator(TreebnError):
    """A graft locator does not identify an existing leaf."""


class UnknownVariable(TreebnError):
    """A tree tests a variable outside the declared parent set."""


class NoSuchArc(TreebnError):
    """The requested arc is not present in the network."""


class WouldCreateCycle(TreebnError):
    """Reversing the arc would make the graph cyclic."""


class NotATree(TreebnError):
    """A tree-only operation was handed a tabular CPT."""


class CyclicSlice(TreebnError):
    """The in-slice dependency graph of a DPN slice has a cycle."""


class SchemaError(TreebnError):
    """A DPN schema violates a structural requirement."""


class TooLarge(TreebnError):
    """Exhaustive enumeration refused: instance above the context cap."""


class MismatchedVariables(TreebnError):
    """Two networks being compared are over different variable sets."""


class ZeroEvidenceProbability(TreebnError):
    """The evidence context has probability zero under the network."""


class AllZeroWeights(TreebnError):
    """Every simulation trial received weight zero."""


class UnsampledRead(TreebnError):
    """A CPT evaluation read a variable that was skipped by its guard.

    This indicates a soundness violation in the sample schedule and is
    always a bug, never a recoverable condition.
    """


class ParseError(TreebnError):
    """A model or evidence file could not be parsed.

    Carries optional line/column information for text formats.
    """

    def __init__(self, message: str, line: int | None = None,
                 column: int | None = None):
        if line is not None:
            message = f"line {line}" + (
                f", column {column}" if column is not None else "") + f": {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(TreebnError):
    """A parsed model failed semantic validation.

    The network-level violation report is attached when available.
    """

    def __init__(self, message: str, report: list[str] | None = None):
        if report:
            message = message + "\n  " + "\n  ".join(report)
        super().__init__(message)
        self.report = tuple(report or ())
