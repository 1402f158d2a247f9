"""Exception types shared across the package."""


class DeconlabError(Exception):
    """Base class for all package errors."""


class ConfigError(DeconlabError, ValueError):
    """Invalid model, scenario or experiment configuration.

    ``path`` locates the offending field inside a configuration document
    when the error comes from a parser.
    """

    def __init__(self, message, path=None):
        self.path = path
        self.message = message
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class DegenerateInputError(DeconlabError, ValueError):
    """Input data that a fitter cannot handle, e.g. a constant column."""


class UnsupportedAnalyticError(DeconlabError):
    """A closed-form computation was requested on a nonlinear mechanism."""


class CollinearityError(DeconlabError):
    """The outcome-model design matrix is numerically rank deficient.

    The attached :class:`~deconlab.estimators.CollinearityReport` carries the
    condition number and per-column variance inflation.
    """

    def __init__(self, report):
        self.report = report
        super().__init__(
            f"design matrix is rank deficient (condition number "
            f"{report.condition_number:.3g} > {report.threshold:.3g})"
        )
