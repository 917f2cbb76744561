"""Exception and warning types raised across the pipeline."""


class PhiprofError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(PhiprofError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class ParseError(PhiprofError):
    """Malformed input line. Carries the 1-based line number and offending token."""

    def __init__(self, message, line_no=None, token=None, source=None):
        self.line_no = line_no
        self.token = token
        self.source = source
        self.message = message
        super().__init__(self._render())

    def _render(self):
        where = []
        if self.source:
            where.append(str(self.source))
        if self.line_no is not None:
            where.append(f"line {self.line_no}")
        prefix = ":".join(where)
        text = f"{prefix}: {self.message}" if prefix else self.message
        if self.token is not None:
            text += f" (token {self.token!r})"
        return text

    def with_source(self, source):
        self.source = source
        self.args = (self._render(),)
        return self


class MonotonicityError(ParseError):
    pass


class IncompleteRecordError(ParseError):
    pass


class UnsynchronizableStreamError(PhiprofError):
    def __init__(self, stream, gap):
        self.stream = stream
        self.gap = gap
        super().__init__(
            f"stream {stream} cannot be synchronized: wall-clock anchors disagree by {gap:.3f} s"
        )


class InconsistentTimersError(PhiprofError):
    pass


class InconsistentAccountingError(PhiprofError):
    pass


class UnplaceablePhaseError(PhiprofError):
    def __init__(self, phase, detail=""):
        self.phase = phase
        super().__init__(f"cannot place phase {phase}" + (f": {detail}" if detail else ""))


class CoverageError(PhiprofError):
    pass


class UndefinedBandwidthError(PhiprofError):
    pass


class InfeasibleScenarioError(PhiprofError):
    pass


class PlanError(PhiprofError):
    pass


class SamplerStartupError(PhiprofError):
    pass


class StepFailure(PhiprofError):
    def __init__(self, step, cause):
        self.step = step
        self.cause = cause
        super().__init__(f"step {step} failed: {cause}")


class MeasurementWarning(UserWarning):
    """Measurement-quality issue: surfaced in reports, never fatal."""
