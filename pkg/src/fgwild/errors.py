"""Exception hierarchy.

Every error raised on purpose by this package derives from
:class:`FGWildError` and carries a short machine-readable ``code`` that the
command-line interface echoes in its error object.
"""


class FGWildError(Exception):
    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class DataError(FGWildError, ValueError):
    code = "invalid_data"


class MissingCensoringTime(DataError):
    code = "missing_censoring_time"


class TiedType1Events(DataError):
    code = "tied_type1_events"

    def __init__(self, times):
        self.times = sorted(set(float(t) for t in times))
        super().__init__(
            "type-1 event times must be distinct; tied at "
            + ", ".join(f"{t:g}" for t in self.times)
        )

    def to_dict(self):
        d = super().to_dict()
        d["times"] = self.times
        return d


class NonFiniteCovariate(DataError):
    code = "non_finite_covariate"


class NegativeTime(DataError):
    code = "negative_time"


class EmptyRiskSet(FGWildError, ArithmeticError):
    code = "empty_risk_set"


class NoType1Events(FGWildError, ValueError):
    code = "no_type1_events"


class SingularInformation(FGWildError, ArithmeticError):
    code = "singular_information"


class NotConverged(FGWildError, RuntimeError):
    code = "not_converged"


class SingularOptionalCovariation(FGWildError, ArithmeticError):
    code = "singular_optional_covariation"


class BreslowZero(FGWildError, ArithmeticError):
    code = "breslow_zero"


class BreslowStarZero(FGWildError, ArithmeticError):
    code = "breslow_star_zero"


class ExcessiveReplicateRejection(FGWildError, RuntimeError):
    code = "excessive_replicate_rejection"


class InvalidInterval(FGWildError, ValueError):
    code = "invalid_interval"


class NegativeCauseSpecificHazard(FGWildError, ValueError):
    code = "negative_cause_specific_hazard"


class ExcessiveStudyFailure(FGWildError, RuntimeError):
    code = "excessive_study_failure"
