"""Exception hierarchy shared by all modules."""


class BRLabError(Exception):
    pass


class ContractError(BRLabError):
    """Operand in the wrong space or otherwise violating a precondition."""


class DomainError(BRLabError, ValueError):
    pass


class ParameterError(BRLabError, ValueError):
    pass


class SymbolEvaluationError(BRLabError):
    pass


class DegenerateInputError(BRLabError):
    pass


class AdmissibilityError(BRLabError):
    def __init__(self, msg, t=None):
        super().__init__(msg)
        self.t = t


class ClassificationError(BRLabError):
    pass


class SingularityError(BRLabError):
    pass


class RangeError(BRLabError, ValueError):
    pass


class ConeDomainError(BRLabError):
    pass


class SupportError(BRLabError):
    pass


class ResolutionError(BRLabError):
    pass


class LemmaFailure(BRLabError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class QuadratureError(BRLabError):
    pass


class DominationFailure(BRLabError):
    pass


class FitError(BRLabError):
    pass


class ConfigError(BRLabError):
    pass


class InputError(BRLabError, ValueError):
    pass
