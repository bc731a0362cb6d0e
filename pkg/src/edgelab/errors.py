"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` used by the command line front end:
1 for invalid input, 2 for numerical failures.
"""


class EdgelabError(Exception):
    exit_code = 1

    @property
    def code(self) -> str:
        return type(self).__name__


class ValidationError(EdgelabError):
    exit_code = 1


class NumericalError(EdgelabError):
    exit_code = 2


# atoms
class MeanNotZero(ValidationError):
    pass


class ProbInvalid(ValidationError):
    pass


class DegenerateAtoms(ValidationError):
    pass


class OrderOutOfRange(ValidationError):
    pass


class EmptyGrid(ValidationError):
    pass


# exactdist
class TooLarge(NumericalError):
    pass


class Mismatch(ValidationError):
    pass


class BadInterval(ValidationError):
    pass


# resonance
class SingularD(NumericalError):
    pass


class OptimizerFail(NumericalError):
    pass


class NotResonant(ValidationError):
    pass


class BadWindow(ValidationError):
    pass


class QuadratureFail(NumericalError):
    pass


# lattice
class NumericalRankLoss(NumericalError):
    pass


class BudgetExceeded(NumericalError):
    pass


class UnsupportedDim(ValidationError):
    pass


# limitlaw
class NearZeroY(NumericalError):
    pass


class ZeroC(ValidationError):
    pass


class EmptyEnsemble(ValidationError):
    pass


# experiments
class EmptySample(ValidationError):
    pass


class RejectionBudget(NumericalError):
    pass
