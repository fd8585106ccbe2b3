"""Exception hierarchy.

Every error carries a short machine-readable ``code`` used by the CLI
(``ERROR <code>: message``) and an ``exit_status``: 1 for validation
problems detected before a run starts, 2 for runtime divergence or
singularity.
"""


class ZeroGError(Exception):
    code = "error"
    exit_status = 2


class ValidationError(ZeroGError):
    code = "validation"
    exit_status = 1


class ConfigError(ValidationError):
    code = "config"


class NonPositiveMass(ValidationError):
    code = "non-positive-mass"


class NonSPDInertia(ValidationError):
    code = "non-spd-inertia"


class SingularDeltaInertia(ValidationError):
    code = "singular-delta-inertia"

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class SingularFlexDelta(ValidationError):
    code = "singular-flex-delta"


class SingularMassMatrix(ZeroGError):
    code = "singular-mass-matrix"


class NearSingularJacobian(ZeroGError):
    code = "near-singular-jacobian"

    def __init__(self, message, condition=None, q=None):
        super().__init__(message)
        self.condition = condition
        self.q = q


class SingularClosedLoopMatrix(ZeroGError):
    code = "singular-closed-loop"

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class RankDeficient(ZeroGError):
    code = "rank-deficient"

    def __init__(self, message, null_direction=None):
        super().__init__(message)
        self.null_direction = null_direction


class NonDecayingError(ZeroGError):
    code = "non-decaying"


class EmptyDataset(ValidationError):
    code = "empty-dataset"


class ZeroCMOffset(ValidationError):
    code = "zero-cm-offset"


class Diverged(ZeroGError):
    code = "divergence"

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t
