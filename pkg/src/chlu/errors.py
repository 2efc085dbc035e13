"""Exception types raised by the chlu package."""


class ChluError(Exception):
    """Base class for all chlu errors."""


class NonFiniteStateError(ChluError, ValueError):
    def __init__(self, what="state"):
        super().__init__(f"non-finite {what}")


class MasslessOriginError(ChluError, ValueError):
    def __init__(self):
        super().__init__("undefined massless gradient at origin")


class DimensionError(ChluError, ValueError):
    pass


class IntegrationDiverged(ChluError, FloatingPointError):
    """Raised when a state or energy component blows up during stepping.

    ``energy`` holds the last (H, T, V, C) record that could be evaluated
    (entries may be nan) and ``step`` the index of the failing step.
    """

    def __init__(self, energy=None, step=None, detail=""):
        self.energy = energy
        self.step = step
        msg = "integration diverged"
        if step is not None:
            msg += f" at step {step}"
        if detail:
            msg += f": {detail}"
        if energy is not None:
            msg += " (H={:.6g}, T={:.6g}, V={:.6g}, C={:.6g})".format(*energy)
        super().__init__(msg)


class GradientDiverged(ChluError, FloatingPointError):
    def __init__(self):
        super().__init__("gradient diverged")


class IdxFormatError(ChluError, ValueError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class CheckpointError(ChluError, ValueError):
    pass


class CheckpointReadError(CheckpointError):
    def __init__(self, path, reason):
        super().__init__(f"unreadable checkpoint {path}: {reason}")


class CheckpointVersionError(CheckpointError):
    def __init__(self, found):
        self.found = found
        super().__init__(f"unsupported checkpoint format_version {found!r}")


class CheckpointShapeError(CheckpointError):
    def __init__(self, detail):
        super().__init__(f"shape inconsistency: {detail}")
