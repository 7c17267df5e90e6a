"""Exception types shared across modules."""


class ContractError(ValueError):
    """An operation was called with inputs outside its contract."""


class DegenerateRatioError(ContractError):
    """An importance ratio would divide by a (near-)zero behaviour probability."""


class NotReadyError(RuntimeError):
    """The replay buffer has nothing that can start a segment yet."""


class NonFiniteError(FloatingPointError):
    """A loss, target or parameter became NaN or infinite."""
