"""Exception taxonomy shared by every layer of the simulator."""


class Frugal5gError(Exception):
    """Base class for all errors raised by this package."""


class InvariantViolation(Frugal5gError, ValueError):
    pass


# -- frame codec -------------------------------------------------------------

class FrameError(Frugal5gError):
    """Raised when a byte string cannot be decoded into a frame."""


class Truncated(FrameError):
    pass


class UnknownType(FrameError):
    pass


class TooLarge(Frugal5gError, ValueError):
    pass


class NotData(Frugal5gError):
    pass


# -- radio legs --------------------------------------------------------------

class Unreachable(Frugal5gError):
    pass


class AlreadyConnected(Frugal5gError):
    pass


class BearerNotActive(Frugal5gError):
    pass


class DuplicateDrb(Frugal5gError):
    pass


class MrbNotReady(Frugal5gError):
    pass


# -- emulation / wlan --------------------------------------------------------

class UnexpectedEvent(Frugal5gError):
    """An event arrived for which the current phase defines no edge.

    The step functions never raise this; they return it inside a
    diagnostic ``Notify`` action and leave the state untouched.
    """


class UnknownUe(Frugal5gError):
    pass


class AssocIdExhausted(Frugal5gError):
    pass


class NotAssociated(Frugal5gError):
    pass


class ApAsleep(Frugal5gError):
    pass


# -- controller --------------------------------------------------------------

class StaleReport(Frugal5gError):
    pass


class NoCapacity(Frugal5gError):
    pass


class Disconnected(Frugal5gError):
    pass


# -- interworking ------------------------------------------------------------

class BadCredentials(Frugal5gError):
    pass


class NotAuthenticated(Frugal5gError):
    pass


class NoExternalNetwork(Frugal5gError):
    pass


class ModeMismatch(Frugal5gError):
    pass


class EpochRegression(Frugal5gError):
    pass


# -- harness -----------------------------------------------------------------

class SchemaError(Frugal5gError, ValueError):
    """Scenario file failed validation. ``path`` names the file, ``line`` the source line."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = path
        if line is not None:
            where = f"{path} (line {line})" if path else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
