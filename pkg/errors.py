from __future__ import annotations

# Exceptions raised by the qkdlab modules. The CLI maps them to exit codes.


class QkdLabError(Exception):
    pass


class NonUnitaryError(QkdLabError, ValueError):
    pass


class DimensionMismatchError(QkdLabError, ValueError):
    pass


class UnknownProtocolError(QkdLabError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown protocol"


class UnsupportedProtocolError(QkdLabError, ValueError):
    pass


class PreprocessingRangeError(QkdLabError, ValueError):
    pass


class ChannelSpecError(QkdLabError, ValueError):
    pass


class InfeasibleErrorRateError(QkdLabError, ValueError):
    pass


class NoCrossingError(QkdLabError):
    # delta I never changes sign on [0, 1]
    def __init__(self, protocol: str, q_full: float):
        super().__init__(f"no crossing for {protocol} at or below Q(1) = {q_full:.6f}")
        self.protocol = protocol
        self.q_full = q_full


class SolverConvergenceError(QkdLabError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SettingsError(QkdLabError, ValueError):
    # malformed QKDLAB_* environment value
    pass
