# coding: utf-8
"""Common errors and status codes for the `longtail` package.

Every exception keeps its constructor arguments as attributes, so that a
caller (the command line interface, mostly) can recover the offending
parameter, row or subject without parsing messages.

"""

import typing

__all__ = [
    "InvalidParameter",
    "DomainError",
    "OutOfGridError",
    "DataError",
    "ConfigError",
    "NumericalError",
    "StartupError",
    "QuadratureError",
    "DiagnosticsError",
    "UndefinedEstimate",
]


class InvalidParameter(ValueError):
    """A parameter value is not valid in the current context.

    Example:
        >>> err = InvalidParameter("sigma_u", -1.0, hint="positive number")
        >>> print(err)
        Invalid 'sigma_u' parameter value: -1.0 (expected positive number)

    """

    def __init__(
        self,
        name: str,
        value: object,
        *,
        choices: typing.Optional[typing.Sequence[object]] = None,
        hint: typing.Optional[str] = None,
    ) -> None:
        super().__init__(name, value)
        self.name = name
        self.value = value
        self.choices = None if choices is None else list(choices)
        self.hint = hint

    def __repr__(self) -> str:
        args = [repr(self.name), repr(self.value)]
        if self.choices is not None:
            args.append("choices={!r}".format(self.choices))
        if self.hint is not None:
            args.append("hint={!r}".format(self.hint))
        return "{}({})".format(type(self).__name__, ", ".join(args))

    def __str__(self) -> str:
        if self.choices is not None:
            *head, last = map(repr, self.choices)
            hint = "{} or {}".format(", ".join(head), last) if head else last
        else:
            hint = self.hint
        msg = "Invalid {!r} parameter value: {!r}".format(self.name, self.value)
        if hint is not None:
            msg += " (expected {})".format(hint)
        return msg


class DomainError(ValueError):
    """A function was evaluated outside of its mathematical domain."""

    def __init__(self, function: str, message: str) -> None:
        super().__init__(function, message)
        self.function = function
        self.message = message

    def __repr__(self) -> str:
        return "{}({!r}, {!r})".format(type(self).__name__, self.function, self.message)

    def __str__(self) -> str:
        return "Domain error in {!r}: {}".format(self.function, self.message)


class OutOfGridError(DomainError):
    """A probability could not be inverted on the latent search grid.

    Attributes:
        p (`float`): The probability that fell outside the grid range.
        side (`str`): Either ``"lower"`` or ``"upper"``, the side of the
            grid that would need to be extended.

    """

    def __init__(self, p: float, side: str) -> None:
        super().__init__(
            "mixture_inverse",
            "probability {!r} beyond the {} end of the grid".format(p, side),
        )
        self.p = p
        self.side = side

    def __repr__(self) -> str:
        return "{}({!r}, {!r})".format(type(self).__name__, self.p, self.side)


class DataError(ValueError):
    """The input data does not match the expected schema or rules."""

    def __init__(self, message: str, row: typing.Optional[int] = None) -> None:
        super().__init__(message, row)
        self.message = message
        self.row = row

    def __repr__(self) -> str:
        if self.row is None:
            return "{}({!r})".format(type(self).__name__, self.message)
        return "{}({!r}, row={!r})".format(type(self).__name__, self.message, self.row)

    def __str__(self) -> str:
        if self.row is None:
            return self.message
        return "row {}: {}".format(self.row, self.message)


class ConfigError(ValueError):
    """The run configuration is malformed or incomplete."""

    def __init__(self, message: str, key: typing.Optional[str] = None) -> None:
        super().__init__(message, key)
        self.message = message
        self.key = key

    def __repr__(self) -> str:
        if self.key is None:
            return "{}({!r})".format(type(self).__name__, self.message)
        return "{}({!r}, key={!r})".format(type(self).__name__, self.message, self.key)

    def __str__(self) -> str:
        if self.key is None:
            return self.message
        return "{!r}: {}".format(self.key, self.message)


class NumericalError(ArithmeticError):
    """A numerical routine failed, e.g. a Cholesky factorization."""

    def __init__(self, message: str, subject: typing.Optional[str] = None) -> None:
        super().__init__(message, subject)
        self.message = message
        self.subject = subject

    def __repr__(self) -> str:
        if self.subject is None:
            return "{}({!r})".format(type(self).__name__, self.message)
        return "{}({!r}, subject={!r})".format(type(self).__name__, self.message, self.subject)

    def __str__(self) -> str:
        if self.subject is None:
            return self.message
        return "{} (subject {!r})".format(self.message, self.subject)


class StartupError(NumericalError):
    """No finite starting point could be found for a Markov chain."""

    def __init__(self, chain: int, attempts: int) -> None:
        super().__init__(
            "non-finite initial posterior after {} attempts in chain {}".format(attempts, chain)
        )
        self.chain = chain
        self.attempts = attempts

    def __repr__(self) -> str:
        return "{}({!r}, {!r})".format(type(self).__name__, self.chain, self.attempts)


class QuadratureError(NumericalError):
    """An adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, residual: float, tolerance: float) -> None:
        super().__init__(
            "quadrature did not converge: residual {:.3g} above tolerance {:.3g}".format(
                residual, tolerance
            )
        )
        self.residual = residual
        self.tolerance = tolerance

    def __repr__(self) -> str:
        return "{}({!r}, {!r})".format(type(self).__name__, self.residual, self.tolerance)


class DiagnosticsError(ValueError):
    """Convergence diagnostics cannot be computed for the given trace."""

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message

    def __repr__(self) -> str:
        return "{}({!r})".format(type(self).__name__, self.message)

    def __str__(self) -> str:
        return self.message


class UndefinedEstimate(ArithmeticError):
    """An estimator has no support in the sample, e.g. no joint exceedance."""

    def __init__(self, quantity: str, message: str) -> None:
        super().__init__(quantity, message)
        self.quantity = quantity
        self.message = message

    def __repr__(self) -> str:
        return "{}({!r}, {!r})".format(type(self).__name__, self.quantity, self.message)

    def __str__(self) -> str:
        return "{} is undefined: {}".format(self.quantity, self.message)
