"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2,
numerical failures (blowup, out-of-box evaluation mid-run) exit 3,
identity-check failures exit 1.
"""


class BohmsimError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BohmsimError):
    """Invalid parameters or scenario configuration (exit code 2)."""


class DegenerateFieldError(BohmsimError):
    """Every site of a field is below the node threshold; no polar split exists."""


class OutOfBoxError(BohmsimError):
    """A field configuration left the configuration-space box.

    Carries the offending site index and complex value so the user can
    size the box accordingly.
    """

    def __init__(self, site, value, half_width, hint=""):
        self.site = site
        self.value = value
        self.half_width = half_width
        msg = (f"configuration value {value!r} at site {site} lies outside the "
               f"configuration box (half-width {half_width})")
        if hint:
            msg += "; " + hint
        super().__init__(msg)


class NumericalBlowupError(BohmsimError):
    """Non-finite values appeared during propagation (exit code 3)."""

    def __init__(self, step_index, what="propagation produced non-finite values"):
        self.step_index = step_index
        super().__init__(f"{what} at step {step_index}")
