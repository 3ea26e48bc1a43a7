"""
Exceptions raised across timelyrec.

Every class carries the exit status the command line uses for it, so
input problems and numeric blowups are distinguishable from a shell.
"""


class TimelyRecError(Exception):
    exit_code = 1


class InputError(TimelyRecError, ValueError):
    """Malformed input files, unknown ids, incompatible artifacts"""

    exit_code = 2


class ContractError(TimelyRecError, ValueError):
    """A caller broke an operation's precondition"""

    exit_code = 3


class NumericError(TimelyRecError, ArithmeticError):
    """NaN or Inf showed up where only finite values are allowed"""

    exit_code = 4


class SamplingError(TimelyRecError, RuntimeError):
    """A negative sampler could not find an acceptable draw"""

    exit_code = 5
