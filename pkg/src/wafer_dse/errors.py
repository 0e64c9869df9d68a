"""Shared exception taxonomy.

Every error raised across the package maps onto one of four CLI exit codes:

* 1 -- a design violates a hard constraint (area, power, yield, stress)
* 2 -- bad input: malformed config files, unknown benchmark names,
       incomplete component databases
* 3 -- a workload that cannot be mapped onto the given design at all
* 4 -- internal invariant failures (simulator deadlock, numerical collapse)
"""

from __future__ import annotations


class WaferDseError(Exception):
    """Base class for all package errors."""

    exit_code = 4


class ConstraintViolation(WaferDseError):
    """A design point fails one or more hard feasibility checks."""

    exit_code = 1

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"design violates {len(self.violations)} constraint(s): {lines}")


class InputError(WaferDseError):
    """Malformed or missing user input (files, config values, names)."""

    exit_code = 2


class EmptySpace(InputError):
    """A sampling grid contains no valid candidate values."""


class IncompleteDb(InputError):
    """A component lookup has no record in the cost database.

    Distinct from a constraint violation: the design may be fine, the
    database simply cannot price it.
    """

    def __init__(self, kind: str, config: str):
        self.kind = kind
        self.config = config
        super().__init__(f"no component record for kind={kind!r} config={config!r}")


class UnmappableWorkload(WaferDseError):
    """No parallelization strategy maps the workload onto the design."""

    exit_code = 3


class TileTooLarge(UnmappableWorkload):
    """A single operator tile exceeds per-core SRAM even at finest split."""


class InternalError(WaferDseError):
    """Invariant breakage that the user cannot fix (bug territory)."""

    exit_code = 4


class SimDeadlock(InternalError):
    """Cycle simulator made no progress while flits were still pending."""

    def __init__(self, cycle: int, pending: int, detail: str = ""):
        self.cycle = cycle
        self.pending = pending
        msg = f"no flit progress by cycle {cycle} with {pending} flits pending"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
