from enum import IntEnum


class Action(IntEnum):
    """Controller command.  The integer codes are used in policy tables and grids."""

    IDLE = 0
    RETRANSMIT = 1
    SAMPLE = 2


ACTIONS = (Action.IDLE, Action.RETRANSMIT, Action.SAMPLE)


class ContractViolation(ValueError):
    """An operation was called with inputs its contract rules out."""
