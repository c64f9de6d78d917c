"""Desk-scale parameter sets used by tests, examples and scenario defaults."""

from __future__ import annotations

from typing import List

from .abstraction import GroupDynamics

DT = 40.0  # seconds
T_LOCK = (150.0, 30.0)  # on, off lockout durations in seconds
ETA = (0.045, 0.036)
EPS = 0.5


def desk_groups(n1: int = 20, n2: int = 15) -> List[GroupDynamics]:
    """Two TCL groups with fast thermal response.

    The time constants are short enough that a lockout cycle spans about a
    dozen grid cells, which keeps the cycle search and the MILPs small.
    """
    g1 = GroupDynamics.from_physical(C=0.11, R=2.0, p_tr=3.25, T_a=26.0, dt=DT, t_lock=T_LOCK,
                                     deadband=(21.25, 23.75), domain=(19.0, 27.0), N=n1,
                                     zeta=2.5, gid=0)
    g2 = GroupDynamics.from_physical(C=0.11, R=2.5, p_tr=2.6, T_a=28.0, dt=DT, t_lock=T_LOCK,
                                     deadband=(23.25, 25.75), domain=(21.0, 29.0), N=n2,
                                     zeta=2.5, gid=1)
    return [g1, g2]
