"""Per-foot contact phase sequences and swing-foot reference trajectories.

A schedule describes, for every contact frame of the robot, an alternating
sequence of stance and swing phases with absolute start/end times.  Stance
phases carry the foot placement on the ground; swing phases carry the
placement the foot left from, the touchdown target it flies to, and the apex
height of the cycloidal arc connecting them.

Times are absolute (seconds from schedule start).  A stance interval is
closed on the left and open on the right, ``[touchdown, liftoff)``, so a foot
is considered in contact at the exact touchdown instant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ScheduleError

_TOL = 1e-12


@dataclass(frozen=True)
class Segment:
    """One stance-then-swing unit of a foot's gait sequence.

    ``active`` seconds of stance followed by ``inactive`` seconds of swing
    ending at ``target`` (a ground point; ``None`` keeps the current
    placement).  Either duration may be zero, which removes that phase.
    The stance duration may be ``math.inf`` for a foot that never lifts.
    """

    active: float
    inactive: float = 0.0
    target: np.ndarray | None = None


@dataclass(frozen=True)
class Phase:
    start: float
    end: float
    in_contact: bool
    placement: np.ndarray                 # stance: foot point; swing: touchdown target
    lift_placement: np.ndarray | None = None
    apex: float = 0.0

    def contains(self, t: float) -> bool:
        return self.start - _TOL <= t < self.end - _TOL or (
            math.isinf(self.end) and t >= self.start - _TOL)


class ContactSchedule:
    """Compiled per-foot phase timelines with swing-reference evaluation."""

    def __init__(self, segments: dict[int, list[Segment]],
                 placements: dict[int, np.ndarray], apex: float = 0.05):
        self.apex = float(apex)
        self._phases: dict[int, list[Phase]] = {}
        for foot, segs in segments.items():
            self._phases[foot] = self._compile(segs, np.asarray(placements[foot], float))
        self.feet = tuple(sorted(self._phases))
        if not self.feet:
            raise ScheduleError("schedule has no contact frames")

    def _compile(self, segs, placement):
        phases: list[Phase] = []

        def push(ph):
            # merge contiguous same-kind phases: a removed (zero-duration)
            # phase must not fabricate a touchdown or liftoff event
            if phases and phases[-1].in_contact == ph.in_contact:
                prev = phases.pop()
                ph = Phase(prev.start, ph.end, ph.in_contact, ph.placement,
                           lift_placement=prev.lift_placement, apex=ph.apex)
            phases.append(ph)

        t = 0.0
        for seg in segs:
            if seg.active < -_TOL or seg.inactive < -_TOL:
                raise ScheduleError("negative phase duration")
            if seg.active > _TOL:
                push(Phase(t, t + seg.active, True, placement))
                t += seg.active
            if seg.inactive > _TOL:
                target = placement if seg.target is None else np.asarray(seg.target, float)
                push(Phase(t, t + seg.inactive, False, target,
                           lift_placement=placement, apex=self.apex))
                t += seg.inactive
                placement = target
        if not phases:
            raise ScheduleError("foot has an empty phase sequence")
        return phases

    # ----------------------------------------------------------- queries

    @property
    def end_time(self) -> float:
        return min(ph[-1].end for ph in self._phases.values())

    def covers(self, t: float) -> bool:
        return t <= self.end_time + _TOL

    def phase_at(self, foot: int, t: float) -> Phase:
        for ph in self._phases[foot]:
            if ph.contains(t):
                return ph
        raise ScheduleError(f"schedule for foot {foot} does not cover t={t:.6g}")

    def in_contact(self, foot: int, t: float) -> bool:
        return self.phase_at(foot, t).in_contact

    def active_set(self, t: float) -> tuple[int, ...]:
        return tuple(f for f in self.feet if self.in_contact(f, t))

    def swing_set(self, t: float) -> tuple[int, ...]:
        return tuple(f for f in self.feet if not self.in_contact(f, t))

    def placement(self, foot: int, t: float) -> np.ndarray:
        """Current placement target (stance point, or touchdown target in swing)."""
        return self.phase_at(foot, t).placement

    def touchdowns_in(self, t0: float, t1: float) -> list[tuple[float, int]]:
        """Contact-gain instants in the half-open window (t0, t1]."""
        events = []
        for foot, phases in self._phases.items():
            for ph in phases:
                if ph.in_contact and t0 + _TOL < ph.start <= t1 + _TOL:
                    events.append((ph.start, foot))
        events.sort()
        return events

    def liftoffs_in(self, t0: float, t1: float) -> list[tuple[float, int]]:
        events = []
        for foot, phases in self._phases.items():
            for ph in phases:
                if not ph.in_contact and t0 + _TOL < ph.start <= t1 + _TOL:
                    events.append((ph.start, foot))
        events.sort()
        return events

    def swing_reference(self, foot: int, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Cycloidal foot target (position, velocity) during a swing phase.

        The arc starts at the lift placement, peaks at ``apex`` above the
        ground midway through, and lands on the touchdown target with zero
        velocity in both components.
        """
        ph = self.phase_at(foot, t)
        if ph.in_contact:
            raise ScheduleError(f"foot {foot} is in stance at t={t:.6g}")
        return evaluate_swing(ph, t)

    def check_grid_alignment(self, dt: float, t_end: float | None = None):
        """Raise when a finite phase boundary cannot be snapped to the grid.

        Boundaries snap to the nearest multiple of ``dt``; an offset at (or
        numerically indistinguishable from) half a node period is ambiguous
        and rejected.
        """
        for foot, phases in self._phases.items():
            for ph in phases:
                for edge in (ph.start, ph.end):
                    if math.isinf(edge) or (t_end is not None and edge > t_end + _TOL):
                        continue
                    off = abs(edge - dt * round(edge / dt))
                    if off >= 0.5 * dt * (1.0 - 1e-9):
                        raise ScheduleError(
                            f"phase boundary {edge:.6g}s of foot {foot} is "
                            f"{off:.3g}s off the {dt:.6g}s node grid")


def evaluate_swing(ph: Phase, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Cycloid of a swing phase at time t, clamped to the phase interval."""
    T = ph.end - ph.start
    s = min(max((t - ph.start) / T, 0.0), 1.0)
    p0, p1 = ph.lift_placement, ph.placement
    two_pi = 2.0 * math.pi
    shape = s - math.sin(two_pi * s) / two_pi
    dshape = (1.0 - math.cos(two_pi * s)) / T
    pos = p0 + (p1 - p0) * shape
    vel = (p1 - p0) * dshape
    height = 0.5 * ph.apex * (1.0 - math.cos(two_pi * s))
    dheight = ph.apex * math.pi * math.sin(two_pi * s) / T
    return pos + np.array([0.0, height]), vel + np.array([0.0, dheight])


# ------------------------------------------------------------ gait builders

def stand(feet, placements) -> ContactSchedule:
    """All feet in permanent stance."""
    segs = {f: [Segment(active=math.inf)] for f in feet}
    return ContactSchedule(segs, dict(placements))


def jump(feet, placements, stance: float, flight: float, n_jumps: int = 1,
         settle: float = math.inf, apex: float = 0.08) -> ContactSchedule:
    """All feet leave and regain the ground together, ``n_jumps`` times."""
    if flight <= 0 or stance <= 0:
        raise ScheduleError("jump phases need positive durations")
    segs = {}
    for f in feet:
        run = [Segment(active=stance, inactive=flight) for _ in range(n_jumps)]
        run.append(Segment(active=settle))
        segs[f] = run
    return ContactSchedule(segs, dict(placements), apex=apex)


def trot(pair_a, pair_b, placements, lead_in: float, swing: float,
         double_support: float, stride: float, cycles: int,
         settle: float = math.inf, apex: float = 0.05) -> ContactSchedule:
    """Two foot groups alternate swings, each advancing ``stride`` per cycle.

    Timing per cycle: group A swings for ``swing`` while B stands, then both
    stand for ``double_support``, then B swings, then both stand again.
    """
    if swing <= 0:
        raise ScheduleError("swing duration must be positive")
    cycle = 2 * (swing + double_support)
    segs: dict[int, list[Segment]] = {}
    step = np.array([stride, 0.0])
    for group, offset in ((pair_a, 0.0), (pair_b, swing + double_support)):
        for f in group:
            p = np.asarray(placements[f], float)
            run = [Segment(active=lead_in + offset, inactive=swing, target=p + step)]
            for j in range(1, cycles):
                run.append(Segment(active=cycle - swing, inactive=swing,
                                   target=p + (j + 1) * step))
            tail = settle if math.isinf(settle) else settle + (cycle - swing - offset)
            run.append(Segment(active=tail))
            segs[f] = run
    return ContactSchedule(segs, dict(placements), apex=apex)
