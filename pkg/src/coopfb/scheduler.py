"""Access-point side user selection: one user per beam by reported CQI."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .qbc import CsiReport


@dataclass(frozen=True)
class ScheduleResult:
    """Beam-to-user assignment; ``assignment[beam]`` is None when nobody
    reported that beam."""

    assignment: tuple[Optional[int], ...]
    mode: str = "conventional"

    @property
    def assigned_beams(self) -> list[int]:
        return [beam for beam, user in enumerate(self.assignment) if user is not None]


def schedule_users(reports: Iterable[CsiReport], num_beams: int, mode: str = "conventional") -> ScheduleResult:
    """Per-beam argmax of reported CQI; ties go to the lowest user index.

    Each user reports exactly one beam, so no user can win two beams.
    """
    best: list[Optional[CsiReport]] = [None] * num_beams
    for report in sorted(reports, key=lambda r: r.user):
        if not 0 <= report.beam < num_beams:
            raise ValueError(f"report for user {report.user} names beam {report.beam} outside 0..{num_beams - 1}")
        incumbent = best[report.beam]
        if incumbent is None or report.cqi > incumbent.cqi:
            best[report.beam] = report
    assignment = tuple(r.user if r is not None else None for r in best)
    return ScheduleResult(assignment=assignment, mode=mode)
