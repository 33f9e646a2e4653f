"""Tab-separated logs of displayed arms, rewards and contexts.

    #fields	t	arm	reward	x1	x2	...	xd
    1	arm003	0.0	0.12	-0.5	...

Other lines starting with ``#`` are comments.  Timestamps are non-negative
integers that never decrease.
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Union

import torch

from driftbandit.errors import EventLogFormatError
from driftbandit.modeling.bandit import ArmId
from driftbandit.utils import DTYPE

logger = logging.getLogger(__name__)

FIELDS_MARKER = "#fields"
LEADING_FIELDS = ("t", "arm", "reward")


@dataclass(frozen=True, eq=False)
class LoggedEvent:
    t: int
    displayed: ArmId
    reward: float
    context: torch.Tensor

    @property
    def d(self) -> int:
        return self.context.shape[0]


def _parse_header(line_no: int, line: str) -> int:
    names = line.rstrip("\n").split("\t")
    if names[0] != FIELDS_MARKER or tuple(names[1:4]) != LEADING_FIELDS:
        raise EventLogFormatError(line_no, f"expected header '{FIELDS_MARKER}\\tt\\tarm\\treward\\tx1..xd', got {line.strip()!r}")
    d = len(names) - 4
    if d < 1:
        raise EventLogFormatError(line_no, "header declares no context columns")
    return d


def _parse_float(line_no: int, column: str, value: str) -> float:
    try:
        parsed = float(value)
    except ValueError:
        raise EventLogFormatError(line_no, f"non-numeric {column} value {value!r}") from None
    if not math.isfinite(parsed):
        raise EventLogFormatError(line_no, f"non-finite {column} value {value!r}")
    return parsed


def parse_event_log(path: Union[str, Path]) -> List[LoggedEvent]:
    """Read a log file; every malformed line raises an error naming its line number."""
    events: List[LoggedEvent] = []
    d: Optional[int] = None
    last_t = None
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            if line.startswith(FIELDS_MARKER) and d is None:
                d = _parse_header(line_no, line)
                continue
            if line.startswith("#"):
                continue
            if d is None:
                raise EventLogFormatError(line_no, f"data line before the '{FIELDS_MARKER}' header")

            columns = line.rstrip("\n").split("\t")
            if len(columns) != d + 3:
                raise EventLogFormatError(line_no, f"expected {d + 3} columns, got {len(columns)}")
            t_value, arm, reward_value, *context_values = columns
            try:
                t = int(t_value)
            except ValueError:
                raise EventLogFormatError(line_no, f"non-integer timestamp {t_value!r}") from None
            if t < 0:
                raise EventLogFormatError(line_no, f"negative timestamp {t}")
            if last_t is not None and t < last_t:
                raise EventLogFormatError(line_no, f"timestamp {t} decreases after {last_t}")
            if not arm:
                raise EventLogFormatError(line_no, "empty arm id")
            reward = _parse_float(line_no, "reward", reward_value)
            context = [_parse_float(line_no, f"x{i + 1}", value) for i, value in enumerate(context_values)]

            events.append(LoggedEvent(t, arm, reward, torch.tensor(context, dtype=DTYPE)))
            last_t = t

    if d is None:
        raise EventLogFormatError(0, f"missing '{FIELDS_MARKER}' header")
    logger.info("Parsed %d events (d=%d) from %s", len(events), d, path)
    return events


def format_event(event: LoggedEvent) -> str:
    values = [str(int(event.t)), event.displayed, repr(float(event.reward))]
    values.extend(repr(float(value)) for value in event.context.tolist())
    return "\t".join(values)


def write_event_log(events: Iterable[LoggedEvent], path: Union[str, Path], d: Optional[int] = None) -> None:
    events = list(events)
    if d is None:
        if not events:
            raise ValueError("Cannot infer the context dimension of an empty log; pass d")
        d = events[0].d
    header = "\t".join([FIELDS_MARKER, *LEADING_FIELDS, *(f"x{i + 1}" for i in range(d))])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        for event in events:
            if event.d != d:
                raise ValueError(f"Event at t={event.t} has context dimension {event.d}, expected {d}")
            f.write(format_event(event) + "\n")
