"""CSV schemas written by the command-line harness.

Every file starts with one ``# generated <timestamp>`` comment line followed
by a header row. Floats are written with ``repr`` (shortest round-trip form)
and vectors as space-separated floats, so each row parses back into the
record that produced it.
"""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import astuple, dataclass, fields
from typing import Iterable, TypeVar

R = TypeVar("R")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return " ".join(repr(float(x)) for x in v)
    return str(v)


def _parse(text: str, kind):
    if kind is bool:
        return text == "1"
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind == "opt_float":
        return None if text == "" else float(text)
    if kind == "vector":
        return tuple(float(x) for x in text.split()) if text else ()
    return text


class Record:
    """Mixin: ``KINDS`` maps field names to parse kinds (default ``str``)."""

    KINDS: dict = {}

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_row(self) -> list[str]:
        return [_fmt(v) for v in astuple(self)]

    @classmethod
    def from_row(cls, row: dict):
        return cls(**{name: _parse(row[name], cls.KINDS.get(name, str)) for name in cls.header()})


@dataclass(frozen=True)
class ConvergeRow(Record):
    task: str
    method: str
    seed: int
    iteration: int  # -1 marks a failed run
    cost: float
    wall_time_ms: float | None = None

    KINDS = {"seed": int, "iteration": int, "cost": float, "wall_time_ms": "opt_float"}


@dataclass(frozen=True)
class ConvergeSummaryRow(Record):
    task: str
    method: str
    seed: int
    final_cost: float
    ddp_final: float  # converged DDP cost (nan without a reference)
    ddp_at_u: float  # DDP cost after min(U, accepted iterates) iterations
    normalized: float  # final_cost / ddp_final

    KINDS = {"seed": int, "final_cost": float, "ddp_final": float, "ddp_at_u": float, "normalized": float}


@dataclass(frozen=True)
class NormalizedRow(Record):
    task: str
    method: str
    iteration: int
    mean_cost: float
    normalized: float  # mean_cost / mean converged DDP cost

    KINDS = {"iteration": int, "mean_cost": float, "normalized": float}


@dataclass(frozen=True)
class MpcStepRow(Record):
    task: str
    method: str
    seed: int
    step: int
    time: float
    running_cost: float
    completions: int
    flagged: bool
    target: tuple
    state: tuple
    control: tuple

    KINDS = {"seed": int, "step": int, "time": float, "running_cost": float, "completions": int,
             "flagged": bool, "target": "vector", "state": "vector", "control": "vector"}


@dataclass(frozen=True)
class MpcSummaryRow(Record):
    task: str
    method: str
    seed: str  # a seed, or "all" for the aggregate over seeds
    completions: int
    mean_time_to_completion: float
    mean_accumulated_cost: float
    flagged_steps: int

    KINDS = {"completions": int, "mean_time_to_completion": float, "mean_accumulated_cost": float,
             "flagged_steps": int}


@dataclass(frozen=True)
class SweepRow(Record):
    task: str
    method: str
    gamma: float
    K: int
    lambda_: float
    U: int
    seed: int
    final_cost: float
    iterations_to_threshold: int  # -1 if the threshold was never reached

    KINDS = {"gamma": float, "K": int, "lambda_": float, "U": int, "seed": int,
             "final_cost": float, "iterations_to_threshold": int}


def write_csv(path, record_type, rows: Iterable[Record]) -> None:
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# generated {stamp}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(record_type.header())
        for r in rows:
            w.writerow(r.to_row())


def read_csv(path, record_type: type[R]) -> list[R]:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return [record_type.from_row(row) for row in csv.DictReader(lines)]
