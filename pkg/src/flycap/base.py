""" Defines the base classes for the study pipeline.
The main abstractions are described below.

StudyResult (dataclass)
-----------
- Data format type used to carry the outcome of one command.
- Holds a JSON-compatible report and/or a numeric table, the headline numbers
  and any monitored flags. Transfers data across components.

Study (class)
-----
- Input: StudyConfig (circuit parameters plus command options)
- Output: StudyResult
- Builds the switched system and runs the analysis or the integrator.

Formatter (class)
---------
- Input: StudyResult (from Study), FormatterConfig
- Output: StudyResult
- Attaches the run manifest and renders human-readable summary lines.

Exporter (class)
--------
- Input: StudyResult (from Formatter), ExporterConfig
- Output: CSV / JSON / gnuplot files or stdout
- Writes everything the run produced.

Runner
--------
- Input: RunnerConfig
- Builds the three handlers from their configs and chains them.

Study --produces--> StudyResult --consumed_by--> Formatter --produces-->
    StudyResult --consumed_by--> Exporter
"""

from abc import abstractmethod
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, AsyncIterator, Dict, List, Optional, Sequence, Tuple

from flycap.model import CircuitParams
from flycap.registry import IConfig, IHandler, register_handler

Report = Dict[str, Any]
Cell = float | int | bool


class Command(StrEnum):
    ANALYZE = "analyze"
    SIMULATE = "simulate"
    SWEEP = "sweep"
    PROFILES = "profiles"


class Scale(StrEnum):
    LINEAR = "linear"
    LOG = "log"


@dataclass(frozen=True)
class Table:
    columns: Tuple[str, ...]
    rows: Sequence[Tuple[Cell, ...]]

    def __post_init__(self) -> None:
        width = len(self.columns)
        for row in self.rows:
            assert len(row) == width, f"row {row} does not match {self.columns}"

    def column(self, name: str) -> List[Cell]:
        index = self.columns.index(name)
        return [row[index] for row in self.rows]


@dataclass(frozen=True)
class RunManifest:
    command: Command
    params: CircuitParams
    tool_version: str
    config: Optional[Dict[str, Any]] = None
    output_paths: Tuple[str, ...] = ()
    # None in deterministic mode
    timestamp: Optional[str] = None

    def to_dict(self) -> Report:
        manifest: Report = {
            "command": str(self.command),
            "params": self.params.as_dict(),
            "config": self.config,
            "output_paths": list(self.output_paths),
            "tool_version": self.tool_version,
        }
        if self.timestamp is not None:
            manifest["timestamp"] = self.timestamp
        return manifest


@dataclass(frozen=False)
class StudyResult:
    command: Command
    params: CircuitParams
    report: Optional[Report] = None
    table: Optional[Table] = None
    config: Optional[Dict[str, Any]] = None
    # numbers rendered with 4 decimals in summaries
    headlines: Dict[str, float] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)
    summary: Dict[str, str] = field(default_factory=dict)
    manifest: Optional[RunManifest] = None


@dataclass(frozen=True)
class BaseStudyConfig(IConfig):
    params: CircuitParams


@register_handler(BaseStudyConfig)
class BaseStudy(IHandler):
    @abstractmethod
    def async_iterate(self) -> AsyncIterator[StudyResult]:
        ...


@dataclass(frozen=True)
class BaseFormatterConfig(IConfig):
    pass


@register_handler(BaseFormatterConfig)
class BaseFormatter(IHandler):
    @abstractmethod
    async def async_process(self, result: StudyResult) -> StudyResult:
        ...


@dataclass(frozen=True)
class BaseExporterConfig(IConfig):
    pass


@register_handler(BaseExporterConfig)
class BaseExporter(IHandler):
    @abstractmethod
    async def async_process(self, result: StudyResult) -> None:
        ...
