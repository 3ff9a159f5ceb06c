from dataclasses import dataclass
from datetime import datetime, timezone
from typing import List

from flycap import __version__
from flycap.base import (
    BaseFormatter,
    BaseFormatterConfig,
    RunManifest,
    StudyResult,
    Table,
)
from flycap.registry import register_handler
from flycap.utils import format_headline

CONJECTURE_COLUMN = "conjecture_ok"


def conjecture_violations(table: Table) -> List[str]:
    if CONJECTURE_COLUMN not in table.columns:
        return []
    periods = table.column(table.columns[0])
    return [
        f"<i> exceeds Vdc/2R at T={T!r}"
        for T, ok in zip(periods, table.column(CONJECTURE_COLUMN))
        if not ok
    ]


@dataclass(frozen=True)
class RunFormatterConfig(BaseFormatterConfig):
    # drop the timestamp so repeated runs are byte-identical
    deterministic: bool = False


@register_handler(RunFormatterConfig)
class RunFormatter(BaseFormatter):
    def __init__(self, config: RunFormatterConfig):
        super(RunFormatter, self).__init__(config)
        self.config: RunFormatterConfig = config

    def timestamp(self) -> str | None:
        if self.config.deterministic:
            return None
        return datetime.now(timezone.utc).isoformat(timespec="seconds")

    async def async_process(self, result: StudyResult) -> StudyResult:
        flags = list(result.flags)
        if result.table is not None:
            flags += conjecture_violations(result.table)
        for flag in flags:
            self.logger.warning(flag)

        result.flags = flags
        result.summary = {
            name: format_headline(value) for name, value in result.headlines.items()
        }
        result.manifest = RunManifest(
            command=result.command,
            params=result.params,
            tool_version=__version__,
            config=result.config,
            timestamp=self.timestamp(),
        )
        return result
