#!/usr/bin/env python3

import asyncio
from dataclasses import dataclass
from typing import List

from flycap.base import (
    BaseExporter,
    BaseExporterConfig,
    BaseFormatter,
    BaseFormatterConfig,
    BaseStudy,
    BaseStudyConfig,
    StudyResult,
)
from flycap.registry import Factory
from flycap.utils import get_logger


@dataclass(frozen=True)
class RunnerConfig:
    study_config: BaseStudyConfig
    formatter_config: BaseFormatterConfig
    exporter_config: BaseExporterConfig


class Runner(object):
    def __init__(self, config: RunnerConfig):
        self.logger = get_logger(__package__)

        self.study = Factory.build_handler(config.study_config)
        self.formatter = Factory.build_handler(config.formatter_config)
        self.exporter = Factory.build_handler(config.exporter_config)

    async def async_run(self) -> List[StudyResult]:
        assert isinstance(self.study, BaseStudy)
        assert isinstance(self.formatter, BaseFormatter)
        assert isinstance(self.exporter, BaseExporter)

        results = []
        self.logger.info(f"Processing {type(self.study).__qualname__}.")
        async for result in self.study.async_iterate():
            self.logger.info(f"Got 1 result from study, command = {result.command}")

            self.logger.info(f"Processing {type(self.formatter).__qualname__}.")
            formatted = await self.formatter.async_process(result)

            self.logger.info(f"Processing {type(self.exporter).__qualname__}.")
            await self.exporter.async_process(formatted)
            results.append(formatted)
        self.logger.info("All results exported.")
        return results

    def run(self) -> List[StudyResult]:
        return asyncio.run(self.async_run())
