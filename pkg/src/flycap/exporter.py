import csv
import json
import os
import sys
from dataclasses import dataclass, replace
from typing import Any, List, Optional

from flycap.base import (
    BaseExporter,
    BaseExporterConfig,
    Cell,
    Report,
    StudyResult,
    Table,
)
from flycap.errors import InvalidParams, OutputError
from flycap.registry import register_handler

MANIFEST_SUFFIX = ".manifest.json"
GNUPLOT_SUFFIX = ".gp"
# columns that are flags rather than plottable series
FLAG_COLUMNS = ("conjecture_ok",)
AXIS_LABELS = {"t_s": "t [s]", "T_s": "T [s]", "tau": "t / T"}


def format_cell(value: Cell) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def dump_json(document: Any) -> str:
    return json.dumps(document, indent=2, sort_keys=True, allow_nan=False) + "\n"


def gnuplot_script(data_path: str, table: Table, log_x: bool = False) -> str:
    x_name = table.columns[0]
    lines = [
        'set datafile separator ","',
        "set key autotitle columnhead",
        f'set xlabel "{AXIS_LABELS.get(x_name, x_name)}"',
    ]
    if log_x:
        lines.append("set logscale x")
    series = []
    for index, name in enumerate(table.columns[1:], start=2):
        if name in FLAG_COLUMNS:
            continue
        source = f'"{data_path}"' if not series else '""'
        series.append(f"{source} using 1:{index} with lines title \"{name}\"")
    lines.append("plot " + ", \\\n     ".join(series))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FileExporterConfig(BaseExporterConfig):
    # None sends reports to stdout; tables always need a path
    output: Optional[str] = None
    gnuplot: bool = False


@register_handler(FileExporterConfig)
class FileExporter(BaseExporter):
    def __init__(self, config: FileExporterConfig):
        super(FileExporter, self).__init__(config)
        self.config: FileExporterConfig = config

    def make_output_dirs(self, path: str) -> None:
        parent_dir = os.path.dirname(path)
        if parent_dir:
            os.makedirs(parent_dir, exist_ok=True)

    def write_text(self, path: str, text: str) -> None:
        try:
            self.make_output_dirs(path)
            with open(path, "w", newline="\n") as fp:
                fp.write(text)
        except OSError as exc:
            raise OutputError(f"Cannot write {path}: {exc.strerror or exc}") from exc

    def write_csv(self, path: str, table: Table) -> None:
        try:
            self.make_output_dirs(path)
            with open(path, "w", newline="") as fp:
                writer = csv.writer(fp, lineterminator="\n")
                writer.writerow(table.columns)
                writer.writerows(
                    [format_cell(value) for value in row] for row in table.rows
                )
        except OSError as exc:
            raise OutputError(f"Cannot write {path}: {exc.strerror or exc}") from exc

    def summary_lines(self, result: StudyResult) -> List[str]:
        lines = [f"{name} = {value}" for name, value in result.summary.items()]
        lines += [f"warning: {flag}" for flag in result.flags]
        return lines

    def export_table(self, result: StudyResult) -> None:
        assert result.table is not None and result.manifest is not None
        output = self.config.output
        if not output:
            raise InvalidParams(f"--output is required for {result.command}")

        self.logger.info(f"Export {len(result.table.rows)} rows to path='{output}'")
        self.write_csv(output, result.table)
        paths = [output, output + MANIFEST_SUFFIX]
        if self.config.gnuplot:
            log_x = (result.config or {}).get("scale") == "log"
            self.write_text(
                output + GNUPLOT_SUFFIX,
                gnuplot_script(os.path.basename(output), result.table, log_x),
            )
            paths.append(output + GNUPLOT_SUFFIX)

        result.manifest = replace(result.manifest, output_paths=tuple(paths))
        self.write_text(output + MANIFEST_SUFFIX, dump_json(result.manifest.to_dict()))
        for line in self.summary_lines(result):
            print(line, file=sys.stdout)

    def export_report(self, result: StudyResult) -> None:
        assert result.report is not None and result.manifest is not None
        output = self.config.output
        if output:
            result.manifest = replace(result.manifest, output_paths=(output,))
        document: Report = dict(result.report)
        document["summary"] = result.summary
        document["flags"] = result.flags
        document["manifest"] = result.manifest.to_dict()

        text = dump_json(document)
        if output:
            self.logger.info(f"Export {result.command} report to path='{output}'")
            self.write_text(output, text)
            for line in self.summary_lines(result):
                self.logger.info(line)
        else:
            sys.stdout.write(text)

    async def async_process(self, result: StudyResult) -> None:
        if result.table is not None:
            self.export_table(result)
        elif result.report is not None:
            self.export_report(result)
        else:
            self.logger.warning(f"Nothing to export for {result.command}")