"""Metrics traces written as CSV while training runs."""

import csv
from pathlib import Path
from typing import Dict, List, Optional

METRICS_HEADER = ["step", "actor_loss", "critic_loss", "mean_weight", "accept_frac", "eval_return_mean", "eval_return_std"]
EVAL_HEADER = ["step", "mode", "return_mean", "return_std"]


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


class MetricsTrace:
    """
    Appends rows to a CSV file, flushing after each row so a crashed run
    still leaves a readable trace. Rows are also kept in memory.
    """

    def __init__(self, path, header: List[str]):
        self.path = Path(path)
        self.header = header
        self.rows: List[Dict] = []
        self._file = open(self.path, "w", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(header)
        self._file.flush()

    def write(self, row: Dict) -> None:
        self.rows.append(dict(row))
        self._writer.writerow([format_value(row.get(name)) for name in self.header])
        self._file.flush()

    def summary(self) -> str:
        return f"{self.path.name}: {len(self.rows)} rows"

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path) -> List[Dict[str, Optional[float]]]:
    """Rows of a metrics CSV with numeric fields parsed; empty cells become None."""
    rows = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            parsed = {}
            for key, value in row.items():
                if value == "":
                    parsed[key] = None
                elif key == "mode":
                    parsed[key] = value
                elif key == "step":
                    parsed[key] = int(value)
                else:
                    parsed[key] = float(value)
            rows.append(parsed)
    return rows
