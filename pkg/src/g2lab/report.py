"""Structured pass/fail records shared by every verification suite."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


@dataclass
class CheckResult:
    name: str
    trials: int
    max_residual: float
    tolerance: float
    expect_fail: bool = False

    @property
    def passed(self):
        ok = bool(self.max_residual <= self.tolerance)
        return not ok if self.expect_fail else ok

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        note = " (expected to exceed tolerance)" if self.expect_fail else ""
        return (
            f"{self.name}  trials={self.trials}  max_residual={self.max_residual:.3e}  "
            f"tol={self.tolerance:.1e}  {status}{note}"
        )


@dataclass
class Report:
    title: str
    results: list = field(default_factory=list)

    def add(self, name, trials, max_residual, tolerance, expect_fail=False):
        res = CheckResult(name, int(trials), float(max_residual), float(tolerance), expect_fail)
        self.results.append(res)
        return res

    def extend(self, other):
        self.results.extend(other.results)
        return self

    @property
    def all_passed(self):
        return all(r.passed for r in self.results)

    def __getitem__(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def names(self):
        return [r.name for r in self.results]

    def to_text(self):
        return "\n".join([f"# {self.title}"] + [r.line() for r in self.results]) + "\n"


def write_csv(path, header, rows, timestamp=None):
    """Write rows under ``header``; an optional first comment line carries a timestamp."""
    buf = io.StringIO()
    if timestamp is not None:
        buf.write(f"# generated {timestamp}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x
