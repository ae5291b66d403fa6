"""Plain-text rendering shared by the check reports."""

from __future__ import annotations

import dataclasses

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    if isinstance(v, np.ndarray):
        if v.size > 8:
            return f"array{v.shape}"
        return np.array2string(v, precision=6)
    return str(v)


class Report:
    """Mixin for dataclass reports exposing ``passed``."""

    passed: bool

    def summary(self) -> str:
        name = type(self).__name__
        lines = [f"{name}: {'PASS' if self.passed else 'FAIL'}"]
        for f in dataclasses.fields(self):
            if f.name.startswith("_") or not f.repr:
                continue
            lines.append(f"  {f.name} = {_fmt(getattr(self, f.name))}")
        return "\n".join(lines)

    def __str__(self) -> str:
        return self.summary()
