"""Defaults for contilog.

Every knob lives here as an upper-case module constant. A user config file
(see ``config.example.py`` at the repository root) uses the same names and is
read by :meth:`Settings.from_file`; command-line flags win over both.
"""

import runpy
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Union

from .errors import InputError

# Numerical tolerance for float comparisons (rational evaluations are exact)
TOL = 1e-9

# Default cap C of the clamped connectives not(x) = C - x and add(x, y) = min(x + y, C)
CAP = 1

# Optimizer over Hilbert balls
SEED = 0
MULTISTART = 32
INNER_STARTS = 4
MAX_DESCENT_STEPS = 200
STATIONARITY = 1e-6

# Generator size caps
SYM_CAP = 8
GN_CAP = 6
AUT_CAP = 5000  # carrier points squared
MAX_POINTS = 1000000  # assignments per evaluation before refusing

# Ultraproduct approximation
ULTRA_WINDOW = 3
EXACT_LIMIT = 3  # G_n members above this index use closed forms where known

# Formula enumeration and validation
ENUM_LIMIT = 5000
METRIC_CHECK_LIMIT = 60

# Reports
REPORT_SCHEMA = "contilog-report/1"
THEME = "monokai"


@dataclass(frozen=True)
class Settings:
    tol: float = TOL
    cap: Any = CAP
    seed: int = SEED
    multistart: int = MULTISTART
    inner_starts: int = INNER_STARTS
    max_descent_steps: int = MAX_DESCENT_STEPS
    stationarity: float = STATIONARITY
    sym_cap: int = SYM_CAP
    gn_cap: int = GN_CAP
    aut_cap: int = AUT_CAP
    max_points: int = MAX_POINTS
    ultra_window: int = ULTRA_WINDOW
    exact_limit: int = EXACT_LIMIT
    enum_limit: int = ENUM_LIMIT
    metric_check_limit: int = METRIC_CHECK_LIMIT
    theme: str = THEME

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "Settings":
        """Read a Python config file; only upper-case names are considered."""
        try:
            namespace = runpy.run_path(str(path))
        except (OSError, SyntaxError) as exc:
            raise InputError(f"cannot read config file {path}: {exc}") from exc
        known = {f.name for f in fields(cls)}
        overrides: Dict[str, Any] = {}
        for name, value in namespace.items():
            if not name.isupper():
                continue
            key = name.lower()
            if key not in known:
                raise InputError(f"unknown setting {name} in {path}")
            overrides[key] = value
        return replace(cls(), **overrides)

    def with_overrides(self, **overrides: Any) -> "Settings":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


DEFAULTS = Settings()
