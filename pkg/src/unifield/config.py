"""Problem configuration files.

INI syntax with sections ``[problem]``, ``[domain]``, ``[solver]``,
``[output]`` and ``[check]``. Expressions are double-quoted strings::

    [problem]
    m = 2
    N = 1
    lagrangian = "sqrt(1 + v1_1^2 + v1_2^2)"
    hamiltonian = "-sqrt(1 - p1_1^2 - p1_2^2)"

    [domain]
    x1 = -0.5, 0.5
    x2 = -0.5, 0.5
    n1 = 33
    n2 = 33
    boundary = "ln(cos(x1)) - ln(cos(x2))"

Output paths are resolved relative to the config file.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass
from pathlib import Path

from . import symbolic as sym
from .bundles import LagrangianProblem
from .chart import Chart
from .errors import ConfigError, ParseError
from .parser import parse
from .solver import Grid, SolverOptions


@dataclass(frozen=True, eq=False)
class CheckOptions:
    seed: int = 0
    points: int = 100
    x_box: float = 1.0
    y_box: float = 1.0
    v_box: float = 2.0
    p_box: float = 0.7


@dataclass(frozen=True, eq=False)
class ProblemConfig:
    path: Path | None
    chart: Chart
    lagrangian: sym.Expr
    lagrangian_text: str
    hamiltonian: sym.Expr | None
    domain: tuple[float, float, float, float] | None
    sizes: tuple[int, int] | None
    boundary: sym.Expr | None
    exact: sym.Expr | None
    solver: SolverOptions
    section_path: Path | None
    report_path: Path | None
    check: CheckOptions

    @property
    def problem(self) -> LagrangianProblem:
        return LagrangianProblem(self.chart, self.lagrangian, self.hamiltonian)

    def grid(self) -> Grid:
        if self.domain is None or self.sizes is None or self.boundary is None:
            raise ConfigError("[domain] needs x1, x2, n1, n2 and boundary to solve")
        try:
            return Grid(*self.domain, *self.sizes)
        except ValueError as exc:
            raise ConfigError(f"[domain]: {exc}") from None


def _locate(raw: str, section: str, key: str) -> tuple[int, int]:
    """(line, column of the first character of the value) of `key` inside `section`."""
    current = None
    for lineno, line in enumerate(raw.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip().lower()
            continue
        if current != section:
            continue
        m = re.match(r"\s*([^=:\s]+)\s*[=:]\s*", line)
        if m and m.group(1).lower() == key.lower():
            return lineno, m.end() + 1
    return 0, 0


class _Reader:
    def __init__(self, raw: str, source: str):
        self.raw = raw
        self.source = source
        self.cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            self.cp.read_string(raw, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None

    def has(self, section, key) -> bool:
        return self.cp.has_option(section, key)

    def get(self, section, key, default=None, required=False) -> str | None:
        if not self.has(section, key):
            if required:
                raise ConfigError(f"{self.source}: missing [{section}] {key}")
            return default
        return self.cp.get(section, key).strip()

    def number(self, section, key, kind, default=None, required=False):
        text = self.get(section, key, None, required)
        if text is None:
            return default
        try:
            return kind(text)
        except ValueError:
            line, _ = _locate(self.raw, section, key)
            raise ConfigError(f"{self.source}:{line}: [{section}] {key} must be {kind.__name__}, got {text!r}") from None

    def interval(self, section, key):
        text = self.get(section, key)
        if text is None:
            return None
        try:
            lo, hi = (float(t) for t in text.split(","))
        except ValueError:
            line, _ = _locate(self.raw, section, key)
            raise ConfigError(f"{self.source}:{line}: [{section}] {key} must be 'low, high'") from None
        return lo, hi

    def expr(self, section, key, coords, required=False) -> tuple[sym.Expr | None, str | None]:
        text = self.get(section, key, None, required)
        if text is None:
            return None, None
        line, col = _locate(self.raw, section, key)
        if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
            text = text[1:-1]
            col += 1
        try:
            return parse(text, coords, line=line, column=col), text
        except ParseError as exc:
            raise ParseError(f"{self.source}: [{section}] {key}: {exc.message}", exc.line, exc.column, exc.token) from None


def load_config(path) -> ProblemConfig:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(raw, str(path), path.parent)


def parse_config(raw: str, source: str = "<config>", base_dir: Path | None = None) -> ProblemConfig:
    r = _Reader(raw, source)
    m = r.number("problem", "m", int, required=True)
    N = r.number("problem", "N", int, required=True)
    try:
        chart = Chart(m, N)
    except ValueError as exc:
        raise ConfigError(f"{source}: [problem] {exc}") from None
    L, L_text = r.expr("problem", "lagrangian", chart.jet_coords, required=True)
    H, _ = r.expr("problem", "hamiltonian", chart.xs + chart.ys + chart.pms)

    x1 = r.interval("domain", "x1")
    x2 = r.interval("domain", "x2")
    domain = (x1[0], x1[1], x2[0], x2[1]) if x1 and x2 else None
    n1 = r.number("domain", "n1", int)
    n2 = r.number("domain", "n2", int)
    sizes = (n1, n2) if n1 is not None and n2 is not None else None
    if sizes is not None and min(sizes) < 3:
        line, _ = _locate(raw, "domain", "n1" if n1 < 3 else "n2")
        raise ConfigError(f"{source}:{line}: grid sizes must be at least 3, got {n1}x{n2}")
    base = chart.xs
    boundary, _ = r.expr("domain", "boundary", base)
    exact, _ = r.expr("domain", "exact", base)

    solver = SolverOptions(r.number("solver", "tol", float, 1e-10), r.number("solver", "max_iter", int, 50))
    base_dir = base_dir or Path(".")
    out = lambda key: (base_dir / r.get("output", key)) if r.has("output", key) else None
    check = CheckOptions(
        seed=r.number("check", "seed", int, 0),
        points=r.number("check", "points", int, 100),
        x_box=r.number("check", "x_box", float, 1.0),
        y_box=r.number("check", "y_box", float, 1.0),
        v_box=r.number("check", "v_box", float, 2.0),
        p_box=r.number("check", "p_box", float, 0.7),
    )
    return ProblemConfig(
        path=Path(source) if base_dir else None,
        chart=chart,
        lagrangian=L,
        lagrangian_text=L_text,
        hamiltonian=H,
        domain=domain,
        sizes=sizes,
        boundary=boundary,
        exact=exact,
        solver=solver,
        section_path=out("section"),
        report_path=out("report"),
        check=check,
    )
