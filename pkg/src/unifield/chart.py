"""The ordered coordinate system of the unified bundle for fixed (m, N)."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

from .errors import UnknownCoordinateError
from .symbolic import Var


def x_name(alpha: int) -> str:
    return f"x{alpha + 1}"


def y_name(a: int) -> str:
    return f"y{a + 1}"


def v_name(a: int, alpha: int) -> str:
    return f"v{a + 1}_{alpha + 1}"


def p_name(a: int, alpha: int) -> str:
    return f"p{a + 1}_{alpha + 1}"


@dataclass(frozen=True)
class Chart:
    """Natural coordinates (x, y, v, p-momenta, p) of W = J1E x_E M(pi).

    Indices are zero-based in code; names are one-based. Velocities and
    momenta are laid out A-major: ``v1_1, v1_2, ..., vN_m``.
    ``pA_alpha`` is the momentum conjugate to ``vA_alpha``.
    """

    m: int
    N: int
    coords: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        if self.m < 1 or self.N < 1:
            raise ValueError("chart needs m >= 1 and N >= 1")
        names = (
            [x_name(a) for a in range(self.m)]
            + [y_name(A) for A in range(self.N)]
            + [v_name(A, a) for A in range(self.N) for a in range(self.m)]
            + [p_name(A, a) for A in range(self.N) for a in range(self.m)]
            + ["p"]
        )
        object.__setattr__(self, "coords", tuple(names))

    def __contains__(self, name) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self.coords)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.coords)}

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownCoordinateError(name) from None

    def var(self, name: str) -> Var:
        self.index(name)
        return Var(name)

    # coordinate groups ----------------------------------------------------
    @property
    def xs(self) -> list[str]:
        return [x_name(a) for a in range(self.m)]

    @property
    def ys(self) -> list[str]:
        return [y_name(A) for A in range(self.N)]

    def v(self, A: int, alpha: int) -> str:
        return v_name(A, alpha)

    def pm(self, A: int, alpha: int) -> str:
        return p_name(A, alpha)

    @property
    def vs(self) -> list[str]:
        return [v_name(A, a) for A in range(self.N) for a in range(self.m)]

    @property
    def pms(self) -> list[str]:
        return [p_name(A, a) for A in range(self.N) for a in range(self.m)]

    @property
    def jet_coords(self) -> tuple[str, ...]:
        """Coordinates of J1E."""
        return tuple(self.xs + self.ys + self.vs)

    @property
    def w0_coords(self) -> tuple[str, ...]:
        """Coordinates of W0 (equivalently of W_r)."""
        return tuple(self.xs + self.ys + self.vs + self.pms)

    @property
    def base_coords(self) -> tuple[str, ...]:
        return tuple(self.xs)
