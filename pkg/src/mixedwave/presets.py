"""Potentials and sources used by the experiment presets."""

import numpy as np

from .csvio import read_csv
from .errors import InvalidArgument
from .grid import PotentialSpec, constant_potential
from .inverse import SourceSpec


def smooth_sine_potential() -> PotentialSpec:
    return PotentialSpec(lambda x: 1.0 + 0.5 * np.sin(2.0 * np.pi * x),
                         kind="smooth-formula", a_max=1.5, name="smooth-sine")


def step_potential() -> PotentialSpec:
    # 30 on [0, 1/2], 10 on (1/2, 1]
    return PotentialSpec(lambda x: np.where(np.asarray(x) <= 0.5, 30.0, 10.0),
                         kind="piecewise-constant", a_max=30.0, discontinuities=(0.5,),
                         name="discontinuous-step")


def source_f() -> SourceSpec:
    """20 (x - 1/2)^2 on (1/4, 3/4), zero elsewhere."""
    def f(x):
        x = np.asarray(x, dtype=float)
        return np.where((x > 0.25) & (x < 0.75), 20.0 * (x - 0.5) ** 2, 0.0)
    return SourceSpec(f, discontinuities=(0.25, 0.75), description="f-discontinuous")


def source_g() -> SourceSpec:
    """x (1 - x) [5 (x + 0.1)^2 + 1 / (x + 0.1)]."""
    def g(x):
        x = np.asarray(x, dtype=float)
        return x * (1.0 - x) * (5.0 * (x + 0.1) ** 2 + 1.0 / (x + 0.1))
    return SourceSpec(g, description="g-smooth")


def _table(path):
    header, rows = read_csv(path)
    data = np.array([[float(v) for v in r[:2]] for r in rows if r])
    if data.ndim != 2 or data.shape[0] < 2:
        raise InvalidArgument(f"table {path} needs at least two x,value rows")
    order = np.argsort(data[:, 0])
    return data[order, 0], data[order, 1]


def tabulated_potential(path) -> PotentialSpec:
    xs, vs = _table(path)
    if np.any(vs < 0):
        raise InvalidArgument(f"tabulated potential in {path} has negative values")
    return PotentialSpec(lambda x: np.interp(x, xs, vs), kind="tabulated",
                         a_max=float(vs.max()), name=f"table:{path}")


def tabulated_source(path) -> SourceSpec:
    xs, vs = _table(path)
    return SourceSpec(lambda x: np.interp(x, xs, vs), description=f"table:{path}")


POTENTIALS = ("smooth-sine", "discontinuous-step", "constant", "table")
SOURCES = ("f-discontinuous", "g-smooth", "table")


def potential_from_name(name: str, value: float = 0.0, table: str = None) -> PotentialSpec:
    if name == "smooth-sine":
        return smooth_sine_potential()
    if name == "discontinuous-step":
        return step_potential()
    if name == "constant":
        if value < 0:
            raise InvalidArgument("constant potential must be nonnegative")
        return constant_potential(value)
    if name == "table":
        if not table:
            raise InvalidArgument("potential 'table' needs potential_table")
        return tabulated_potential(table)
    raise InvalidArgument(f"unknown potential {name!r}; choose from {', '.join(POTENTIALS)}")


def source_from_name(name: str, table: str = None) -> SourceSpec:
    if name in ("f", "f-discontinuous"):
        return source_f()
    if name in ("g", "g-smooth"):
        return source_g()
    if name == "table":
        if not table:
            raise InvalidArgument("source 'table' needs source_table")
        return tabulated_source(table)
    raise InvalidArgument(f"unknown source {name!r}; choose from {', '.join(SOURCES)}")
