"""Assembly of the linear systems solved by the estimator.

Observation rows express one measurement as a linear functional of the
parameter vector: the level at the cohort's boundary entry point, plus unit
coefficients on every trend cell the cohort has fully crossed, plus the
within-cell year fraction on the current cell's trend.  Penalty rows are
(+1, -2, +1) second-difference stencils: on the level surface they are
rewritten onto the parameter vector through the same cohort-path expansion;
on the trend surface they act on trend parameters directly.

Penalty rows are stored unscaled; the regularization weights live in the
solver's weight structure so the same rows serve every lambda probe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FrameTooSmall, InvalidClusterSize, OutOfFrame
from .grid import CellIndex, Frame, ParameterLayout, cohort_path
from .ingest import AggregatedCell, Measurement


@dataclass(frozen=True)
class SparseRow:
    """One row of a design or penalty matrix, with strictly increasing indices."""

    indices: tuple[int, ...]
    values: tuple[float, ...]
    rhs: float = 0.0

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values length mismatch")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.indices, self.values))

    def dot(self, z: np.ndarray) -> float:
        return float(np.dot(np.asarray(self.values), z[list(self.indices)]))


def _row_from_coeffs(coeffs: dict[int, float], rhs: float = 0.0) -> SparseRow:
    items = sorted((k, v) for k, v in coeffs.items() if v != 0.0)
    return SparseRow(
        indices=tuple(k for k, _ in items),
        values=tuple(v for _, v in items),
        rhs=rhs,
    )


def _level_coeffs(layout: ParameterLayout, i: int, j: int) -> dict[int, float]:
    """Parameter coefficients of the level at lattice point (i, j).

    Valid on the whole level domain: the boundary entry point contributes 1,
    each trailing cohort cell contributes 1 on its trend parameter.
    """
    boundary, interior = cohort_path(CellIndex(i, j))
    coeffs = {layout.boundary_index(*boundary): 1.0}
    for cell in interior:
        coeffs[layout.trend_index(*cell)] = coeffs.get(layout.trend_index(*cell), 0.0) + 1.0
    return coeffs


def cell_observation_coeffs(
    layout: ParameterLayout, cell: CellIndex, t: float
) -> dict[int, float]:
    """Observation functional for a point in `cell` at year fraction `t`."""
    coeffs = _level_coeffs(layout, cell.i, cell.j)
    if t != 0.0:
        k = layout.trend_index(cell.i, cell.j)
        # Cohort-path cells (i-m, j-m) with m >= 1 never include the current
        # cell, so the year-fraction coefficient lands on a fresh index.
        assert k not in coeffs, "year-fraction coefficient collided with path"
        coeffs[k] = t
    return coeffs


def observation_row(layout: ParameterLayout, frame: Frame, y: float, a: float) -> SparseRow:
    """Design row for a measurement at (y, a); the right-hand side stays 0."""
    cell = frame.locate(y, a)
    t = frame.year_fraction(y)
    return _row_from_coeffs(cell_observation_coeffs(layout, cell, t))


def build_b0_raw(
    layout: ParameterLayout, frame: Frame, measurements: list[Measurement]
) -> list[SparseRow]:
    """One data row per measurement, right-hand side the observed value."""
    rows = []
    for m in measurements:
        cell = frame.locate(m.y, m.a)
        t = frame.year_fraction(m.y)
        rows.append(_row_from_coeffs(cell_observation_coeffs(layout, cell, t), rhs=m.x))
    return rows


def build_b0_aggregated(
    layout: ParameterLayout, frame: Frame, cells: list[AggregatedCell]
) -> tuple[list[SparseRow], np.ndarray, float]:
    """Cell-level data rows, their count weights, and the pooled within-cell
    corrected sum of squares.

    Each row is built at the cell's mean year, so aggregated and raw modes
    coincide exactly whenever all member years within a cell are equal.
    """
    rows = []
    weights = np.empty(len(cells), dtype=float)
    css_total = 0.0
    for pos, c in enumerate(cells):
        i_abs = c.cell.i + frame.i_min
        if not (i_abs <= c.y_bar < i_abs + 1):
            raise OutOfFrame(
                f"cell {c.cell} mean year {c.y_bar} outside its year interval"
            )
        t = c.y_bar - i_abs
        rows.append(_row_from_coeffs(cell_observation_coeffs(layout, c.cell, t), rhs=c.x_bar))
        weights[pos] = float(c.n)
        css_total += c.css
    return rows, weights, css_total


def _second_difference(
    layout: ParameterLayout, expand, points: list[tuple[int, int]]
) -> SparseRow:
    coeffs: dict[int, float] = {}
    for (pi, pj), stencil in zip(points, (1.0, -2.0, 1.0)):
        for k, v in expand(layout, pi, pj).items():
            coeffs[k] = coeffs.get(k, 0.0) + stencil * v
    return _row_from_coeffs(coeffs, rhs=0.0)


def build_penalty_v(layout: ParameterLayout) -> list[SparseRow]:
    """Second-difference rows of the level surface, expanded onto parameters.

    Age direction runs over rows i in [0, I+1], centers j in [1, J]; year
    direction over columns j in [0, J+1], centers i in [1, I].  Row count is
    (I+2)*J + (J+2)*I.
    """
    I, J = layout.i_span, layout.j_span
    if I < 1 or J < 1:
        raise FrameTooSmall("level penalty needs spans >= 1")
    rows = []
    for i in range(I + 2):
        for j in range(1, J + 1):
            rows.append(
                _second_difference(layout, _level_coeffs, [(i, j - 1), (i, j), (i, j + 1)])
            )
    for j in range(J + 2):
        for i in range(1, I + 1):
            rows.append(
                _second_difference(layout, _level_coeffs, [(i - 1, j), (i, j), (i + 1, j)])
            )
    return rows


def _trend_coeffs(layout: ParameterLayout, i: int, j: int) -> dict[int, float]:
    return {layout.trend_index(i, j): 1.0}


def build_penalty_u(layout: ParameterLayout) -> list[SparseRow]:
    """Second-difference rows of the trend surface, directly on parameters.

    Age direction: i in [0, I], centers j in [1, J-1]; year direction:
    j in [0, J], centers i in [1, I-1].  Either sum may be empty.
    """
    I, J = layout.i_span, layout.j_span
    rows = []
    for i in range(I + 1):
        for j in range(1, J):
            rows.append(
                _second_difference(layout, _trend_coeffs, [(i, j - 1), (i, j), (i, j + 1)])
            )
    for j in range(J + 1):
        for i in range(1, I):
            rows.append(
                _second_difference(layout, _trend_coeffs, [(i - 1, j), (i, j), (i + 1, j)])
            )
    return rows


def build_z2v(layout: ParameterLayout) -> np.ndarray:
    """Map from parameters to the flattened level surface (row-major)."""
    nrows, ncols = layout.level_shape
    a = np.zeros((nrows * ncols, layout.dim))
    for i in range(nrows):
        for j in range(ncols):
            for k, v in _level_coeffs(layout, i, j).items():
                a[i * ncols + j, k] = v
    return a


def build_z2u(layout: ParameterLayout) -> np.ndarray:
    """Selector of the trend block, in row-major trend order."""
    a = np.zeros((layout.n_trend, layout.dim))
    for k in range(layout.n_trend):
        a[k, layout.n_boundary + k] = 1.0
    return a


def cluster_bands(extent: int, size: int) -> list[range]:
    """Consecutive index bands of width `size`; the last keeps the remainder."""
    return [range(lo, min(lo + size, extent)) for lo in range(0, extent, size)]


def build_u2uc(layout: ParameterLayout, delta_a: int, delta_y: int) -> np.ndarray:
    """Equal-weight cluster averaging map over the trend surface.

    Clusters are delta_y x delta_a rectangles anchored at (0, 0); ragged
    edges form their own smaller clusters.  Output rows follow the cluster
    grid row-major (year bands outer, age bands inner); every row sums to 1.
    """
    nrows, ncols = layout.trend_shape
    if not (1 <= delta_y <= nrows and 1 <= delta_a <= ncols):
        raise InvalidClusterSize(
            f"cluster sizes must satisfy 1 <= delta_y <= {nrows}, "
            f"1 <= delta_a <= {ncols}, got ({delta_y}, {delta_a})"
        )
    year_bands = cluster_bands(nrows, delta_y)
    age_bands = cluster_bands(ncols, delta_a)
    a = np.zeros((len(year_bands) * len(age_bands), layout.n_trend))
    for p, band_i in enumerate(year_bands):
        for q, band_j in enumerate(age_bands):
            w = 1.0 / (len(band_i) * len(band_j))
            row = p * len(age_bands) + q
            for i in band_i:
                for j in band_j:
                    a[row, i * ncols + j] = w
    return a


def rows_to_matrix(rows: list[SparseRow], dim: int) -> np.ndarray:
    """Dense matrix view of sparse rows (dimensions here are modest)."""
    b = np.zeros((len(rows), dim))
    for r, row in enumerate(rows):
        b[r, list(row.indices)] = row.values
    return b


@dataclass(frozen=True)
class LinearSystem:
    """Data rows with weights plus both penalty blocks, ready to solve."""

    layout: ParameterLayout
    data_rows: list[SparseRow]
    data_weights: np.ndarray
    penalty_v_rows: list[SparseRow] = field(repr=False, default_factory=list)
    penalty_u_rows: list[SparseRow] = field(repr=False, default_factory=list)
    css_total: float = 0.0

    @property
    def n_obs(self) -> int:
        """Underlying measurement count: row count raw, summed counts aggregated."""
        return int(round(float(np.sum(self.data_weights))))

    @property
    def rhs(self) -> np.ndarray:
        return np.array([r.rhs for r in self.data_rows], dtype=float)


def build_system_raw(frame: Frame, measurements: list[Measurement]) -> LinearSystem:
    layout = ParameterLayout.from_frame(frame)
    rows = build_b0_raw(layout, frame, measurements)
    return LinearSystem(
        layout=layout,
        data_rows=rows,
        data_weights=np.ones(len(rows)),
        penalty_v_rows=build_penalty_v(layout),
        penalty_u_rows=build_penalty_u(layout),
        css_total=0.0,
    )


def build_system_aggregated(frame: Frame, cells: list[AggregatedCell]) -> LinearSystem:
    layout = ParameterLayout.from_frame(frame)
    rows, weights, css_total = build_b0_aggregated(layout, frame, cells)
    return LinearSystem(
        layout=layout,
        data_rows=rows,
        data_weights=weights,
        penalty_v_rows=build_penalty_v(layout),
        penalty_u_rows=build_penalty_u(layout),
        css_total=css_total,
    )
