"""Parameter-grid sweeps of the detector, with CSV and PGM output.

A grid has an outer parameter axis (``mu``/``nu`` for the two-wave model,
``eps`` for Q-flows) and an inner initial-condition axis along one of the
lines

* ``p0``:  (q0, p0, t0) in the two-wave chart,
* ``uu0``: (u0, u0, 0), ``y0``: (0, y0, 0), ``x0``: (x0, 0, 0) for Q-flows.

Cells are stored row-major with the outer axis slowest.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import State
from .detector import DetectionResult, DetectorOptions, Status, detect
from .foliations import QFLOW_LABELS, TWOWAVE_LABELS, Foliation
from .models import QFlowModel, QFlowParams, TwoWaveModel, TwoWaveParams

IC_LINES = {"twowave": ("p0",), "qflow": ("uu0", "y0", "x0")}
AXIS1_NAMES = {"twowave": ("mu", "nu"), "qflow": ("eps",)}
# name the inner axis carries for each line
IC_AXIS_NAME = {"p0": "p0", "uu0": "u0", "y0": "y0", "x0": "x0"}


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"axis {self.name}: n must be a positive integer")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"axis {self.name}: bounds must be finite")
        if (self.n == 1 and self.lo > self.hi) or (self.n > 1 and not self.lo < self.hi):
            raise ValueError(f"axis {self.name}: need lo < hi")

    @classmethod
    def parse(cls, text: str) -> "Axis":
        """Parse ``name:lo:hi:n``."""
        parts = text.split(":")
        if len(parts) != 4:
            raise ValueError(f"axis {text!r} is not of the form name:lo:hi:n")
        name, lo, hi, n = parts
        return cls(name, float(lo), float(hi), int(n))

    def value(self, i: int) -> float:
        if self.n == 1:
            return float(self.lo)
        return self.lo + ((self.hi - self.lo) * i) / (self.n - 1)

    def values(self) -> np.ndarray:
        return np.array([self.value(i) for i in range(self.n)])


@dataclass(frozen=True)
class GridSpec:
    model: str
    foliation: str
    axis1: Axis
    axis2: Axis
    ic_line: str = "p0"
    params: Tuple[Tuple[str, float], ...] = ()
    q0: float = 0.0
    t0: float = 0.0
    options: DetectorOptions = DetectorOptions()

    def __post_init__(self):
        if self.model not in IC_LINES:
            raise ValueError(f"unknown model {self.model!r}")
        if self.ic_line not in IC_LINES[self.model]:
            raise ValueError(f"ic-line {self.ic_line!r} does not belong to model {self.model!r}; "
                             f"expected one of {IC_LINES[self.model]}")
        labels = TWOWAVE_LABELS if self.model == "twowave" else QFLOW_LABELS
        if self.foliation not in labels:
            raise ValueError(f"foliation {self.foliation!r} does not belong to model {self.model!r}")
        if self.axis1.name not in AXIS1_NAMES[self.model]:
            raise ValueError(f"axis1 {self.axis1.name!r} must be one of {AXIS1_NAMES[self.model]}")
        if self.axis2.name != IC_AXIS_NAME[self.ic_line]:
            raise ValueError(f"axis2 must be named {IC_AXIS_NAME[self.ic_line]!r} "
                             f"for ic-line {self.ic_line!r}")
        if isinstance(self.params, dict):
            object.__setattr__(self, "params", tuple(sorted(self.params.items())))
        # fail early on bad parameters
        self.build(0)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.axis1.n, self.axis2.n)

    def model_params(self, a1: float):
        kw: Dict[str, float] = dict(self.params)
        kw[self.axis1.name] = a1
        if self.model == "twowave":
            if "k" in kw:
                kw["k"] = int(kw["k"])
            return TwoWaveParams(**kw)
        if "q" in kw:
            kw["q"] = int(kw["q"])
        return QFlowParams(**kw)

    def initial_state(self, a2: float) -> State:
        if self.ic_line == "p0":
            return State(self.q0, a2, self.t0, "twowave")
        if self.ic_line == "uu0":
            return State(a2, a2, 0.0, "qflow")
        if self.ic_line == "y0":
            return State(0.0, a2, 0.0, "qflow")
        return State(a2, 0.0, 0.0, "qflow")

    def build(self, index: int):
        """(model, foliation, initial state) for the row-major cell ``index``."""
        i, j = divmod(index, self.axis2.n)
        P = self.model_params(self.axis1.value(i))
        model = TwoWaveModel(P) if self.model == "twowave" else QFlowModel(P)
        fol = Foliation(self.foliation, P, self.options.singular_tol)
        return model, fol, self.initial_state(self.axis2.value(j))


@dataclass
class GridResult:
    spec: GridSpec
    cells: List[DetectionResult] = field(default_factory=list)

    def __post_init__(self):
        n1, n2 = self.spec.shape
        if len(self.cells) != n1 * n2:
            raise ValueError(f"expected {n1 * n2} cells, got {len(self.cells)}")

    def cell(self, i: int, j: int) -> DetectionResult:
        return self.cells[i * self.spec.axis2.n + j]

    def status_array(self) -> np.ndarray:
        return np.array([c.status.value for c in self.cells]).reshape(self.spec.shape)

    def tc_array(self) -> np.ndarray:
        """t_c per cell, NaN where nothing was detected."""
        a = [c.t_c if c.status is Status.DETECTED else np.nan for c in self.cells]
        return np.array(a, dtype=float).reshape(self.spec.shape)

    @property
    def n_errors(self) -> int:
        return sum(c.status is Status.ERROR for c in self.cells)


def _run_cell(spec: GridSpec, index: int) -> DetectionResult:
    try:
        model, fol, s0 = spec.build(index)
        return detect(model, fol, s0, spec.options)
    except Exception as exc:  # one bad orbit must not take down the grid
        return DetectionResult(Status.ERROR, None, reason=f"{type(exc).__name__}: {exc}")


def run_sweep(spec: GridSpec, workers: int = 1) -> GridResult:
    """Run the detector on every cell.

    The compiled integration loop releases the GIL, so a thread pool gives
    real parallelism.  Each cell is computed independently and stored by
    index, which makes the result independent of ``workers``.
    """
    if int(workers) != workers or workers < 1:
        raise ValueError("workers must be a positive integer")
    n = spec.axis1.n * spec.axis2.n
    if workers == 1:
        cells = [_run_cell(spec, i) for i in range(n)]
    else:
        cells: List[Optional[DetectionResult]] = [None] * n
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_run_cell, spec, i): i for i in range(n)}
            for fut, i in futures.items():
                cells[i] = fut.result()
    return GridResult(spec, list(cells))


# --------------------------------------------------------------------------
# serialisation

def format_float(x: float) -> str:
    """Shortest round-trip decimal form; integral values lose the ``.0``."""
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def write_grid_csv(g: GridResult, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["axis1", "axis2", "status", "t_c"])
            a1 = g.spec.axis1.values()
            a2 = g.spec.axis2.values()
            for idx, c in enumerate(g.cells):
                i, j = divmod(idx, g.spec.axis2.n)
                tc = format_float(c.t_c) if c.status is Status.DETECTED else ""
                w.writerow([format_float(a1[i]), format_float(a2[j]), c.status.value, tc])
    except OSError as exc:
        raise OSError(f"cannot write grid CSV {path}: {exc}") from exc


def read_grid_csv(path, spec: GridSpec) -> GridResult:
    """Inverse of :func:`write_grid_csv` for a known grid spec."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["axis1", "axis2", "status", "t_c"]:
        raise ValueError(f"{path}: missing or bad header")
    rows = rows[1:]
    n1, n2 = spec.shape
    if len(rows) != n1 * n2:
        raise ValueError(f"{path}: expected {n1 * n2} rows, found {len(rows)}")
    a1 = spec.axis1.values()
    a2 = spec.axis2.values()
    cells = []
    for idx, (x1, x2, status, tc) in enumerate(rows):
        i, j = divmod(idx, n2)
        if float(x1) != a1[i] or float(x2) != a2[j]:
            raise ValueError(f"{path}: row {idx + 2} coordinates do not match the grid spec")
        st = Status(status)
        cells.append(DetectionResult(st, float(tc) if st is Status.DETECTED else None))
    return GridResult(spec, cells)


def pixel_value(c: DetectionResult, t_max: float) -> int:
    if c.status is Status.NONE:
        return 255
    if c.status is not Status.DETECTED:
        return 0
    return 32 + min(191, max(0, int(math.floor(191.0 * c.t_c / t_max))))


def render_pgm(g: GridResult, path) -> None:
    """Binary 8-bit PGM: x = axis1, y = axis2 increasing upwards."""
    n1, n2 = g.spec.shape
    t_max = g.spec.options.t_max
    img = np.empty((n2, n1), dtype=np.uint8)
    for idx, c in enumerate(g.cells):
        i, j = divmod(idx, n2)
        img[n2 - 1 - j, i] = pixel_value(c, t_max)
    try:
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (n1, n2))
            fh.write(img.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM written by :func:`render_pgm`."""
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a P5 image")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def with_options(spec: GridSpec, **changes) -> GridSpec:
    return replace(spec, options=replace(spec.options, **changes))
