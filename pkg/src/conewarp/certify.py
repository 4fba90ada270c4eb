"""Grid-based certification: positive semidefiniteness, scalar differential
inequalities, oracle agreement, and interface gluing.

Certification here is sampled, not interval-verified: every report states the
grid, the tolerance, the margin achieved, and a Lipschitz cell bound estimated
from the sampled field, so the claim is exactly "verified on grid G with
margin m".
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .curvature import Chart, ansatz_to_chart, frame_project, ricci_fd_batch
from .errors import DomainError, SingularityError
from .warpfn import WarpFunction

__all__ = [
    "Grid",
    "CertificationReport",
    "certify_psd",
    "certify_inequality",
    "certify_oracle_agreement",
    "certify_interface",
    "certify_gluing",
    "DEFAULT_TOL",
]


def certify_gluing(atlas, tol: float = 1e-8):
    """Interface re-certification for a built surgery atlas (see pipeline)."""
    from .pipeline import certify_gluing as _impl
    return _impl(atlas, tol)

DEFAULT_TOL = 1e-8
DEFAULT_N_1D = 512
DEFAULT_N_2D = 128


@dataclass
class Grid:
    """Product grid: per-coordinate (lo, hi, count); open intervals are
    sampled at cell midpoints so axis endpoints are never evaluated."""

    intervals: list           # [(lo, hi)]
    counts: list              # [n]
    open_ends: bool = True

    def __post_init__(self):
        if len(self.intervals) != len(self.counts):
            raise DomainError("grid needs one count per interval")
        if any(n < 2 for n in self.counts):
            raise DomainError("grid counts must be >= 2")

    @classmethod
    def uniform(cls, intervals, n):
        intervals = list(intervals)
        return cls(intervals, [n] * len(intervals))

    def axes(self):
        out = []
        for (lo, hi), n in zip(self.intervals, self.counts):
            if self.open_ends:
                h = (hi - lo) / n
                out.append(lo + h * (np.arange(n) + 0.5))
            else:
                out.append(np.linspace(lo, hi, n))
        return out

    def points(self) -> np.ndarray:
        axes = self.axes()
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def cell_diameter(self) -> float:
        return float(np.sqrt(sum(((hi - lo) / n) ** 2
                                 for (lo, hi), n in zip(self.intervals, self.counts))))

    def spec(self):
        return {"intervals": [list(map(float, iv)) for iv in self.intervals],
                "counts": list(map(int, self.counts)),
                "open_ends": self.open_ends}


@dataclass
class CertificationReport:
    target: str
    grid: dict
    tolerance: float
    min_margin: float            # >= -tolerance means pass
    argmin: list
    violations: list = field(default_factory=list)
    passed: bool = False
    lipschitz_cell_bound: float = float("nan")
    details: dict = field(default_factory=dict)
    wall_time: float = 0.0
    note: str = "sampled certification (grid + margin), not an interval proof"

    def __bool__(self):
        return self.passed

    def to_json(self) -> str:
        d = dict(self.__dict__)
        return json.dumps(d, indent=2, default=_jsonable)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.target}: min margin {self.min_margin:.3e} "
                f"(tol {self.tolerance:.1e}, cell bound {self.lipschitz_cell_bound:.2e}, "
                f"{len(self.violations)} violations)")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _finish(report: CertificationReport, t0: float) -> CertificationReport:
    report.wall_time = time.perf_counter() - t0
    report.passed = (report.min_margin >= -report.tolerance) and not report.violations
    return report


def _margin_report(target, grid: Grid, tol, margins: np.ndarray, pts: np.ndarray,
                   details=None) -> CertificationReport:
    """Common reduction: margins >= -tol everywhere means pass."""
    t0 = time.perf_counter()
    if not np.all(np.isfinite(margins)):
        bad = pts[~np.isfinite(margins)][0]
        raise SingularityError(f"{target}: non-finite field value at {bad}")
    order = np.argsort(margins, kind="stable")
    i_min = int(order[0])
    viol_idx = [int(i) for i in order if margins[i] < -tol]
    violations = [{"point": pts[i].tolist(), "value": float(margins[i])} for i in viol_idx[:32]]
    # Lipschitz cell bound: largest sampled slope times half a cell diagonal
    if margins.size >= 2:
        m = margins.reshape([*_shape_of(grid)])
        slopes = []
        for ax in range(m.ndim):
            dx = (grid.intervals[ax][1] - grid.intervals[ax][0]) / grid.counts[ax]
            if m.shape[ax] > 1:
                slopes.append(np.max(np.abs(np.diff(m, axis=ax))) / dx)
        lip = max(slopes) if slopes else 0.0
        cell_bound = 0.5 * lip * grid.cell_diameter()
    else:
        cell_bound = float("nan")
    rep = CertificationReport(
        target=target, grid=grid.spec(), tolerance=float(tol),
        min_margin=float(margins[i_min]), argmin=pts[i_min].tolist(),
        violations=violations, lipschitz_cell_bound=float(cell_bound),
        details=details or {},
    )
    return _finish(rep, t0)


def _shape_of(grid: Grid):
    return grid.counts


def certify_psd(field_fn, grid: Grid, tol: float = DEFAULT_TOL,
                target: str = "psd") -> CertificationReport:
    """Minimum eigenvalue of a symmetric-matrix field over the grid.

    ``field_fn`` maps points (N, d) to symmetric matrices (N, k, k).
    Deterministic: the grid order is fixed and the reduction is exact.
    """
    pts = grid.points()
    mats = np.asarray(field_fn(pts), dtype=float)
    if not np.all(np.isfinite(mats)):
        bad = pts[~np.all(np.isfinite(mats), axis=(1, 2))][0]
        raise SingularityError(f"{target}: non-finite field value at {bad}")
    mats = 0.5 * (mats + np.swapaxes(mats, -1, -2))
    eigs = np.linalg.eigvalsh(mats)
    margins = eigs[:, 0]
    rep = _margin_report(target, grid, tol, margins, pts)
    rep.details["min_eigenvalue"] = rep.min_margin
    return rep


def scalar_q_inequality(f: WarpFunction, xi: np.ndarray) -> np.ndarray:
    """(2 cot 2xi - f'/f)^2 + 3 f''/(4 f), the collapsed-fiber Ricci criterion."""
    j = f.jet(xi)
    if np.any(j.f <= 0):
        raise DomainError("f must be positive at every sample")
    d = 2.0 / np.tan(2.0 * xi) - j.f1 / j.f
    return d * d + 0.75 * j.f2 / j.f


def certify_inequality(f: WarpFunction, bound: float, grid: Grid,
                       tol: float = DEFAULT_TOL, target: str = "") -> CertificationReport:
    """Certify (2 cot 2xi - f'/f)^2 + 3 f''/(4f) <= bound on the grid."""
    pts = grid.points()
    xi = pts[:, 0]
    lhs = scalar_q_inequality(f, xi)
    margins = bound - lhs
    name = target or f"inequality<= {bound} for {f.name or 'f'}"
    rep = _margin_report(name, grid, tol, margins, pts)
    rep.details["bound"] = bound
    rep.details["max_lhs"] = float(np.max(lhs))
    return rep


# ---------------------------------------------------------------------------
# oracle agreement
# ---------------------------------------------------------------------------


def closed_form_on_frame(ansatz, X: np.ndarray, scale_map=None) -> np.ndarray:
    """Closed-form Ricci entries on the chart frame at chart points X."""
    from . import curvature as cv

    if scale_map is not None:
        X = scale_map(X)
    if isinstance(ansatz, cv.BergerSphere):
        return cv.ricci_berger_sphere(ansatz.f, ansatz.t, X[:, 0]).entries
    if isinstance(ansatz, cv.ConeOverBerger):
        return cv.ricci_cone_berger(ansatz.rho, ansatz.phi, ansatz.f, X[:, 0], X[:, 1]).entries
    if isinstance(ansatz, cv.BergerGeneral):
        vals = cv.ricci_berger_general(ansatz.rho, ansatz.phi, X[:, 0])
        out = np.zeros((X.shape[0], 4, 4))
        for i in range(4):
            out[:, i, i] = vals[i]
        return out
    if isinstance(ansatz, cv.DoubleWarp):
        lam = cv.ricci_double_warp(ansatz.m, ansatz.n, ansatz.varphi, ansatz.phi, X[:, 0])
        out = np.zeros((X.shape[0], 3, 3))
        for i in range(3):
            out[:, i, i] = lam[i]
        return out
    if isinstance(ansatz, cv.LocalGlue):
        half = ansatz.xi0 / 2.0
        return cv.ricci_local_glue(ansatz, half * X[:, 0], half * X[:, 1]).entries
    if isinstance(ansatz, cv.TorusInvariant):
        return cv.ricci_torus_invariant(ansatz.Phi, ansatz.Psi, ansatz.Ups,
                                        X[:, 0], X[:, 1]).entries
    raise DomainError(f"no closed form dispatch for {type(ansatz).__name__}")


def certify_oracle_agreement(ansatz, n_points: int = 100, h: float = 1e-3,
                             tol_factor: float = 10.0, rng=0,
                             target: str = "") -> CertificationReport:
    """Cross-validate the closed-form Ricci against the FD oracle.

    Per the oracle design, the comparison value is the Richardson
    extrapolation of the h and h/2 central-difference results; the observed
    convergence order is measured from the plain h and h/2 deviations.
    Pass requires max deviation <= tol_factor * h^2 * scale and order >= 1.8,
    where scale is max(1, largest closed-form entry).
    """
    t0 = time.perf_counter()
    chart = ansatz_to_chart(ansatz)
    X = chart.interior_samples(n_points, rng=rng)
    closed = closed_form_on_frame(ansatz, X)
    k = closed.shape[-1]

    def projected(hh):
        ric = ricci_fd_batch(chart, X, hh)
        proj = frame_project(ric, chart.frame_batch(X))
        return proj[:, :k, :k]

    p1 = projected(h)
    p2 = projected(h / 2)
    p_rich = (4.0 * p2 - p1) / 3.0
    dev1 = np.abs(p1 - closed)
    dev2 = np.abs(p2 - closed)
    devr = np.abs(p_rich - closed)
    scale = max(1.0, float(np.max(np.abs(closed))))
    tol = tol_factor * h * h * scale
    rms1 = float(np.sqrt(np.mean(dev1 ** 2)))
    rms2 = float(np.sqrt(np.mean(dev2 ** 2)))
    order = float(np.log2(rms1 / rms2)) if rms2 > 0 else 4.0
    margins = tol - devr.reshape(devr.shape[0], -1).max(axis=1)
    name = target or f"oracle agreement: {chart.name}"
    rep = _margin_report(name, Grid([(0, 1)], [max(2, n_points)]), tol,
                         margins, X)
    rep.grid = {"samples": int(n_points), "h": h}
    rep.details.update({
        "max_dev_richardson": float(np.max(devr)),
        "max_dev_h": float(np.max(dev1)),
        "max_dev_h2": float(np.max(dev2)),
        "convergence_order": order,
        "scale": scale,
    })
    if order < 1.8:
        rep.passed = False
        rep.violations.append({"point": "order", "value": order})
    rep.wall_time = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# interface gluing
# ---------------------------------------------------------------------------


def certify_interface(name: str, samples_a: np.ndarray, samples_b: np.ndarray,
                      chart_a: Chart, chart_b: Chart, jac_ab: np.ndarray,
                      tol: float = DEFAULT_TOL,
                      radial_dir: tuple | None = None,
                      h: float = 1e-6) -> CertificationReport:
    """Compare pulled-back metric components across an interface.

    ``samples_a``/``samples_b`` are matched point lists in the two charts;
    ``jac_ab[n, i, j] = d x_a^i / d x_b^j`` is the identification Jacobian at
    each sample.  Checks components and, when ``radial_dir = (dir_a, dir_b)``
    unit coordinate directions are given, the first radial derivative.
    """
    t0 = time.perf_counter()
    ga = chart_a.metric_batch(samples_a)
    gb = chart_b.metric_batch(samples_b)
    # pulled[n,i,j] = jac^a_i g_ab jac^b_j with jac indexed [n, a, i]
    pulled = np.einsum("nai,nab,nbj->nij", jac_ab, ga, jac_ab)
    scale = np.maximum(1e-30, np.max(np.abs(gb), axis=(1, 2), keepdims=True))
    dev = np.max(np.abs(pulled - gb) / scale, axis=(1, 2))
    details = {"max_component_dev": float(np.max(dev))}
    if radial_dir is not None:
        da, db = radial_dir
        ga_p = chart_a.metric_batch(samples_a + h * da)
        ga_m = chart_a.metric_batch(samples_a - h * da)
        gb_p = chart_b.metric_batch(samples_b + h * db)
        gb_m = chart_b.metric_batch(samples_b - h * db)
        dga = np.einsum("nai,nab,nbj->nij", jac_ab, (ga_p - ga_m) / (2 * h), jac_ab)
        dgb = (gb_p - gb_m) / (2 * h)
        ddev = np.max(np.abs(dga - dgb) / scale, axis=(1, 2))
        dev = np.maximum(dev, ddev)
        details["max_radial_derivative_dev"] = float(np.max(ddev))
    margins = tol - dev
    rep = _margin_report(f"interface {name}", Grid([(0, 1)], [max(2, len(dev))]),
                         tol, margins, samples_b, details=details)
    rep.grid = {"samples": int(len(dev))}
    rep.wall_time = time.perf_counter() - t0
    return rep
