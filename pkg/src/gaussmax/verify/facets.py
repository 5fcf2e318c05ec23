"""Exact density of the maximum for covariance factors of rank at most two.

With ``Z = A g`` and rows ``a_i = sigma_i nu_i``, the event ``{M <= t}`` is
``{g in K}`` for the polygon ``K = {x : <nu_i, x> <= t / sigma_i}``. The
density at ``t > 0`` is the sum over the edges ``F_i`` of ``K`` of
``(1/sigma_i)`` times the Gaussian line integral over ``F_i``. Along the
line ``<nu_i, x> = d`` that integral is ``phi(d) [Phi(s_hi) - Phi(s_lo)]``
in the tangential coordinate ``s``, so no quadrature is needed.

Two independent routes find the edges: a per-line interval computation
(used for the density) and Sutherland-Hodgman clipping of a large box
(used for the geometry and to cross-check the intervals).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..covariance import CovarianceModel
from ..numerics import DomainError, INV_SQRT_2PI, std_normal_cdf, std_normal_sf

BOX_RADIUS = 12.0
DUPLICATE_TOL = 1e-10
_PARALLEL_TOL = 1e-12


class UnsupportedRankError(DomainError):
    """The oracle only handles factors of rank 0, 1 or 2."""


@dataclass(frozen=True)
class Facet:
    index: int
    sigma: float
    normal: tuple
    offset: float
    s_lo: float
    s_hi: float
    line_integral: float
    cone_mass: float

    @property
    def empty(self) -> bool:
        return not self.s_hi > self.s_lo

    def endpoints(self, clip: float = math.inf) -> tuple[np.ndarray, np.ndarray]:
        nu = np.asarray(self.normal)
        tau = np.array([-nu[1], nu[0]])
        base = self.offset * nu
        lo, hi = max(self.s_lo, -clip), min(self.s_hi, clip)
        return base + lo * tau, base + hi * tau


@dataclass
class FacetGeometry:
    """Polygon ``K`` at level ``t`` and its active edges.

    ``facets`` holds one entry per distinct constraint line (duplicates and
    dominated parallel lines are dropped, keeping the lowest index);
    ``polygon`` is the clipped box with the constraint label of the edge
    leaving each vertex (negative labels mark the box).
    """

    t: float
    rank: int
    facets: list[Facet]
    polygon: np.ndarray | None = None
    edge_labels: list[int] = field(default_factory=list)
    dropped: list[int] = field(default_factory=list)

    @property
    def density(self) -> float:
        return float(sum(f.line_integral / f.sigma for f in self.facets if not f.empty))

    @property
    def cone_mass_total(self) -> float:
        return float(sum(f.cone_mass for f in self.facets))

    def polygon_edges(self) -> dict[int, list[tuple[np.ndarray, np.ndarray]]]:
        out: dict[int, list] = {}
        if self.polygon is None:
            return out
        n = len(self.polygon)
        for k, label in enumerate(self.edge_labels):
            a, b = self.polygon[k], self.polygon[(k + 1) % n]
            if np.linalg.norm(b - a) > 1e-12:
                out.setdefault(label, []).append((a, b))
        return out


@dataclass(frozen=True)
class FacetCheck:
    index: int
    line_integral: float
    isoperimetric: float
    conic: float

    @property
    def ok(self) -> bool:
        tol = 1e-12
        return self.line_integral <= self.isoperimetric + tol and self.line_integral <= self.conic + tol


@dataclass(frozen=True)
class FacetOracleResult:
    t: float
    density: float
    geometry: FacetGeometry
    facet_checks: list[FacetCheck]
    cone_mass_total: float

    @property
    def facet_checks_ok(self) -> bool:
        return all(c.ok for c in self.facet_checks)


def _rows(model: CovarianceModel) -> np.ndarray:
    if model.s > 2:
        raise UnsupportedRankError(f"facet oracle needs rank <= 2, model has rank {model.s}")
    rows = np.asarray(model.factor_rows, dtype=float)
    if rows.ndim != 2:
        rows = rows.reshape(model.p, -1)
    return rows


def _distinct_constraints(normals: np.ndarray, sig: np.ndarray, t: float) -> tuple[list[int], list[int]]:
    """Keep one constraint per direction: the tightest, lowest index on ties."""
    offsets = t / sig
    keep: list[int] = []
    dropped: list[int] = []
    for i in range(len(sig)):
        twin = next((j for j in keep if np.linalg.norm(normals[i] - normals[j]) <= DUPLICATE_TOL), None)
        if twin is None:
            keep.append(i)
        elif offsets[i] < offsets[twin] - DUPLICATE_TOL * max(1.0, offsets[twin]):
            keep[keep.index(twin)] = i
            dropped.append(twin)
        else:
            dropped.append(i)
    keep.sort()
    return keep, sorted(dropped)


def _line_interval(i: int, keep: list[int], normals: np.ndarray, offsets: np.ndarray) -> tuple[float, float]:
    """Tangential extent of line ``i`` inside all other half-planes."""
    nu = normals[i]
    tau = np.array([-nu[1], nu[0]])
    base = offsets[i] * nu
    lo, hi = -math.inf, math.inf
    for j in keep:
        if j == i:
            continue
        c = float(normals[j] @ tau)
        e = float(offsets[j] - normals[j] @ base)
        if abs(c) <= _PARALLEL_TOL:
            if e < 0:
                return 0.0, 0.0
            continue
        bound = e / c
        if c > 0:
            hi = min(hi, bound)
        else:
            lo = max(lo, bound)
    if hi <= lo:
        return 0.0, 0.0
    return lo, hi


def clip_polygon(normals: np.ndarray, offsets: np.ndarray, labels, radius: float = BOX_RADIUS):
    """Sutherland-Hodgman clipping of the square ``[-radius, radius]^2``.

    Returns the vertices in counter-clockwise order and, for each vertex,
    the label of the edge that starts there.
    """
    r = radius
    poly = [np.array([r, -r]), np.array([r, r]), np.array([-r, r]), np.array([-r, -r])]
    lab = [-1, -2, -3, -4]
    for nu, d, label in zip(normals, offsets, labels):
        if not poly:
            break
        out_v: list[np.ndarray] = []
        out_l: list[int] = []
        n = len(poly)
        for k in range(n):
            p_, q_ = poly[k], poly[(k + 1) % n]
            fp, fq = float(nu @ p_) - d, float(nu @ q_) - d
            p_in, q_in = fp <= 0, fq <= 0
            if p_in:
                out_v.append(p_)
                out_l.append(lab[k])
                if not q_in:
                    out_v.append(p_ + (fp / (fp - fq)) * (q_ - p_))
                    out_l.append(int(label))
            elif q_in:
                out_v.append(p_ + (fp / (fp - fq)) * (q_ - p_))
                out_l.append(lab[k])
        poly, lab = out_v, out_l
    return (np.array(poly) if poly else np.zeros((0, 2))), lab


def facet_geometry(model: CovarianceModel, t: float, with_polygon: bool = True) -> FacetGeometry:
    t = float(t)
    if not (math.isfinite(t) and t > 0):
        raise DomainError(f"t must be positive, got {t!r}")
    rows = _rows(model)
    sig_all = np.linalg.norm(rows, axis=1) if rows.size else np.zeros(model.p)
    active = np.flatnonzero(sig_all > 0)
    rank = 0 if active.size == 0 else int(np.linalg.matrix_rank(rows[active], tol=1e-12 * sig_all.max()))
    if rank > 2:
        raise UnsupportedRankError(f"facet oracle needs rank <= 2, got {rank}")
    if active.size == 0:
        return FacetGeometry(t=t, rank=0, facets=[])

    # rank-one factors live on a line; embed them in the plane
    plane = np.zeros((rows.shape[0], 2))
    plane[:, : rows.shape[1]] = rows
    sig = sig_all[active]
    normals = plane[active] / sig[:, None]
    offsets = t / sig
    keep, dropped = _distinct_constraints(normals, sig, t)

    facets = []
    for i in keep:
        lo, hi = _line_interval(i, keep, normals, offsets)
        d = offsets[i]
        length_mass = (std_normal_cdf(hi) if math.isfinite(hi) else 1.0) - (
            std_normal_cdf(lo) if math.isfinite(lo) else 0.0)
        length_mass = max(length_mass, 0.0) if hi > lo else 0.0
        phi_d = INV_SQRT_2PI * math.exp(-0.5 * d * d)
        facets.append(Facet(
            index=int(active[i]),
            sigma=float(sig[i]),
            normal=tuple(float(v) for v in normals[i]),
            offset=float(d),
            s_lo=float(lo),
            s_hi=float(hi),
            line_integral=phi_d * length_mass,
            cone_mass=std_normal_sf(d) * length_mass,
        ))
    geometry = FacetGeometry(t=t, rank=rank, facets=facets, dropped=[int(active[j]) for j in dropped])
    if with_polygon:
        poly, labels = clip_polygon(normals[keep], offsets[keep], [int(active[i]) for i in keep])
        geometry.polygon = poly
        geometry.edge_labels = labels
    return geometry


def facet_density_oracle(model: CovarianceModel, t: float) -> FacetOracleResult:
    """Exact density of ``max_i Z_i`` at ``t > 0`` for a rank <= 2 model.

    Also evaluates, for every facet, the two surface-area inequalities
    ``int_F phi <= phi(d)`` and ``int_F phi <= (1 + d) gamma(N)`` where
    ``N`` is the outward normal cone over the facet.
    """
    geometry = facet_geometry(model, t)
    checks = [
        FacetCheck(
            index=f.index,
            line_integral=f.line_integral,
            isoperimetric=INV_SQRT_2PI * math.exp(-0.5 * f.offset**2),
            conic=(1.0 + f.offset) * f.cone_mass,
        )
        for f in geometry.facets
    ]
    return FacetOracleResult(
        t=float(t),
        density=geometry.density,
        geometry=geometry,
        facet_checks=checks,
        cone_mass_total=geometry.cone_mass_total,
    )


def window_average_density(model: CovarianceModel, t: float, delta: float, order: int = 24) -> float:
    """Mean of the oracle density over ``[t, t + delta]`` (Gauss-Legendre)."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    pts = t + 0.5 * delta * (nodes + 1.0)
    vals = np.array([facet_geometry(model, s, with_polygon=False).density for s in pts])
    return float(0.5 * np.dot(weights, vals))


def _clip_to_box(base: np.ndarray, tau: np.ndarray, lo: float, hi: float, radius: float) -> tuple[float, float]:
    # Liang-Barsky restriction of base + s * tau, s in [lo, hi], to the square
    for k in range(2):
        if abs(tau[k]) <= _PARALLEL_TOL:
            if abs(base[k]) > radius:
                return 0.0, 0.0
            continue
        a, b = sorted(((-radius - base[k]) / tau[k], (radius - base[k]) / tau[k]))
        lo, hi = max(lo, a), min(hi, b)
    return (lo, hi) if hi > lo else (0.0, 0.0)


def tiling_discrepancy(geometry: FacetGeometry) -> float:
    """Largest endpoint mismatch between the interval and clipping routes.

    Each constraint must own at most one polygon edge, and that edge must
    coincide with its facet interval restricted to the clipping box. Facets
    lying entirely outside the box must own no edge.
    """
    edges = geometry.polygon_edges()
    worst = 0.0
    for f in geometry.facets:
        segs = edges.get(f.index, [])
        nu = np.asarray(f.normal)
        tau = np.array([-nu[1], nu[0]])
        lo, hi = _clip_to_box(f.offset * nu, tau, f.s_lo, f.s_hi, BOX_RADIUS)
        if hi - lo < 1e-9:
            if segs:
                worst = max(worst, max(float(np.linalg.norm(b - a)) for a, b in segs))
            continue
        if len(segs) != 1:
            return math.inf
        a, b = segs[0]
        s_a, s_b = sorted((float(a @ tau), float(b @ tau)))
        worst = max(worst, abs(s_a - lo), abs(s_b - hi))
    known = {f.index for f in geometry.facets}
    if any(label >= 0 and label not in known for label in edges):
        return math.inf
    return worst


def random_rank2_spec(p: int, seed: int):
    """Reproducible rank-two covariance spec with spread-out row scales."""
    from ..covariance import CovarianceSpec

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xFACE7, p])))
    angles = rng.uniform(0.0, 2.0 * math.pi, size=p)
    scales = 10.0 ** rng.uniform(-1.5, 0.0, size=p)
    scales[rng.integers(0, p)] = 1.0
    rows = np.column_stack([np.cos(angles), np.sin(angles)]) * scales[:, None]
    return CovarianceSpec("dense", {"matrix": (rows @ rows.T).tolist()}, label=f"random_rank2(p={p},seed={seed})")
