"""Discretized magnetic Laplacians on square-lattice windows.

The continuum operator has a constant magnetic field of 2k flux quanta per
unit cell, a -4*pi*k spectral shift and a cell-periodic potential W.  On a
lattice with spacing h = 1/q the field enters through Peierls link phases
with flux Phi = 2k*h^2 quanta per plaquette; the quadratic vector-potential
term is absorbed entirely into the link phases, so the matrix model stays
bounded and translation covariant.  Covariant 5-point stencil, hop range 1.

Link-phase exponents are carried as exact rationals (denominator q^2) until
the final complex exponential, so plaquette fluxes and seam closures are
exact to rounding.  Torus and strip closures pin the Wilson loops to the
values of the cell-periodic gauge, which makes the bulk torus spectrum agree
exactly with the Bloch fiber decomposition (see :mod:`gapfill.bloch`).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.ndimage
import scipy.sparse as sp

from .errors import EmptyRegion, MissingPhase, NonTorusGeometry

GEOMETRIES = ("torus", "strip", "masked")
GAUGE_KINDS = ("symmetric", "landau")


def _phase(exponent: Fraction | float) -> complex:
    """exp(2*pi*i*exponent), reducing rational exponents mod 1 first."""
    if isinstance(exponent, Fraction):
        exponent = float(exponent % 1)
    return complex(np.exp(2j * np.pi * exponent))


# ---------------------------------------------------------------------------
# lattice description


@dataclass(frozen=True, eq=False)
class MagneticLattice:
    """Discretization window for the magnetic Laplacian.

    Parameters
    ----------
    k : int
        Flux strength; 2k flux quanta thread each continuum unit cell.
        k = 0 gives the free lattice Laplacian.
    q : int
        Sites per continuum unit length; the spacing is h = 1/q exactly.
    cells_x, cells_y : int
        Window size in continuum unit cells.
    geometry : {"torus", "strip", "masked"}
        Closure: torus is periodic in both directions, strip is periodic
        in x and open in y, masked is open in both.
    potential : (q, q) array, optional
        Real samples of W on one unit cell, indexed [ix, iy]; extended
        periodically.  Defaults to zero.
    """

    k: int
    q: int
    cells_x: int
    cells_y: int
    geometry: str = "torus"
    potential: np.ndarray | None = None

    def __post_init__(self):
        if self.k < 0 or int(self.k) != self.k:
            raise ValueError(f"k must be a nonnegative integer, got {self.k}")
        if self.q < 1:
            raise ValueError(f"q must be an integer >= 1, got {self.q}")
        if self.cells_x < 1 or self.cells_y < 1:
            raise ValueError("cells_x and cells_y must be positive")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"geometry must be one of {GEOMETRIES}")
        if self.potential is None:
            w = np.zeros((self.q, self.q))
        else:
            w = np.asarray(self.potential, dtype=float)
            if w.shape != (self.q, self.q):
                raise ValueError(f"potential must have shape ({self.q}, {self.q})")
        w.setflags(write=False)
        object.__setattr__(self, "potential", w)

    @property
    def h(self) -> float:
        return 1.0 / self.q

    @property
    def n_x(self) -> int:
        return self.q * self.cells_x

    @property
    def n_y(self) -> int:
        return self.q * self.cells_y

    @property
    def n_sites(self) -> int:
        return self.n_x * self.n_y

    @property
    def flux_per_plaquette(self) -> Fraction:
        """Flux quanta per lattice plaquette, Phi = 2k*h^2, exact."""
        return Fraction(2 * self.k, self.q * self.q)

    @property
    def w_norm(self) -> float:
        """Sup norm of the potential samples."""
        return float(np.abs(self.potential).max())

    @property
    def magnetic_length(self) -> float:
        """1/sqrt(4*pi*k); localization scale of edge states (inf if k=0)."""
        return np.inf if self.k == 0 else 1.0 / np.sqrt(4.0 * np.pi * self.k)

    @property
    def periodic_x(self) -> bool:
        return self.geometry in ("torus", "strip")

    @property
    def periodic_y(self) -> bool:
        return self.geometry == "torus"

    def with_geometry(self, geometry: str) -> "MagneticLattice":
        return MagneticLattice(self.k, self.q, self.cells_x, self.cells_y,
                               geometry, self.potential)

    def site_coords(self) -> np.ndarray:
        """All (ix, iy) site pairs in index order (index = ix*n_y + iy)."""
        ix, iy = np.meshgrid(np.arange(self.n_x), np.arange(self.n_y), indexing="ij")
        return np.column_stack([ix.ravel(), iy.ravel()])


# ---------------------------------------------------------------------------
# gauge field


@dataclass(frozen=True, eq=False)
class GaugeField:
    """U(1) phases on directed lattice edges.

    phase_x[ix, iy] is the phase on the link (ix, iy) -> (ix+1, iy) (wrapped
    when periodic); phase_y likewise for +y links.  The reversed link always
    carries the complex conjugate.  Entries for links that do not exist in
    the geometry are set to 1 and never read.
    """

    lattice: MagneticLattice
    gauge_kind: str
    phase_x: np.ndarray
    phase_y: np.ndarray

    def link_phase(self, site: tuple[int, int], direction: tuple[int, int]) -> complex:
        """Phase on the directed edge site -> site + direction."""
        ix, iy = site
        dx, dy = direction
        lat = self.lattice
        if (dx, dy) == (1, 0):
            return complex(self.phase_x[ix % lat.n_x, iy % lat.n_y])
        if (dx, dy) == (-1, 0):
            return complex(np.conj(self.phase_x[(ix - 1) % lat.n_x, iy % lat.n_y]))
        if (dx, dy) == (0, 1):
            return complex(self.phase_y[ix % lat.n_x, iy % lat.n_y])
        if (dx, dy) == (0, -1):
            return complex(np.conj(self.phase_y[ix % lat.n_x, (iy - 1) % lat.n_y]))
        raise ValueError(f"not a nearest-neighbour direction: {direction}")


def _formula_exponents(lattice: MagneticLattice, gauge_kind: str):
    """Rational link-phase exponents of the named gauge on the open window.

    phase = exp(2*pi*i*a).  Landau: a_x = 0, a_y(ix) = -Phi*ix (the y-link
    leaving x-coordinate ix*h carries exp(-2*pi*i*2k*h*x)).  Symmetric:
    a_x(iy) = +(Phi/2)*iy, a_y(ix) = -(Phi/2)*ix.
    """
    q2 = lattice.q * lattice.q
    nx, ny = lattice.n_x, lattice.n_y
    if gauge_kind == "landau":
        ax = [[Fraction(0)] * ny for _ in range(nx)]
        ay = [[Fraction(-2 * lattice.k * ix, q2) for _ in range(ny)] for ix in range(nx)]
    elif gauge_kind == "symmetric":
        ax = [[Fraction(lattice.k * iy, q2) for iy in range(ny)] for _ in range(nx)]
        ay = [[Fraction(-lattice.k * ix, q2) for _ in range(ny)] for ix in range(nx)]
    else:
        raise ValueError(f"gauge_kind must be one of {GAUGE_KINDS}")
    return ax, ay


def build_gauge(lattice: MagneticLattice, gauge_kind: str = "landau") -> GaugeField:
    """Peierls link phases with flux Phi = 2k*h^2 per plaquette.

    Every counterclockwise plaquette product equals exp(-2*pi*i*Phi),
    including seam plaquettes of periodic closures.  Seam links are solved
    from pinned Wilson-loop targets W_x(row iy) = exp(2*pi*i*Phi*n_x*iy) and
    W_y(col ix) = exp(-2*pi*i*Phi*(ix mod q)*n_y), the holonomies of the
    cell-periodic gauge; this keeps the torus closure unitarily equivalent
    to the Bloch fiber family with untwisted boundary characters.
    """
    ax, ay = _formula_exponents(lattice, gauge_kind)
    nx, ny = lattice.n_x, lattice.n_y
    q = lattice.q
    phi = lattice.flux_per_plaquette
    if lattice.periodic_x:
        # W_x target minus the interior x-link sum fixes the seam link per row.
        for iy in range(ny):
            target = phi * nx * iy
            interior = sum(ax[ix][iy] for ix in range(nx - 1))
            ax[nx - 1][iy] = (target - interior) % 1
    if lattice.periodic_y:
        for ix in range(nx):
            target = -phi * (ix % q) * ny
            interior = sum(ay[ix][iy] for iy in range(ny - 1))
            ay[ix][ny - 1] = (target - interior) % 1
    phase_x = np.array([[_phase(a) for a in row] for row in ax])
    phase_y = np.array([[_phase(a) for a in row] for row in ay])
    if not lattice.periodic_x:
        phase_x[nx - 1, :] = 1.0
    if not lattice.periodic_y:
        phase_y[:, ny - 1] = 1.0
    return GaugeField(lattice, gauge_kind, phase_x, phase_y)


def plaquette_products(gauge: GaugeField) -> np.ndarray:
    """Counterclockwise product of the four link phases of every plaquette.

    Shape is (n_plaq_x, n_plaq_y) where the plaquette count per direction is
    the site count when that direction is periodic, one less otherwise.
    Conforming gauges return exp(-2*pi*i*Phi) everywhere (to 1e-12).
    """
    lat = gauge.lattice
    px = lat.n_x if lat.periodic_x else lat.n_x - 1
    py = lat.n_y if lat.periodic_y else lat.n_y - 1
    ux = gauge.phase_x
    uy = gauge.phase_y
    right = ux[:px, :py]
    up = np.roll(uy, -1, axis=0)[:px, :py]
    left = np.conj(np.roll(ux, -1, axis=1)[:px, :py])
    down = np.conj(uy[:px, :py])
    return right * up * left * down


# ---------------------------------------------------------------------------
# region masks


@dataclass(frozen=True)
class HalfPlaneShape:
    """Region y <= level (continuum units)."""

    level: float


@dataclass(frozen=True)
class GraphShape:
    """Region y <= f(x) with f sampled on site columns of one cell.

    f_samples has length q and is extended 1-periodically in x.
    """

    f_samples: tuple

    @property
    def level_min(self) -> float:
        return float(min(self.f_samples))

    @property
    def level_max(self) -> float:
        return float(max(self.f_samples))


@dataclass(frozen=True)
class BallsShape:
    """A base shape together with a union of radius-r balls.

    Centers are explicit continuum points.  Models the half-plane decorated
    with 1/3-balls at integer x positions and a fixed height.
    """

    base: object
    radius: float
    centers: tuple


@dataclass(frozen=True)
class DiskShape:
    """Bounded disk region, |(x, y) - center| <= radius."""

    center: tuple
    radius: float


@dataclass(frozen=True)
class ExplicitShape:
    """Region given by an explicit site list; no analytic extension."""

    n_sites: int


@dataclass(frozen=True, eq=False)
class RegionMask:
    """Site membership in a region Z plus distances to its complement.

    boundary_distance is (graph distance to the complement - 1) * h in
    continuum units: it is 0 exactly on sites outside Z or with a lattice
    neighbour outside Z, and +inf when the window contains no complement
    site.  Graph distance respects the window closure (periodic wrapping
    in periodic directions).
    """

    lattice: MagneticLattice
    member: np.ndarray
    boundary_distance: np.ndarray
    descriptor: object

    @property
    def n_inside(self) -> int:
        return int(self.member.sum())

    def site_indices(self) -> np.ndarray:
        """Indices (in window order ix*n_y + iy) of the member sites."""
        return np.flatnonzero(self.member.ravel())


def _distance_to_complement(lattice: MagneticLattice, member: np.ndarray) -> np.ndarray:
    """Taxicab distance transform of `member` to its complement, in hops.

    Periodic directions are handled by tiling (exact as long as the true
    distance is below the window size, which holds for any window with a
    nonempty complement slab).
    """
    if member.all():
        return np.full(member.shape, np.inf)
    tiled = member
    ox = oy = 0
    if lattice.periodic_x:
        tiled = np.concatenate([tiled, tiled, tiled], axis=0)
        ox = lattice.n_x
    if lattice.periodic_y:
        tiled = np.concatenate([tiled, tiled, tiled], axis=1)
        oy = lattice.n_y
    dist = scipy.ndimage.distance_transform_cdt(tiled, metric="taxicab")
    dist = dist[ox:ox + lattice.n_x, oy:oy + lattice.n_y].astype(float)
    return dist


def make_mask(lattice: MagneticLattice, shape) -> RegionMask:
    """Region mask from a shape descriptor, with boundary distances."""
    nx, ny = lattice.n_x, lattice.n_y
    h = lattice.h
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    x = ix * h
    y = iy * h
    if isinstance(shape, HalfPlaneShape):
        member = y <= shape.level
    elif isinstance(shape, GraphShape):
        f = np.asarray(shape.f_samples, dtype=float)
        if len(f) != lattice.q:
            raise ValueError("GraphShape needs q samples (one cell)")
        member = y <= f[ix % lattice.q]
    elif isinstance(shape, BallsShape):
        base_mask = make_mask(lattice, shape.base)
        member = base_mask.member.copy()
        for (cx, cy) in shape.centers:
            member |= (x - cx) ** 2 + (y - cy) ** 2 <= shape.radius ** 2
    elif isinstance(shape, DiskShape):
        cx, cy = shape.center
        member = (x - cx) ** 2 + (y - cy) ** 2 <= shape.radius ** 2
    else:
        raise ValueError(f"unsupported shape descriptor: {shape!r}")
    return mask_from_member(lattice, member, shape)


def mask_from_sites(lattice: MagneticLattice, sites) -> RegionMask:
    """Mask from an explicit list of (ix, iy) site pairs."""
    member = np.zeros((lattice.n_x, lattice.n_y), bool)
    for (ix, iy) in sites:
        member[ix, iy] = True
    return mask_from_member(lattice, member, ExplicitShape(int(member.sum())))


def mask_all(lattice: MagneticLattice) -> RegionMask:
    """Trivial mask: every window site is in Z."""
    member = np.ones((lattice.n_x, lattice.n_y), bool)
    return mask_from_member(lattice, member, "all")


def mask_from_member(lattice: MagneticLattice, member: np.ndarray, descriptor) -> RegionMask:
    member = np.asarray(member, bool)
    if member.shape != (lattice.n_x, lattice.n_y):
        raise ValueError("member grid does not match the lattice window")
    hops = _distance_to_complement(lattice, member)
    bd = np.where(member, np.maximum(hops - 1.0, 0.0) * lattice.h, 0.0)
    bd = np.where(member & np.isinf(hops), np.inf, bd)
    member = member.copy()
    member.setflags(write=False)
    bd.setflags(write=False)
    return RegionMask(lattice, member, bd, descriptor)


# ---------------------------------------------------------------------------
# operators


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Banded Hermitian matrix over lattice sites.

    matrix is CSR complex128 with sorted indices; it equals its conjugate
    transpose exactly because every off-diagonal pair is written as
    (value, conj(value)) during assembly.  sites[i] is the (ix, iy) pair of
    row i; ids maps window coordinates back to rows (-1 where absent).
    """

    matrix: sp.csr_matrix
    sites: np.ndarray
    ids: np.ndarray
    h: float
    hop_range: int
    provenance: dict

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self):
        return self.matrix.shape

    def gershgorin(self) -> tuple[float, float]:
        """Interval containing the spectrum (row-sum bound)."""
        m = self.matrix
        d = m.diagonal().real
        absm = sp.csr_matrix((np.abs(m.data), m.indices, m.indptr), shape=m.shape)
        absrow = np.asarray(absm.sum(axis=1)).ravel()
        off = absrow - np.abs(m.diagonal())
        return float((d - off).min()), float((d + off).max())

    def adjacency(self) -> sp.csr_matrix:
        """0/1 pattern of the off-diagonal entries (the hopping graph)."""
        m = self.matrix.copy().tolil()
        m.setdiag(0)
        m = m.tocsr()
        m.eliminate_zeros()
        return sp.csr_matrix((np.ones(len(m.data)), m.indices, m.indptr),
                             shape=m.shape)


def _window_links(lattice: MagneticLattice, gauge: GaugeField):
    """Directed +x and +y links of the window as (from_ix, from_iy, to_ix, to_iy, phase)."""
    nx, ny = lattice.n_x, lattice.n_y
    links = []
    lim_x = nx if lattice.periodic_x else nx - 1
    lim_y = ny if lattice.periodic_y else ny - 1
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    # +x links
    m = ix < lim_x
    links.append((ix[m], iy[m], (ix[m] + 1) % nx, iy[m], gauge.phase_x[ix[m], iy[m]]))
    # +y links
    m = iy < lim_y
    links.append((ix[m], iy[m], ix[m], (iy[m] + 1) % ny, gauge.phase_y[ix[m], iy[m]]))
    return links


def _assemble(lattice: MagneticLattice, gauge: GaugeField, member: np.ndarray | None,
              provenance: dict) -> HermitianOperator:
    """Covariant 5-point stencil on the member sites (Dirichlet drop outside).

    (H psi)(v) = h^-2 sum_{e: v->u} (psi(v) - U(e) psi(u)) - 4 pi k psi(v)
               + W(v) psi(v),
    where the edge sum runs over the four window edges at v regardless of the
    mask: the restricted operator is the principal submatrix of the window
    stencil, so the diagonal stays 4 h^-2 - 4 pi k + W(v).
    """
    nx, ny = lattice.n_x, lattice.n_y
    if member is None:
        member = np.ones((nx, ny), bool)
    ids = -np.ones((nx, ny), dtype=np.int64)
    flat = np.flatnonzero(member.ravel())
    if flat.size == 0:
        raise EmptyRegion("region mask selects no lattice site")
    ids.ravel()[flat] = np.arange(flat.size)
    sites = np.column_stack([flat // ny, flat % ny])

    hi2 = float(lattice.q) ** 2
    diag = (4.0 * hi2 - 4.0 * np.pi * lattice.k
            + lattice.potential[sites[:, 0] % lattice.q, sites[:, 1] % lattice.q])

    rows = [np.arange(flat.size)]
    cols = [np.arange(flat.size)]
    vals = [diag.astype(complex)]
    for (fx, fy, tx, ty, ph) in _window_links(lattice, gauge):
        a = ids[fx, fy]
        b = ids[tx, ty]
        keep = (a >= 0) & (b >= 0)
        a, b, p = a[keep], b[keep], ph[keep]
        v = -hi2 * p
        rows.append(a); cols.append(b); vals.append(v)
        rows.append(b); cols.append(a); vals.append(np.conj(v))
    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(flat.size, flat.size))
    matrix.sum_duplicates()
    matrix.sort_indices()
    ids.setflags(write=False)
    sites.setflags(write=False)
    return HermitianOperator(matrix, sites, ids, lattice.h, 1, provenance)


def assemble_bulk(lattice: MagneticLattice, gauge: GaugeField) -> HermitianOperator:
    """Bulk operator on the magnetic-periodic torus."""
    if lattice.geometry != "torus":
        raise NonTorusGeometry(f"assemble_bulk needs torus geometry, got {lattice.geometry}")
    prov = {"lattice": lattice, "gauge_kind": gauge.gauge_kind, "mask": None,
            "shift": -4.0 * np.pi * lattice.k}
    return _assemble(lattice, gauge, None, prov)


def assemble_restricted(lattice: MagneticLattice, gauge: GaugeField,
                        mask: RegionMask) -> HermitianOperator:
    """Dirichlet restriction to the mask: principal submatrix of the window stencil."""
    prov = {"lattice": lattice, "gauge_kind": gauge.gauge_kind,
            "mask": mask.descriptor, "shift": -4.0 * np.pi * lattice.k}
    return _assemble(lattice, gauge, mask.member, prov)


def gauge_transform(op: HermitianOperator, phases) -> HermitianOperator:
    """Conjugate U* H U with U = diag(phases); same sites and hop range.

    phases is either an array over the operator's rows or a map
    (ix, iy) -> unit complex defined on every site (MissingPhase otherwise).
    Phases are normalized to unit modulus; the (real) diagonal is left
    untouched and the off-diagonal pairs are written as exact conjugates,
    so the result is exactly Hermitian.
    """
    n = op.dimension
    if isinstance(phases, dict):
        p = np.empty(n, complex)
        for i, (ix, iy) in enumerate(op.sites):
            key = (int(ix), int(iy))
            if key not in phases:
                raise MissingPhase(f"no phase for site {key}")
            p[i] = phases[key]
    else:
        p = np.asarray(phases, complex)
        if p.shape != (n,):
            raise MissingPhase(f"phase array has shape {p.shape}, expected ({n},)")
    mod = np.abs(p)
    if np.any(mod == 0):
        raise MissingPhase("zero modulus phase")
    p = p / mod

    coo = op.matrix.tocoo()
    upper = coo.row < coo.col
    r, c, d = coo.row[upper], coo.col[upper], coo.data[upper]
    new = np.conj(p[r]) * d * p[c]
    rows = np.concatenate([r, c, np.arange(n)])
    cols = np.concatenate([c, r, np.arange(n)])
    vals = np.concatenate([new, np.conj(new), op.matrix.diagonal()])
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    matrix.sum_duplicates()
    matrix.sort_indices()
    prov = dict(op.provenance)
    prov["gauge_transformed"] = True
    return HermitianOperator(matrix, op.sites, op.ids, op.h, op.hop_range, prov)


def export_triplets(op: HermitianOperator, path) -> None:
    """Sparse triplet CSV (row, col, re, im) for cross-checking elsewhere."""
    coo = op.matrix.tocoo()
    with open(path, "w") as fh:
        fh.write("row,col,re,im\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r},{c},{v.real:.17g},{v.imag:.17g}\n")
