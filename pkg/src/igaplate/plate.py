"""Mixed displacement-shear Reissner-Mindlin plate discretisation.

Fields and approximation orders: deflection w and rotations Theta use the
(refined) geometry space of degree (p, p); the two shear-force components
use selectively reduced degrees (p-1, p) and (p, p-1) on the derivative
knot vectors.

Two integration schemes are supported.  'galerkin' integrates every block
with the physical measure (saddle-point form).  'weighted' integrates the
shear-test rows with kappa*G*t * W^2 against the parametric measure, which
makes the shear-shear block a weighted Gram matrix in parameter space; that
is the form whose dual transform lumps to the identity.  In both schemes
the shear rows are normalised (multiplied by -1 relative to the plain weak
form) so the shear-shear block is symmetric positive definite and the
condensed operator reads K_dd - sum_a K_dSa * inv(K_SaSa) * K_Sad.

DOF order: all w, then rotations (2 per control point), then S1, then S2.
Bivariate index ordering is k = i*m + j with i along xi.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sparse import build_csr
from .splines import (
    KnotVector,
    SplineError,
    SurfacePatch,
    elevate_degree,
    eval_basis_1d,
    insert_knots,
    validate_knot_vector,
)
from .duals import reduce_continuity


class InvalidMaterial(Exception):
    pass


class DegreeTooLow(SplineError):
    pass


class DegenerateJacobian(SplineError):
    pass


@dataclass(frozen=True)
class PlateMaterial:
    """Isotropic plate material with derived bending/shear matrices."""

    e_mod: float
    nu: float
    t: float
    kappa: float

    @property
    def g_mod(self) -> float:
        return self.e_mod / (2.0 * (1.0 + self.nu))

    @property
    def kgt(self) -> float:
        """Shear stiffness kappa * G * t (D_S = kgt * I2)."""
        return self.kappa * self.g_mod * self.t

    @property
    def d_bend(self) -> np.ndarray:
        fac = self.e_mod * self.t**3 / (12.0 * (1.0 - self.nu**2))
        return fac * np.array(
            [[1.0, self.nu, 0.0], [self.nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - self.nu)]]
        )


def material(e_mod: float, nu: float, t: float, kappa: float = 5.0 / 6.0) -> PlateMaterial:
    if e_mod <= 0 or t <= 0 or not (-1.0 < nu < 0.5) or kappa <= 0:
        raise InvalidMaterial(f"invalid material E={e_mod}, nu={nu}, t={t}, kappa={kappa}")
    return PlateMaterial(e_mod=float(e_mod), nu=float(nu), t=float(t), kappa=float(kappa))


@dataclass(frozen=True)
class Space2D:
    """One discretised scalar field: tensor knot vectors plus optional weights."""

    kv_u: KnotVector
    kv_v: KnotVector
    weights: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.kv_u.n, self.kv_v.n

    @property
    def ndof(self) -> int:
        return self.kv_u.n * self.kv_v.n


@dataclass(frozen=True)
class FieldSpaces:
    """All field spaces for one patch, plus the refined geometry.

    Degrees may differ per direction when the geometry starts above the
    requested degree; the shear spaces are always reduced by one in their
    own direction.
    """

    patch: SurfacePatch  # refined geometry (also the w/Theta space)
    disp: Space2D
    s1: Space2D  # degrees (pu-1, pv)
    s2: Space2D  # degrees (pu, pv-1)
    degree: int  # requested degree
    level: int

    @property
    def degrees(self) -> tuple[int, int]:
        return self.disp.kv_u.degree, self.disp.kv_v.degree

    @property
    def n_disp_points(self) -> int:
        return self.disp.ndof

    @property
    def nd(self) -> int:
        return 3 * self.disp.ndof


def _derivative_knots(kv: KnotVector) -> KnotVector:
    """Knot vector of the derivative space: degree p-1, end knots dropped once."""
    return validate_knot_vector(kv.values[1:-1], kv.degree - 1)


def _missing_knots(kv: KnotVector, kv_target: KnotVector) -> list[float]:
    """Interior knots (with multiplicity) present in kv_target but not kv."""
    out = []
    vals, counts = np.unique(kv_target.values, return_counts=True)
    for x, c in zip(vals, counts):
        have = int(np.sum(np.abs(kv.values - x) < 1e-14))
        out.extend([float(x)] * max(0, c - have))
    return out


def _dyadic_knots(kv: KnotVector, level: int) -> list[float]:
    new = []
    for _, a, b in kv.spans():
        k = 2**level
        for s in range(1, k):
            new.append(a + (b - a) * s / k)
    return new


def _weight_samples(patch: SurfacePatch, kv_u: KnotVector, kv_v: KnotVector) -> np.ndarray:
    """Geometry weight function sampled at the Greville grid of a shear space."""
    if np.all(patch.net.weights == 1.0):
        return np.ones((kv_u.n, kv_v.n))
    gu, gv = kv_u.greville(), kv_v.greville()
    p, q = patch.degrees
    w = np.empty((len(gu), len(gv)))
    for a, x in enumerate(gu):
        bu = eval_basis_1d(patch.knots_u, float(x))
        for b, y in enumerate(gv):
            bv = eval_basis_1d(patch.knots_v, float(y))
            wloc = patch.net.weights[
                bu.first : bu.first + p + 1, bv.first : bv.first + q + 1
            ]
            w[a, b] = float(np.outer(bu.values, bv.values).ravel() @ wloc.ravel())
    return w


def build_field_spaces(
    patch: SurfacePatch,
    target_p: int,
    level: int = 0,
    continuity_reduction: bool = False,
    reduce_mode: str = "preserve_C0",
    shear_weighting: str = "nurbs",
) -> FieldSpaces:
    """k-refine the coarse geometry and derive the four field spaces.

    Continuity reduction (when requested) is applied to the coarse knot
    vectors before elevation and knot insertion, so the reduced smoothness
    survives refinement.
    """
    p0, q0 = patch.degrees
    if target_p < 2:
        raise DegreeTooLow("mixed plate spaces need degree >= 2")
    if shear_weighting not in ("nurbs", "bspline"):
        raise ValueError(f"unknown shear weighting {shear_weighting!r}")
    # geometry degrees can exceed the requested one; never lower them
    pu = max(target_p, p0)
    pv = max(target_p, q0)

    work = patch
    if continuity_reduction:
        ins_u = _missing_knots(work.knots_u, reduce_continuity(work.knots_u, reduce_mode))
        ins_v = _missing_knots(work.knots_v, reduce_continuity(work.knots_v, reduce_mode))
        if ins_u or ins_v:
            work = insert_knots(work, ins_u, ins_v)
    work = elevate_degree(work, pu - work.knots_u.degree, pv - work.knots_v.degree)
    if level > 0:
        work = insert_knots(work, _dyadic_knots(work.knots_u, level), _dyadic_knots(work.knots_v, level))

    disp = Space2D(work.knots_u, work.knots_v, work.net.weights)
    kv_u_s = _derivative_knots(work.knots_u)
    kv_v_s = _derivative_knots(work.knots_v)
    w1 = w2 = None
    if shear_weighting == "nurbs":
        w1 = _weight_samples(work, kv_u_s, work.knots_v)
        w2 = _weight_samples(work, work.knots_u, kv_v_s)
    s1 = Space2D(kv_u_s, work.knots_v, w1)
    s2 = Space2D(work.knots_u, kv_v_s, w2)
    return FieldSpaces(patch=work, disp=disp, s1=s1, s2=s2, degree=target_p, level=level)


# ---------------------------------------------------------------------------
# quadrature tables and element data
# ---------------------------------------------------------------------------


def _dir_tables(kv: KnotVector, pts_per_span: np.ndarray, nderiv: int):
    """Basis (and derivative) tables per span: (nspan, nq, deg+1)."""
    nspan, nq = pts_per_span.shape
    first = np.empty(nspan, dtype=int)
    vals = np.empty((nspan, nq, nderiv + 1, kv.degree + 1))
    for s in range(nspan):
        for q in range(nq):
            be = eval_basis_1d(kv, float(pts_per_span[s, q]), nderiv)
            vals[s, q] = be.ders
        first[s] = eval_basis_1d(kv, float(pts_per_span[s, 0]), 0).first
    return first, vals


class PatchDiscretization:
    """Per-patch quadrature grid and basis tables for assembly."""

    def __init__(self, spaces: FieldSpaces, nq: int | None = None):
        self.spaces = spaces
        self.nq1 = int(nq) if nq else max(spaces.degrees) + 1

        xg, wg = np.polynomial.legendre.leggauss(self.nq1)
        self.spans_u = spaces.disp.kv_u.spans()
        self.spans_v = spaces.disp.kv_v.spans()
        su1 = spaces.s1.kv_u.spans()
        sv2 = spaces.s2.kv_v.spans()
        if len(su1) != len(self.spans_u) or len(sv2) != len(self.spans_v):
            raise SplineError("shear spaces must share the displacement breakpoints")

        def grid(spans):
            pts = np.empty((len(spans), self.nq1))
            wts = np.empty((len(spans), self.nq1))
            for s, (_, a, b) in enumerate(spans):
                h = 0.5 * (b - a)
                pts[s] = 0.5 * (a + b) + h * xg
                wts[s] = h * wg
            return pts, wts

        self.pts_u, self.wts_u = grid(self.spans_u)
        self.pts_v, self.wts_v = grid(self.spans_v)

        self.first_du, self.tab_du = _dir_tables(spaces.disp.kv_u, self.pts_u, 1)
        self.first_dv, self.tab_dv = _dir_tables(spaces.disp.kv_v, self.pts_v, 1)
        self.first_1u, self.tab_1u = _dir_tables(spaces.s1.kv_u, self.pts_u, 0)
        self.first_2v, self.tab_2v = _dir_tables(spaces.s2.kv_v, self.pts_v, 0)

        self.n_elem_u = len(self.spans_u)
        self.n_elem_v = len(self.spans_v)
        self.unit_weights = bool(np.all(spaces.patch.net.weights == 1.0))

    @property
    def n_elems(self) -> int:
        return self.n_elem_u * self.n_elem_v

    def elements(self):
        for eu in range(self.n_elem_u):
            for ev in range(self.n_elem_v):
                yield eu, ev

    def element_context(self, eu: int, ev: int) -> dict:
        """Geometry, basis values and quadrature data of one element."""
        spaces = self.spaces
        pu, pv = spaces.degrees
        net = spaces.patch.net

        n_u = self.tab_du[eu, :, 0, :]  # (nq, pu+1)
        d_u = self.tab_du[eu, :, 1, :]
        n_v = self.tab_dv[ev, :, 0, :]
        d_v = self.tab_dv[ev, :, 1, :]
        iu0 = int(self.first_du[eu])
        iv0 = int(self.first_dv[ev])

        wloc = net.weights[iu0 : iu0 + pu + 1, iv0 : iv0 + pv + 1]
        ploc = net.points[iu0 : iu0 + pu + 1, iv0 : iv0 + pv + 1, :2]

        nn = n_u[:, None, :, None] * n_v[None, :, None, :]
        nn_xi = d_u[:, None, :, None] * n_v[None, :, None, :]
        nn_eta = n_u[:, None, :, None] * d_v[None, :, None, :]
        if self.unit_weights:
            w_q = np.ones(nn.shape[:2])
            r = nn
            r_xi = nn_xi
            r_eta = nn_eta
        else:
            w_q = np.tensordot(nn, wloc, axes=([2, 3], [0, 1]))
            w_xi = np.tensordot(nn_xi, wloc, axes=([2, 3], [0, 1]))
            w_eta = np.tensordot(nn_eta, wloc, axes=([2, 3], [0, 1]))
            r = nn * wloc / w_q[..., None, None]
            r_xi = (nn_xi * wloc - r * w_xi[..., None, None]) / w_q[..., None, None]
            r_eta = (nn_eta * wloc - r * w_eta[..., None, None]) / w_q[..., None, None]

        xy = np.tensordot(r, ploc, axes=([2, 3], [0, 1]))
        jac = np.empty(nn.shape[:2] + (2, 2))
        jac[..., :, 0] = np.tensordot(r_xi, ploc, axes=([2, 3], [0, 1]))
        jac[..., :, 1] = np.tensordot(r_eta, ploc, axes=([2, 3], [0, 1]))
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        if np.any(det <= 0):
            raise DegenerateJacobian(
                f"non-positive Jacobian determinant in element ({eu}, {ev})"
            )

        # push parametric gradients to physical ones via inv(J)^T
        inv_det = 1.0 / det
        gx = inv_det[..., None, None] * (
            jac[..., 1, 1, None, None] * r_xi - jac[..., 1, 0, None, None] * r_eta
        )
        gy = inv_det[..., None, None] * (
            -jac[..., 0, 1, None, None] * r_xi + jac[..., 0, 0, None, None] * r_eta
        )

        nq2 = nn.shape[0] * nn.shape[1]
        nloc = (pu + 1) * (pv + 1)
        w_param = np.multiply.outer(self.wts_u[eu], self.wts_v[ev]).ravel()

        # shear space 1: reduced in xi
        o1u = int(self.first_1u[eu])
        t1u = self.tab_1u[eu, :, 0, :]
        n1 = (t1u[:, None, :, None] * n_v[None, :, None, :]).reshape(nq2, -1)
        # shear space 2: reduced in eta
        o2v = int(self.first_2v[ev])
        t2v = self.tab_2v[ev, :, 0, :]
        n2 = (n_u[:, None, :, None] * t2v[None, :, None, :]).reshape(nq2, -1)

        ctx = {
            "r": r.reshape(nq2, nloc),
            "gx": gx.reshape(nq2, nloc),
            "gy": gy.reshape(nq2, nloc),
            "xy": xy.reshape(nq2, 2),
            "det": det.ravel(),
            "w_geom": w_q.ravel(),
            "w_param": w_param,
            "n1": n1,
            "n2": n2,
            "iu0": iu0,
            "iv0": iv0,
            "o1u": o1u,
            "o2v": o2v,
        }

        # rational shear bases when the shear spaces carry weights
        for key, space, (ou, ov), tab in (
            ("n1", spaces.s1, (o1u, iv0), None),
            ("n2", spaces.s2, (iu0, o2v), None),
        ):
            if space.weights is not None and not np.all(space.weights == 1.0):
                deg_u = space.kv_u.degree
                deg_v = space.kv_v.degree
                wl = space.weights[ou : ou + deg_u + 1, ov : ov + deg_v + 1]
                vals = ctx[key].reshape(nq2, deg_u + 1, deg_v + 1)
                num = vals * wl
                den = num.sum(axis=(1, 2))
                ctx[key] = (num / den[:, None, None]).reshape(nq2, -1)
        return ctx

    def element_dofs(self, eu: int, ev: int, ctx: dict):
        """Global (patch-local) DOF index arrays for one element."""
        spaces = self.spaces
        pu, pv = spaces.degrees
        _, mv = spaces.disp.shape
        nw = spaces.disp.ndof
        iu0, iv0 = ctx["iu0"], ctx["iv0"]
        gi = np.add.outer((iu0 + np.arange(pu + 1)) * mv, iv0 + np.arange(pv + 1)).ravel()
        d_idx = np.concatenate([gi, nw + np.stack([2 * gi, 2 * gi + 1], axis=1).ravel()])
        m1 = spaces.s1.kv_v.n
        s1_idx = np.add.outer(
            (ctx["o1u"] + np.arange(spaces.s1.kv_u.degree + 1)) * m1,
            iv0 + np.arange(pv + 1),
        ).ravel()
        m2 = spaces.s2.kv_v.n
        s2_idx = np.add.outer(
            (iu0 + np.arange(pu + 1)) * m2,
            ctx["o2v"] + np.arange(spaces.s2.kv_v.degree + 1),
        ).ravel()
        return gi, d_idx, s1_idx, s2_idx


@dataclass
class ElementMatrices:
    """Blocks of one element in the normalised sign convention."""

    k_dd: np.ndarray
    k_ds1: np.ndarray
    k_ds2: np.ndarray
    k_s1d: np.ndarray
    k_s2d: np.ndarray
    k_s11: np.ndarray
    k_s22: np.ndarray
    f_w: np.ndarray
    d_idx: np.ndarray
    w_idx: np.ndarray
    s1_idx: np.ndarray
    s2_idx: np.ndarray


def element_matrices(
    disc: PatchDiscretization,
    mat: PlateMaterial,
    scheme: str,
    elem: tuple[int, int],
    load=None,
) -> ElementMatrices:
    """Integrate the mixed blocks of one element.

    scheme='galerkin' uses the physical measure everywhere; scheme='weighted'
    integrates the shear rows with kappa*G*t * W^2 against the parametric
    measure.  Shear rows carry the normalising -1.
    """
    if scheme not in ("galerkin", "weighted"):
        raise ValueError(f"unknown scheme {scheme!r}")
    eu, ev = elem
    ctx = disc.element_context(eu, ev)
    gi, d_idx, s1_idx, s2_idx = disc.element_dofs(eu, ev, ctx)

    r, gx, gy = ctx["r"], ctx["gx"], ctx["gy"]
    n1, n2 = ctx["n1"], ctx["n2"]
    nloc = r.shape[1]
    w_phys = ctx["w_param"] * ctx["det"]

    d_m = mat.d_bend
    kgt = mat.kgt

    # bending block on the rotation DOFs
    b = np.zeros((r.shape[0], 3, 2 * nloc))
    b[:, 0, 0::2] = gx
    b[:, 1, 1::2] = gy
    b[:, 2, 0::2] = gy
    b[:, 2, 1::2] = gx
    bw = b * w_phys[:, None, None]
    k_theta = np.tensordot(np.tensordot(bw, d_m, axes=([1], [0])), b, axes=([0, 2], [0, 1]))
    k_dd = np.zeros((3 * nloc, 3 * nloc))
    k_dd[nloc:, nloc:] = k_theta

    def d_rows(block_w, block_t1, block_t2):
        out = np.zeros((3 * nloc, block_w.shape[1]))
        out[:nloc] = block_w
        out[nloc::2] = block_t1
        out[nloc + 1 :: 2] = block_t2
        return out

    # displacement rows of the coupling blocks (physical measure)
    rw = r * w_phys[:, None]
    k_ds1 = d_rows(
        (gx * w_phys[:, None]).T @ n1,
        -rw.T @ n1,
        np.zeros((nloc, n1.shape[1])),
    )
    k_ds2 = d_rows(
        (gy * w_phys[:, None]).T @ n2,
        np.zeros((nloc, n2.shape[1])),
        -rw.T @ n2,
    )

    if scheme == "weighted":
        # with B-spline shear interpolation the geometry-weight factor is
        # dropped, which makes the shear block an exact parametric Gram
        if disc.spaces.s1.weights is None:
            w_shear = ctx["w_param"]
        else:
            w_shear = ctx["w_param"] * ctx["w_geom"] ** 2
        row_fac = kgt
        ss_fac = 1.0
    else:
        w_shear = w_phys
        row_fac = 1.0
        ss_fac = 1.0 / kgt

    # shear rows, normalised sign: -(S-d coupling), +(S-S Gram)
    n1w = n1 * w_shear[:, None]
    n2w = n2 * w_shear[:, None]
    k_s1d = np.zeros((n1.shape[1], 3 * nloc))
    k_s1d[:, :nloc] = -row_fac * (n1w.T @ gx)
    k_s1d[:, nloc::2] = row_fac * (n1w.T @ r)
    k_s2d = np.zeros((n2.shape[1], 3 * nloc))
    k_s2d[:, :nloc] = -row_fac * (n2w.T @ gy)
    k_s2d[:, nloc + 1 :: 2] = row_fac * (n2w.T @ r)

    k_s11 = ss_fac * (n1w.T @ n1)
    k_s22 = ss_fac * (n2w.T @ n2)

    if load is None:
        f_w = np.zeros(nloc)
    else:
        fv = np.asarray(load(ctx["xy"][:, 0], ctx["xy"][:, 1]), dtype=float)
        f_w = r.T @ (fv * w_phys)

    return ElementMatrices(
        k_dd=k_dd,
        k_ds1=k_ds1,
        k_ds2=k_ds2,
        k_s1d=k_s1d,
        k_s2d=k_s2d,
        k_s11=k_s11,
        k_s22=k_s22,
        f_w=f_w,
        d_idx=d_idx,
        w_idx=gi,
        s1_idx=s1_idx,
        s2_idx=s2_idx,
    )


@dataclass
class MixedSystem:
    """Block-sparse mixed system; shear blocks are kept per patch.

    Displacement DOFs may be shared across patches (multi-patch assembly);
    shear DOFs are always patch-local, so K_S1-S2 couplings and cross-patch
    shear couplings are structurally absent.
    """

    k_dd: sp.csr_matrix
    k_ds1: list
    k_ds2: list
    k_s1d: list
    k_s2d: list
    k_s11: list
    k_s22: list
    f_d: np.ndarray
    scheme: str
    spaces: list
    boundary_d: np.ndarray
    nd_full: int
    free_d: np.ndarray | None = None  # set after BC elimination
    transformed: bool = False  # shear rows pre-multiplied by dual transforms

    @property
    def nd(self) -> int:
        return self.k_dd.shape[0]

    @property
    def ns(self) -> int:
        return int(sum(k.shape[0] for k in self.k_s11) + sum(k.shape[0] for k in self.k_s22))

    @property
    def n_patches(self) -> int:
        return len(self.k_s11)

    def monolithic(self) -> tuple[sp.csr_matrix, np.ndarray]:
        """Full saddle matrix with DOF order d, S1 (per patch), S2 (per patch)."""
        np_ = self.n_patches
        nblk = 1 + 2 * np_
        blocks = [[None] * nblk for _ in range(nblk)]
        blocks[0][0] = self.k_dd
        for p in range(np_):
            blocks[0][1 + p] = self.k_ds1[p]
            blocks[0][1 + np_ + p] = self.k_ds2[p]
            blocks[1 + p][0] = self.k_s1d[p]
            blocks[1 + np_ + p][0] = self.k_s2d[p]
            blocks[1 + p][1 + p] = self.k_s11[p]
            blocks[1 + np_ + p][1 + np_ + p] = self.k_s22[p]
        a = sp.bmat(blocks, format="csr")
        rhs = np.concatenate([self.f_d, np.zeros(self.ns)])
        return a, rhs


def boundary_point_ids(space: Space2D) -> np.ndarray:
    """Control-point ids on the patch boundary (first/last row/column)."""
    n, m = space.shape
    ids = set()
    for i in (0, n - 1):
        ids.update(i * m + j for j in range(m))
    for j in (0, m - 1):
        ids.update(i * m + j for i in range(n))
    return np.array(sorted(ids), dtype=int)


def _d_indices_of_points(pts: np.ndarray, nw: int) -> np.ndarray:
    return np.concatenate([pts, nw + 2 * pts, nw + 2 * pts + 1])


def assemble(
    disc: PatchDiscretization,
    mat: PlateMaterial,
    scheme: str,
    load=None,
) -> MixedSystem:
    """Assemble the patch-local mixed system from its element matrices."""
    spaces = disc.spaces
    nd = spaces.nd
    ns1 = spaces.s1.ndof
    ns2 = spaces.s2.ndof

    tr = {k: ([], [], []) for k in ("dd", "ds1", "ds2", "s1d", "s2d", "s11", "s22")}
    f_d = np.zeros(nd)

    def add(key, rows, cols, block):
        r, c, v = tr[key]
        r.append(np.repeat(rows, len(cols)))
        c.append(np.tile(cols, len(rows)))
        v.append(block.ravel())

    for elem in disc.elements():
        em = element_matrices(disc, mat, scheme, elem, load)
        add("dd", em.d_idx, em.d_idx, em.k_dd)
        add("ds1", em.d_idx, em.s1_idx, em.k_ds1)
        add("ds2", em.d_idx, em.s2_idx, em.k_ds2)
        add("s1d", em.s1_idx, em.d_idx, em.k_s1d)
        add("s2d", em.s2_idx, em.d_idx, em.k_s2d)
        add("s11", em.s1_idx, em.s1_idx, em.k_s11)
        add("s22", em.s2_idx, em.s2_idx, em.k_s22)
        np.add.at(f_d, em.w_idx, em.f_w)

    def mat_of(key, shape):
        r, c, v = tr[key]
        return build_csr(shape, np.concatenate(r), np.concatenate(c), np.concatenate(v))

    nw = spaces.disp.ndof
    boundary = _d_indices_of_points(boundary_point_ids(spaces.disp), nw)
    return MixedSystem(
        k_dd=mat_of("dd", (nd, nd)),
        k_ds1=[mat_of("ds1", (nd, ns1))],
        k_ds2=[mat_of("ds2", (nd, ns2))],
        k_s1d=[mat_of("s1d", (ns1, nd))],
        k_s2d=[mat_of("s2d", (ns2, nd))],
        k_s11=[mat_of("s11", (ns1, ns1))],
        k_s22=[mat_of("s22", (ns2, ns2))],
        f_d=f_d,
        scheme=scheme,
        spaces=[spaces],
        boundary_d=np.sort(boundary),
        nd_full=nd,
    )


def apply_clamped_bc(system: MixedSystem) -> tuple[MixedSystem, dict]:
    """Eliminate all boundary w/Theta DOFs (clamped edge); shear stays free."""
    if system.free_d is not None:
        raise ValueError("boundary conditions already applied")
    mask = np.ones(system.nd_full, dtype=bool)
    mask[system.boundary_d] = False
    free = np.flatnonzero(mask)

    constrained = MixedSystem(
        k_dd=system.k_dd[np.ix_(free, free)].tocsr(),
        k_ds1=[m[free] for m in system.k_ds1],
        k_ds2=[m[free] for m in system.k_ds2],
        k_s1d=[m[:, free] for m in system.k_s1d],
        k_s2d=[m[:, free] for m in system.k_s2d],
        k_s11=list(system.k_s11),
        k_s22=list(system.k_s22),
        f_d=system.f_d[free],
        scheme=system.scheme,
        spaces=system.spaces,
        boundary_d=system.boundary_d,
        nd_full=system.nd_full,
        free_d=free,
        transformed=system.transformed,
    )
    report = {
        "n_fixed": int(len(system.boundary_d)),
        "n_free_d": int(len(free)),
        "fixed": system.boundary_d,
    }
    return constrained, report


def expand_displacement(system: MixedSystem, d_free: np.ndarray) -> np.ndarray:
    """Scatter the free solution back into the full d vector (zeros on the boundary)."""
    full = np.zeros(system.nd_full)
    full[system.free_d] = d_free
    return full


# ---------------------------------------------------------------------------
# primal (purely displacement-based) formulation
# ---------------------------------------------------------------------------


def assemble_primal(
    disc: PatchDiscretization,
    mat: PlateMaterial,
    load=None,
) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
    """Standard irreducible form: bending plus kappa*G*t shear penalty.

    Returns (K, f, boundary_d) in the same d DOF numbering as the mixed
    system.
    """
    spaces = disc.spaces
    nd = spaces.nd
    rows, cols, vals = [], [], []
    f = np.zeros(nd)
    d_m = mat.d_bend
    kgt = mat.kgt

    for elem in disc.elements():
        eu, ev = elem
        ctx = disc.element_context(eu, ev)
        gi, d_idx, _, _ = disc.element_dofs(eu, ev, ctx)
        r, gx, gy = ctx["r"], ctx["gx"], ctx["gy"]
        nloc = r.shape[1]
        w_phys = ctx["w_param"] * ctx["det"]

        b = np.zeros((r.shape[0], 3, 2 * nloc))
        b[:, 0, 0::2] = gx
        b[:, 1, 1::2] = gy
        b[:, 2, 0::2] = gy
        b[:, 2, 1::2] = gx
        bw = b * w_phys[:, None, None]
        k_theta = np.tensordot(
            np.tensordot(bw, d_m, axes=([1], [0])), b, axes=([0, 2], [0, 1])
        )

        bs = np.zeros((r.shape[0], 2, 3 * nloc))
        bs[:, 0, :nloc] = gx
        bs[:, 1, :nloc] = gy
        bs[:, 0, nloc::2] = -r
        bs[:, 1, nloc + 1 :: 2] = -r
        bsw = bs * w_phys[:, None, None]
        k_e = kgt * np.tensordot(bsw, bs, axes=([0, 1], [0, 1]))
        k_e[nloc:, nloc:] += k_theta

        rows.append(np.repeat(d_idx, len(d_idx)))
        cols.append(np.tile(d_idx, len(d_idx)))
        vals.append(k_e.ravel())
        if load is not None:
            fv = np.asarray(load(ctx["xy"][:, 0], ctx["xy"][:, 1]), dtype=float)
            np.add.at(f, gi, r.T @ (fv * w_phys))

    k = build_csr((nd, nd), np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
    nw = spaces.disp.ndof
    boundary = np.sort(_d_indices_of_points(boundary_point_ids(spaces.disp), nw))
    return k, f, boundary
