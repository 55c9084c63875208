"""Petrov-Galerkin dual transform, row-sum lumping and static condensation.

Formulation variants:
  std  - purely displacement-based solve (bending + shear penalty)
  mxd  - mixed saddle-point system, monolithic direct solve
  lmp  - mixed system with plain row-sum lumping of the shear blocks
  ad   - dual-transformed shear rows, lumping to the identity
  ead  - like ad but with enhanced dual transforms for limited continuity

The shear rows are kept in the normalised sign convention (see plate.py),
so the condensed operator is K_dd - sum_a K_dSa X_a with X_a the
(transformed / diagonally scaled / exactly solved) shear-to-displacement
coupling, and shear recovery reads S_a = -X_a d.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .duals import DimensionMismatch, DualTransform2D, dual_transform_1d, dual_transform_2d
from .multipatch import (
    PatchAssembly,
    assemble_multipatch,
    assemble_primal_multipatch,
    build_dof_map,
    single_patch_assembly,
)
from .plate import (
    MixedSystem,
    PatchDiscretization,
    apply_clamped_bc,
    build_field_spaces,
    material,
)
from .sparse import DirectSolver, nnz_and_bandwidth
from .splines import SurfacePatch


class SingularShearBlock(Exception):
    pass


class NonPositiveDiagonal(Exception):
    pass


VARIANTS = ("std", "mxd", "lmp", "ad", "ead")


@dataclass(frozen=True)
class SolveConfig:
    """One solver run: variant, refinement and model parameters."""

    variant: str
    degree: int
    level: int
    thickness: float
    shear_weighting: str = "nurbs"
    continuity_reduction: bool | None = None  # None: on for ad/ead, off otherwise
    reduce_mode: str = "preserve_C0"
    e_mod: float = 10000.0
    nu: float = 0.3
    kappa: float = 5.0 / 6.0
    nq: int | None = None
    estimate_condition: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; pick one of {VARIANTS}")

    @property
    def reduction(self) -> bool:
        if self.continuity_reduction is None:
            return self.variant in ("ad", "ead")
        return self.continuity_reduction

    @property
    def scheme(self) -> str:
        return "galerkin" if self.variant == "mxd" else "weighted"

    def make_material(self):
        return material(self.e_mod, self.nu, self.thickness, self.kappa)


@dataclass
class ProblemContext:
    """Refined spaces, discretisations and the unified DOF map."""

    coarse: PatchAssembly
    refined: PatchAssembly
    spaces: list
    discs: list
    config: SolveConfig


def prepare_problem(assembly: PatchAssembly | SurfacePatch, config: SolveConfig) -> ProblemContext:
    if isinstance(assembly, SurfacePatch):
        assembly = single_patch_assembly(assembly)
    spaces = [
        build_field_spaces(
            patch,
            config.degree,
            config.level,
            continuity_reduction=config.reduction,
            reduce_mode=config.reduce_mode,
            shear_weighting=config.shear_weighting,
        )
        for patch in assembly.patches
    ]
    refined = build_dof_map([s.patch for s in spaces])
    discs = [PatchDiscretization(s, nq=config.nq) for s in spaces]
    return ProblemContext(
        coarse=assembly, refined=refined, spaces=spaces, discs=discs, config=config
    )


def assemble_mixed(ctx: ProblemContext, mat, load=None) -> MixedSystem:
    system = assemble_multipatch(ctx.refined, ctx.discs, mat, ctx.config.scheme, load)
    constrained, _ = apply_clamped_bc(system)
    return constrained


# ---------------------------------------------------------------------------
# transform / lump / condense
# ---------------------------------------------------------------------------


def build_transforms(ctx: ProblemContext) -> tuple[list, list]:
    """Per-patch 2D dual transforms T1, T2 with full reproduction degrees."""
    variant = {"ad": "AD", "ead": "eAD"}[ctx.config.variant]
    t1s, t2s = [], []
    for spaces in ctx.spaces:
        s1u = dual_transform_1d(spaces.s1.kv_u, spaces.s1.kv_u.degree, variant)
        s1v = dual_transform_1d(spaces.s1.kv_v, spaces.s1.kv_v.degree, variant)
        s2u = dual_transform_1d(spaces.s2.kv_u, spaces.s2.kv_u.degree, variant)
        s2v = dual_transform_1d(spaces.s2.kv_v, spaces.s2.kv_v.degree, variant)
        t1s.append(dual_transform_2d(s1u, s1v, spaces.s1.weights))
        t2s.append(dual_transform_2d(s2u, s2v, spaces.s2.weights))
    return t1s, t2s


def pg_transform(system: MixedSystem, t1, t2) -> MixedSystem:
    """Pre-multiply the shear rows with the dual transforms (Petrov-Galerkin).

    Accepts one transform per shear component for a single patch, or a list
    per patch.  Displacement rows are untouched; the transform is an
    invertible row operation, so exact condensation afterwards leaves the
    solution unchanged.
    """
    t1s = t1 if isinstance(t1, (list, tuple)) else [t1]
    t2s = t2 if isinstance(t2, (list, tuple)) else [t2]
    if len(t1s) != system.n_patches or len(t2s) != system.n_patches:
        raise DimensionMismatch("need one transform pair per patch")
    k_s1d, k_s2d, k_s11, k_s22 = [], [], [], []
    for p in range(system.n_patches):
        for t, blk in ((t1s[p], system.k_s11[p]), (t2s[p], system.k_s22[p])):
            if t.matrix.shape[1] != blk.shape[0]:
                raise DimensionMismatch(
                    f"transform size {t.matrix.shape} does not match shear block {blk.shape}"
                )
        k_s1d.append((t1s[p].matrix @ system.k_s1d[p]).tocsr())
        k_s2d.append((t2s[p].matrix @ system.k_s2d[p]).tocsr())
        k_s11.append((t1s[p].matrix @ system.k_s11[p]).tocsr())
        k_s22.append((t2s[p].matrix @ system.k_s22[p]).tocsr())
    return replace(
        system,
        k_s1d=k_s1d,
        k_s2d=k_s2d,
        k_s11=k_s11,
        k_s22=k_s22,
        transformed=True,
    )


def row_sum_lump(block, require_positive: bool = False) -> tuple[np.ndarray, float]:
    """diag(block @ 1) and the largest deviation of a row sum from one."""
    diag = np.asarray(block @ np.ones(block.shape[1])).ravel()
    dev = float(np.abs(diag - 1.0).max()) if len(diag) else 0.0
    if require_positive and np.any(diag <= 0):
        raise NonPositiveDiagonal(
            f"row-sum lumping produced {int(np.sum(diag <= 0))} non-positive entries"
        )
    return diag, dev


@dataclass
class CondensedSystem:
    """Displacement-only system with per-patch shear recovery operators."""

    k_cond: sp.csr_matrix
    f_d: np.ndarray
    recovery: list  # per patch: (X1, X2); shear recovery S_a = -X_a @ d
    mode: str  # 'identity' | 'diagonal' | 'schur'
    lump_dev: float
    system: MixedSystem

    @property
    def n(self) -> int:
        return self.k_cond.shape[0]


def condense(system: MixedSystem, lumped: bool = True) -> CondensedSystem:
    """Eliminate the shear DOFs.

    With dual-transformed shear rows the lumped block is the identity by
    construction, so no inversion is needed; the actual row-sum deviation is
    recorded as a diagnostic.  Without a transform, lumping keeps the
    computed diagonal (the plain-lumping baseline).  Unlumped condensation
    factorises each shear block (the expensive exact Schur complement).
    """
    k = system.k_dd.astype(float)
    dense_acc = None
    recovery = []
    dev = 0.0
    mode = "schur"
    for p in range(system.n_patches):
        ops = []
        for k_ss, k_sd in ((system.k_s11[p], system.k_s1d[p]), (system.k_s22[p], system.k_s2d[p])):
            if lumped and system.transformed:
                mode = "identity"
                _, d = row_sum_lump(k_ss)
                dev = max(dev, d)
                x = k_sd
            elif lumped:
                mode = "diagonal"
                diag, _ = row_sum_lump(k_ss, require_positive=True)
                rel = np.abs(
                    np.asarray(k_ss @ np.ones(k_ss.shape[1])).ravel() / k_ss.diagonal() - 1.0
                )
                dev = max(dev, float(rel.max()) if len(rel) else 0.0)
                x = sp.diags(1.0 / diag) @ k_sd
            else:
                try:
                    solver = DirectSolver(k_ss)
                    x = solver.solve(k_sd.toarray())
                except Exception as exc:
                    raise SingularShearBlock(str(exc)) from exc
            ops.append(x)
        recovery.append(tuple(ops))
        for k_ds, x in zip((system.k_ds1[p], system.k_ds2[p]), ops):
            if sp.issparse(x):
                k = k - (k_ds @ x)
            else:
                if dense_acc is None:
                    dense_acc = np.zeros(k.shape)
                dense_acc += k_ds @ x
    if dense_acc is not None:
        k = sp.csr_matrix(k.toarray() - dense_acc)
    return CondensedSystem(
        k_cond=k.tocsr(),
        f_d=system.f_d.copy(),
        recovery=recovery,
        mode=mode,
        lump_dev=dev,
        system=system,
    )


def recover_shear(cond: CondensedSystem, d_solution: np.ndarray) -> list:
    """Per-patch shear coefficients that balance the (lumped) shear rows."""
    out = []
    for x1, x2 in cond.recovery:
        s1 = -np.asarray(x1 @ d_solution).ravel()
        s2 = -np.asarray(x2 @ d_solution).ravel()
        out.append((s1, s2))
    return out


# ---------------------------------------------------------------------------
# element-wise transform path (multi-patch friendly assembly order)
# ---------------------------------------------------------------------------


def pg_shear_rows_elementwise(disc: PatchDiscretization, mat, t1: DualTransform2D, t2: DualTransform2D, load=None):
    """Assemble already-transformed shear rows element by element.

    Equivalent to transforming the assembled blocks globally; the element
    path avoids building a huge block-diagonal transform in multi-patch
    runs.  Returns (K_S1d, K_S2d, K_S11, K_S22) in patch-local numbering.
    """
    from .duals import extract_element_transform
    from .plate import element_matrices

    spaces = disc.spaces
    nd = spaces.nd
    ns1, ns2 = spaces.s1.ndof, spaces.s2.ndof
    tr = {k: ([], [], []) for k in ("s1d", "s2d", "s11", "s22")}

    def add(key, rows, cols, block):
        r, c, v = tr[key]
        rr, cc = np.meshgrid(rows, cols, indexing="ij")
        r.append(rr.ravel())
        c.append(cc.ravel())
        v.append(np.asarray(block).ravel())

    for elem in disc.elements():
        em = element_matrices(disc, mat, "weighted", elem, load)
        e1 = extract_element_transform(t1, em.s1_idx)
        e2 = extract_element_transform(t2, em.s2_idx)
        add("s1d", e1.rows, em.d_idx, e1.block @ em.k_s1d)
        add("s2d", e2.rows, em.d_idx, e2.block @ em.k_s2d)
        add("s11", e1.rows, em.s1_idx, e1.block @ em.k_s11)
        add("s22", e2.rows, em.s2_idx, e2.block @ em.k_s22)

    from .sparse import build_csr

    def mat_of(key, shape):
        r, c, v = tr[key]
        return build_csr(shape, np.concatenate(r), np.concatenate(c), np.concatenate(v))

    return (
        mat_of("s1d", (ns1, nd)),
        mat_of("s2d", (ns2, nd)),
        mat_of("s11", (ns1, ns1)),
        mat_of("s22", (ns2, ns2)),
    )


# ---------------------------------------------------------------------------
# variant dispatcher
# ---------------------------------------------------------------------------


def condense_variant(system: MixedSystem, ctx: ProblemContext, config: SolveConfig) -> CondensedSystem:
    """Transform (for dual variants) and condense a weighted mixed system."""
    if config.variant in ("ad", "ead"):
        t1s, t2s = build_transforms(ctx)
        system = pg_transform(system, t1s, t2s)
        return condense(system, lumped=True)
    if config.variant == "lmp":
        return condense(system, lumped=True)
    raise ValueError(f"variant {config.variant!r} does not use lumped condensation")


@dataclass
class VariantSolution:
    """Solved displacement state plus diagnostics and evaluation context."""

    config: SolveConfig
    ctx: ProblemContext
    d_full: np.ndarray  # unified d vector including clamped zeros
    free_d: np.ndarray
    shear: list | None
    diagnostics: dict

    def patch_w_coeffs(self, patch_idx: int) -> np.ndarray:
        """Deflection control coefficients of one patch."""
        return self.d_full[self.ctx.refined.point_maps[patch_idx]]

    def patch_theta_coeffs(self, patch_idx: int) -> np.ndarray:
        """(nw_local, 2) rotation coefficients of one patch."""
        ng = self.ctx.refined.n_points
        pm = self.ctx.refined.point_maps[patch_idx]
        return np.stack([self.d_full[ng + 2 * pm], self.d_full[ng + 2 * pm + 1]], axis=1)


def _expand(nd_full: int, free: np.ndarray, d_free: np.ndarray) -> np.ndarray:
    full = np.zeros(nd_full)
    full[free] = d_free
    return full


def _condition_estimate(a) -> float | None:
    try:
        import scipy.sparse.linalg as spla

        a_csc = sp.csc_matrix(a)
        lu = spla.splu(a_csc)
        op = spla.LinearOperator(
            a.shape,
            matvec=lu.solve,
            rmatvec=lambda b: lu.solve(b, trans="T"),
        )
        return float(spla.onenormest(a_csc) * spla.onenormest(op))
    except Exception:
        return None


def solve_variant(assembly, config: SolveConfig, load=None) -> VariantSolution:
    """Build spaces, assemble, and solve with the requested formulation."""
    mat = config.make_material()
    t0 = time.perf_counter()
    ctx = prepare_problem(assembly, config)
    diagnostics: dict = {"variant": config.variant}

    ns_total = sum(s.s1.ndof + s.s2.ndof for s in ctx.spaces)

    if config.variant == "std":
        k, f, boundary = assemble_primal_multipatch(ctx.refined, ctx.discs, mat, load)
        mask = np.ones(k.shape[0], dtype=bool)
        mask[boundary] = False
        free = np.flatnonzero(mask)
        kf = k[np.ix_(free, free)].tocsr()
        ff = f[free]
        t1 = time.perf_counter()
        solver = DirectSolver(kf)
        t2 = time.perf_counter()
        d_free = solver.solve(ff)
        t3 = time.perf_counter()
        shear = None
        solved = kf
        lump_dev = None
    else:
        system = assemble_mixed(ctx, mat, load)
        free = system.free_d
        t1 = time.perf_counter()
        if config.variant == "mxd":
            a, rhs = system.monolithic()
            solver = DirectSolver(a)
            t2 = time.perf_counter()
            x = solver.solve(rhs)
            t3 = time.perf_counter()
            d_free = x[: system.nd]
            shear = []
            off = system.nd
            ns1s = [m.shape[0] for m in system.k_s11]
            ns2s = [m.shape[0] for m in system.k_s22]
            s1_parts = []
            for n in ns1s:
                s1_parts.append(x[off : off + n])
                off += n
            s2_parts = []
            for n in ns2s:
                s2_parts.append(x[off : off + n])
                off += n
            shear = list(zip(s1_parts, s2_parts))
            solved = a
            lump_dev = None
        else:
            cond = condense_variant(system, ctx, config)
            solver = DirectSolver(cond.k_cond)
            t2 = time.perf_counter()
            d_free = solver.solve(cond.f_d)
            t3 = time.perf_counter()
            shear = recover_shear(cond, d_free)
            solved = cond.k_cond
            lump_dev = cond.lump_dev
            diagnostics["condense_mode"] = cond.mode

    nnz, band = nnz_and_bandwidth(solved)
    diagnostics.update(
        {
            "n_dof_primal": int(len(free)),
            "n_dof_mixed": int(len(free) + ns_total),
            "n_dof_solved": int(solved.shape[0]),
            "nnz_solved": nnz,
            "bandwidth": band,
            "assembly_s": t1 - t0,
            "factor_s": t2 - t1,
            "solve_s": t3 - t2,
            "lump_dev": lump_dev,
        }
    )
    if config.estimate_condition:
        diagnostics["cond_est"] = _condition_estimate(solved)

    nd_full = 3 * ctx.refined.n_points
    return VariantSolution(
        config=config,
        ctx=ctx,
        d_full=_expand(nd_full, free, d_free),
        free_d=free,
        shear=shear,
        diagnostics=diagnostics,
    )
