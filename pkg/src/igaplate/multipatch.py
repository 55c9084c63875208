"""Multi-patch assemblies with C0 displacement coupling at conforming interfaces.

Displacement and rotation DOFs of coincident interface control points are
unified; shear DOFs stay strictly patch-local, so the shear blocks never
couple across patches and condensation can run patch by patch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plate import MixedSystem
from .sparse import build_csr
from .splines import SurfacePatch


class NonConformingInterface(Exception):
    pass


EDGES = ("u0", "u1", "v0", "v1")


def _edge_local_points(shape: tuple[int, int], edge: str) -> np.ndarray:
    """Control-point ids along one edge, ordered along the edge parameter."""
    n, m = shape
    if edge == "u0":
        return np.arange(m)
    if edge == "u1":
        return (n - 1) * m + np.arange(m)
    if edge == "v0":
        return np.arange(n) * m
    if edge == "v1":
        return np.arange(n) * m + (m - 1)
    raise ValueError(f"unknown edge {edge!r}")


def _edge_geometry(patch: SurfacePatch, edge: str):
    """(knot vector along the edge, points (k,3), weights (k,)) in edge order."""
    ids = _edge_local_points(patch.net.shape, edge)
    pts = patch.net.points.reshape(-1, 3)[ids]
    wts = patch.net.weights.reshape(-1)[ids]
    kv = patch.knots_v if edge in ("u0", "u1") else patch.knots_u
    return kv, pts, wts


@dataclass(frozen=True)
class Interface:
    patch_a: int
    edge_a: str
    patch_b: int
    edge_b: str
    reversed: bool = False


@dataclass
class PatchAssembly:
    """Patches plus interface topology and the unified displacement DOF map."""

    patches: list
    interfaces: list
    point_maps: list  # per patch: local point id -> global point id
    n_points: int
    boundary_points: np.ndarray  # global point ids on unmatched (outer) edges

    @property
    def n_patches(self) -> int:
        return len(self.patches)


def detect_interfaces(patches, tol: float = 1e-12) -> list[Interface]:
    """Find conforming patch interfaces by coincident edges.

    Edges whose endpoints coincide loosely are treated as intended matches
    and validated strictly, so a slightly perturbed interface raises
    NonConformingInterface instead of silently becoming an outer boundary.
    """
    found: list[Interface] = []
    used: set[tuple[int, str]] = set()
    for a in range(len(patches)):
        for b in range(a + 1, len(patches)):
            for ea in EDGES:
                if (a, ea) in used:
                    continue
                _, pa, _ = _edge_geometry(patches[a], ea)
                for eb in EDGES:
                    if (b, eb) in used:
                        continue
                    _, pb, _ = _edge_geometry(patches[b], eb)
                    if len(pa) != len(pb):
                        continue
                    # loose candidate test; strict validation happens below
                    cand = 1e-3
                    end_same = (
                        np.linalg.norm(pa[0] - pb[0]) < cand
                        and np.linalg.norm(pa[-1] - pb[-1]) < cand
                    )
                    end_rev = (
                        np.linalg.norm(pa[0] - pb[-1]) < cand
                        and np.linalg.norm(pa[-1] - pb[0]) < cand
                    )
                    if not (end_same or end_rev):
                        continue
                    iface = Interface(a, ea, b, eb, reversed=not end_same)
                    _validate_interface(patches, iface, tol)
                    found.append(iface)
                    used.add((a, ea))
                    used.add((b, eb))
                    break
    return found


def _validate_interface(patches, iface: Interface, tol: float) -> None:
    kv_a, pa, wa = _edge_geometry(patches[iface.patch_a], iface.edge_a)
    kv_b, pb, wb = _edge_geometry(patches[iface.patch_b], iface.edge_b)
    if iface.reversed:
        pb = pb[::-1]
        wb = wb[::-1]
        lo, hi = kv_b.domain
        vals_b = (lo + hi - kv_b.values)[::-1]
    else:
        vals_b = kv_b.values
    if kv_a.degree != kv_b.degree:
        raise NonConformingInterface(
            f"degree mismatch {kv_a.degree} vs {kv_b.degree} across interface {iface}"
        )
    if len(kv_a.values) != len(vals_b) or np.abs(kv_a.values - vals_b).max() > tol:
        raise NonConformingInterface(f"knot vectors differ across interface {iface}")
    if np.abs(pa - pb).max() > tol or np.abs(wa - wb).max() > tol:
        gap = max(np.abs(pa - pb).max(), np.abs(wa - wb).max())
        raise NonConformingInterface(
            f"interface control data differ by {gap:.3e} (> {tol:.0e}) across {iface}"
        )


def build_dof_map(patches, interfaces=None, tol: float = 1e-12) -> PatchAssembly:
    """Unify displacement DOFs of matched interface control points."""
    patches = list(patches)
    if interfaces is None:
        interfaces = detect_interfaces(patches, tol)
    else:
        for iface in interfaces:
            _validate_interface(patches, iface, tol)

    sizes = [p.net.shape[0] * p.net.shape[1] for p in patches]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    parent = np.arange(offsets[-1])

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    for iface in interfaces:
        ids_a = _edge_local_points(patches[iface.patch_a].net.shape, iface.edge_a)
        ids_b = _edge_local_points(patches[iface.patch_b].net.shape, iface.edge_b)
        if iface.reversed:
            ids_b = ids_b[::-1]
        for la, lb in zip(ids_a, ids_b):
            union(offsets[iface.patch_a] + la, offsets[iface.patch_b] + lb)

    roots = np.array([find(i) for i in range(offsets[-1])])
    _, global_ids = np.unique(roots, return_inverse=True)
    point_maps = [
        global_ids[offsets[p] : offsets[p] + sizes[p]].copy() for p in range(len(patches))
    ]

    matched = {(i.patch_a, i.edge_a) for i in interfaces} | {
        (i.patch_b, i.edge_b) for i in interfaces
    }
    boundary = set()
    for p, patch in enumerate(patches):
        shape = patch.net.shape
        for edge in EDGES:
            if (p, edge) in matched:
                continue
            boundary.update(point_maps[p][_edge_local_points(shape, edge)].tolist())

    return PatchAssembly(
        patches=patches,
        interfaces=list(interfaces),
        point_maps=point_maps,
        n_points=int(global_ids.max()) + 1,
        boundary_points=np.array(sorted(boundary), dtype=int),
    )


def single_patch_assembly(patch: SurfacePatch) -> PatchAssembly:
    nw = patch.net.shape[0] * patch.net.shape[1]
    return PatchAssembly(
        patches=[patch],
        interfaces=[],
        point_maps=[np.arange(nw)],
        n_points=nw,
        boundary_points=boundary_point_ids_from_shape(patch.net.shape),
    )


def boundary_point_ids_from_shape(shape: tuple[int, int]) -> np.ndarray:
    n, m = shape
    ids = set()
    for i in (0, n - 1):
        ids.update(i * m + j for j in range(m))
    for j in (0, m - 1):
        ids.update(i * m + j for i in range(n))
    return np.array(sorted(ids), dtype=int)


def d_index_map(pa: PatchAssembly, patch_idx: int) -> np.ndarray:
    """Patch-local d DOFs -> global d DOFs (w block, then rotation pairs)."""
    pm = pa.point_maps[patch_idx]
    ng = pa.n_points
    nw_loc = len(pm)
    out = np.empty(3 * nw_loc, dtype=int)
    out[:nw_loc] = pm
    out[nw_loc::2] = ng + 2 * pm
    out[nw_loc + 1 :: 2] = ng + 2 * pm + 1
    return out


def boundary_d_indices(pa: PatchAssembly) -> np.ndarray:
    pts = pa.boundary_points
    ng = pa.n_points
    return np.sort(np.concatenate([pts, ng + 2 * pts, ng + 2 * pts + 1]))


def assemble_multipatch(
    pa: PatchAssembly,
    discs: list,
    mat,
    scheme: str,
    load=None,
) -> MixedSystem:
    """Merge patch-local mixed systems into the unified displacement numbering."""
    from .plate import assemble

    nd = 3 * pa.n_points
    locals_ = [assemble(disc, mat, scheme, load) for disc in discs]

    rows, cols, vals = [], [], []
    f_d = np.zeros(nd)
    k_ds1, k_ds2, k_s1d, k_s2d, k_s11, k_s22 = [], [], [], [], [], []
    for p, loc in enumerate(locals_):
        dmap = d_index_map(pa, p)
        coo = loc.k_dd.tocoo()
        rows.append(dmap[coo.row])
        cols.append(dmap[coo.col])
        vals.append(coo.data)
        np.add.at(f_d, dmap, loc.f_d)

        def remap_rows(mat_local):
            coo = mat_local.tocoo()
            return build_csr(
                (nd, mat_local.shape[1]), dmap[coo.row], coo.col, coo.data
            )

        def remap_cols(mat_local):
            coo = mat_local.tocoo()
            return build_csr(
                (mat_local.shape[0], nd), coo.row, dmap[coo.col], coo.data
            )

        k_ds1.append(remap_rows(loc.k_ds1[0]))
        k_ds2.append(remap_rows(loc.k_ds2[0]))
        k_s1d.append(remap_cols(loc.k_s1d[0]))
        k_s2d.append(remap_cols(loc.k_s2d[0]))
        k_s11.append(loc.k_s11[0])
        k_s22.append(loc.k_s22[0])

    k_dd = build_csr((nd, nd), np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
    return MixedSystem(
        k_dd=k_dd,
        k_ds1=k_ds1,
        k_ds2=k_ds2,
        k_s1d=k_s1d,
        k_s2d=k_s2d,
        k_s11=k_s11,
        k_s22=k_s22,
        f_d=f_d,
        scheme=scheme,
        spaces=[d.spaces for d in discs],
        boundary_d=boundary_d_indices(pa),
        nd_full=nd,
    )


def assemble_primal_multipatch(pa: PatchAssembly, discs: list, mat, load=None):
    """Global primal system in the unified displacement numbering."""
    from .plate import assemble_primal

    nd = 3 * pa.n_points
    rows, cols, vals = [], [], []
    f = np.zeros(nd)
    for p, disc in enumerate(discs):
        k_loc, f_loc, _ = assemble_primal(disc, mat, load)
        dmap = d_index_map(pa, p)
        coo = k_loc.tocoo()
        rows.append(dmap[coo.row])
        cols.append(dmap[coo.col])
        vals.append(coo.data)
        np.add.at(f, dmap, f_loc)
    k = build_csr((nd, nd), np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
    return k, f, boundary_d_indices(pa)


def assemble_and_condense_multipatch(pa: PatchAssembly, mat, config, load=None):
    """Refine every patch, assemble, and condense patch by patch.

    Returns (condensed system, solve context).  Per-patch dual transforms
    are built from each patch's own (continuity-reduced) knot vectors; the
    summed condensed contributions equal a monolithic block-diagonal
    treatment because the shear blocks never couple across patches.
    """
    from . import condense as _c

    ctx = _c.prepare_problem(pa, config)
    system = _c.assemble_mixed(ctx, mat, load)
    return _c.condense_variant(system, ctx, config), ctx
