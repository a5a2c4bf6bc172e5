"""Pit-front advancement, corner relocation, merging, and apex tracking.

Chain vertices move along their vertex normals at the Faraday speed.
Corners are re-seated on y = 0 by extrapolating the wall through the two
nearest chain vertices; when the intersection jumps far from the old
corner, the corner dives into the pit and the adjacent surface vertex
takes over as the new corner (the mesh topology never changes, edges are
only retagged).  Facing pits merge once the single surface edge between
their corners drops below tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import electrochem
from .crystal import MaterialSpec, VcorrParams, vcorr_many
from .electrochem import ElectroParams
from .mesh import (BoundaryTag, PitChain, TriMesh, cross2,
                   face_and_vertex_normals, polyline_crossings,
                   polyline_self_intersects)

logger = logging.getLogger("pitmesh.front")

M_TO_UM = 1.0e6
PARALLEL_SIN = np.sin(np.deg2rad(1.0))
# once the chain turn at a merge apex flattens below this angle the ridge
# has corroded away and the vertex goes back to plain normal motion
APEX_RETIRE_TURN_DEG = 20.0


class FrontError(Exception):
    """Front advancement produced invalid geometry."""


@dataclass
class FrontParams:
    dt: float = 0.5                  # seconds
    t_end: float = 120.0
    corner_close_factor: float = 1.5  # times the mean pit-edge length
    merge_gap_tol: float = 1.0        # micrometers
    cfl_frac: float = 0.2             # dt cap: frac * min pit edge / max V_n

    def validate(self) -> None:
        for name in ("dt", "t_end", "corner_close_factor", "merge_gap_tol",
                     "cfl_frac"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass
class MergeCandidate:
    edge_index: int
    left_chain: int   # index into the chains list
    right_chain: int
    gap_length: float


@dataclass
class MergeEvent:
    left_pit: int
    right_pit: int
    apex_vertex: int
    moved_vertex: int
    apex_position: tuple
    gap_length: float
    step: int = -1


def chain_velocities(mesh: TriMesh, chain: PitChain, phi: np.ndarray,
                     material: MaterialSpec, vc_params: VcorrParams,
                     eparams: ElectroParams):
    """Normal speed (micrometers/s) and unit normal for every chain vertex."""
    _, normals = face_and_vertex_normals(mesh, chain)
    pos = chain.positions(mesh)
    vc = vcorr_many(material, vc_params, pos, normals)
    vn = electrochem.normal_velocity(eparams, vc, phi[chain.vertices])
    return vn * M_TO_UM, normals


def advance_pit(mesh: TriMesh, chain: PitChain, phi: np.ndarray,
                material: MaterialSpec, vc_params: VcorrParams,
                eparams: ElectroParams, fparams: FrontParams,
                dt: Optional[float] = None, vn_override=None) -> float:
    """Advance one chain over dt; corners and apex get their special rules.

    Mutates mesh vertex positions (and, for large corner jumps, the chain
    and edge tags).  Returns the maximum normal speed in micrometers/s.
    Rejects the step (restoring positions) if the chain self-intersects.
    """
    dt = fparams.dt if dt is None else dt
    if chain.apex_pos is not None:
        _maybe_retire_apex(mesh, chain)
    if vn_override is not None:
        _, normals = face_and_vertex_normals(mesh, chain)
        vn_um = np.asarray(vn_override(chain.positions(mesh), normals),
                           dtype=np.float64)
    else:
        vn_um, normals = chain_velocities(mesh, chain, phi, material,
                                          vc_params, eparams)
    saved = mesh.vertices[chain.vertices].copy()
    saved_ids = chain.vertices.copy()
    saved_apex = chain.apex_pos
    saved_tags = mesh.edge_tags.copy()
    saved_pits = mesh.edge_pits.copy()
    # corner absorption may pull surface vertices into the chain
    bottom_ids = np.unique(
        mesh.edge_nodes[mesh.edge_tags == BoundaryTag.BOTTOM].ravel())
    saved_bottom = mesh.vertices[bottom_ids].copy()

    move = np.ones(chain.n_vertices, dtype=bool)
    move[0] = move[-1] = False
    if chain.apex_pos is not None:
        move[chain.apex_pos] = False
    old_neighbors = None
    if chain.apex_pos is not None:
        a = chain.apex_pos
        old_neighbors = mesh.vertices[chain.vertices[[a - 1, a + 1]]].copy()
    disp = np.zeros((chain.n_vertices, 2))
    disp[move] = dt * vn_um[move, None] * normals[move]
    _apply_limited(mesh, chain, disp)

    update_corners(mesh, chain, fparams)
    if chain.apex_pos is not None:
        _advance_apex(mesh, chain, old_neighbors)

    p = chain.positions(mesh)
    if polyline_self_intersects(p):
        # roll back positions plus anything a corner absorption changed
        mesh.vertices[bottom_ids] = saved_bottom
        mesh.vertices[saved_ids] = saved
        mesh.edge_tags = saved_tags
        mesh.edge_pits = saved_pits
        chain.vertices = saved_ids
        chain.apex_pos = saved_apex
        raise FrontError(
            f"pit {chain.pit_id}: chain self-intersects after advance; "
            "a smaller dt should prevent this")
    return float(np.max(vn_um))


APPROACH_FACTOR = 0.4   # a vertex keeps this fraction of its clearance
FREEZE_CLEARANCE = 1e-3  # micrometers; bunched vertices stop entirely


def _clearance(points: np.ndarray) -> np.ndarray:
    """Distance from each polyline vertex to its non-adjacent segments."""
    from .mesh import point_segment_distances
    n = len(points)
    dist = point_segment_distances(points, points[:-1], points[1:])
    idx = np.arange(n)[:, None]
    seg = np.arange(n - 1)[None, :]
    near = (seg >= idx - 2) & (seg <= idx + 1)
    dist[near] = np.inf
    return dist.min(axis=1)


def _apply_limited(mesh: TriMesh, chain: PitChain, disp: np.ndarray) -> None:
    """Move chain vertices, scaling back any step that closes on the front.

    A marker cannot overtake the envelope of its neighbors' wavefronts:
    where converging flanks have consumed the metal between them (after a
    merge, say) the bunched vertices lose clearance geometrically and
    finally freeze, instead of passing through the opposite wall.
    """
    base = mesh.vertices[chain.vertices].copy()
    clear0 = _clearance(base)
    frac = np.ones(len(disp))
    frac[clear0 < FREEZE_CLEARANCE] = 0.0
    for _ in range(60):
        trial = base + frac[:, None] * disp
        clear = _clearance(trial)
        bad = (clear < APPROACH_FACTOR * clear0) & (frac > 0.0)
        pairs = polyline_crossings(trial)
        if len(pairs):
            involved = np.unique(np.concatenate((pairs.ravel(),
                                                 pairs.ravel() + 1)))
            involved = involved[involved < len(bad)]
            bad[involved] = True
        if not np.any(bad):
            break
        frac[bad] *= 0.5
        frac[frac < 1e-9] = 0.0
    else:
        raise FrontError(
            f"pit {chain.pit_id}: could not untangle the advancing front")
    if np.any(frac < 1.0):
        logger.debug("pit %d: limited %d vertices at the front envelope",
                     chain.pit_id, int(np.sum(frac < 1.0)))
    mesh.vertices[chain.vertices] = base + frac[:, None] * disp


def _extrapolate_to_surface(p1: np.ndarray, p2: np.ndarray):
    """Intersection with y=0 of the line through p1, p2; None if parallel."""
    dy = p1[1] - p2[1]
    if abs(dy) < 1e-14 * max(1.0, abs(p1[1])):
        return None
    t = p1[1] / dy
    return p1[0] + t * (p2[0] - p1[0])


def _bottom_neighbor(mesh: TriMesh, corner: int) -> int:
    en = mesh.edge_nodes
    sel = (mesh.edge_tags == BoundaryTag.BOTTOM) & \
        ((en[:, 0] == corner) | (en[:, 1] == corner))
    idx = np.where(sel)[0]
    if len(idx) != 1:
        raise FrontError(f"corner vertex {corner} has {len(idx)} bottom edges")
    u, v = en[idx[0]]
    return int(v if u == corner else u)


def _retag_to_pit(mesh: TriMesh, a: int, b: int, pit_id: int) -> None:
    en = mesh.edge_nodes
    sel = ((en[:, 0] == a) & (en[:, 1] == b)) | ((en[:, 0] == b) & (en[:, 1] == a))
    idx = np.where(sel)[0]
    if len(idx) != 1:
        raise FrontError(f"edge ({a},{b}) not found for retagging")
    mesh.edge_tags[idx[0]] = BoundaryTag.PIT
    mesh.edge_pits[idx[0]] = pit_id


def update_corners(mesh: TriMesh, chain: PitChain, fparams: FrontParams) -> None:
    """Re-seat both chain corners on y = 0 by wall extrapolation.

    Close intersections just move the corner along y = 0; far ones absorb
    the adjacent surface vertex: the old corner dives onto the wall line
    inside the pit and the surface vertex becomes the corner at the
    intersection (its bottom edge is retagged as pit boundary).
    """
    edge_len = np.linalg.norm(np.diff(chain.positions(mesh), axis=0), axis=1)
    tol = fparams.corner_close_factor * float(np.mean(edge_len))
    for side in ("left", "right"):
        if side == "left":
            corner = chain.vertices[0]
            v1, v2 = chain.vertices[1], chain.vertices[2]
        else:
            corner = chain.vertices[-1]
            v1, v2 = chain.vertices[-2], chain.vertices[-3]
        p1, p2 = mesh.vertices[v1], mesh.vertices[v2]
        x_int = _extrapolate_to_surface(p1, p2)
        if x_int is None:
            logger.warning("pit %d %s corner: wall parallel to surface, "
                           "projecting vertically", chain.pit_id, side)
            x_int = float(p1[0])
        old_x = mesh.vertices[corner, 0]
        if abs(x_int - old_x) <= tol:
            mesh.vertices[corner] = (x_int, 0.0)
            continue
        # large jump: absorb the neighboring surface vertex into the chain
        neighbor = _bottom_neighbor(mesh, int(corner))
        mesh.vertices[neighbor] = (x_int, 0.0)
        mesh.vertices[corner] = 0.5 * (p1 + np.array([x_int, 0.0]))
        _retag_to_pit(mesh, int(corner), neighbor, chain.pit_id)
        if side == "left":
            chain.vertices = np.concatenate(([neighbor], chain.vertices)).astype(np.int32)
            if chain.apex_pos is not None:
                chain.apex_pos += 1
        else:
            chain.vertices = np.concatenate((chain.vertices, [neighbor])).astype(np.int32)
        logger.info("pit %d: %s corner absorbed surface vertex %d",
                    chain.pit_id, side, neighbor)


def line_intersection(a1, a2, b1, b2):
    """Intersection of lines (a1,a2) and (b1,b2); None if nearly parallel."""
    d1 = np.asarray(a2, dtype=np.float64) - a1
    d2 = np.asarray(b2, dtype=np.float64) - b1
    n1 = np.hypot(*d1)
    n2 = np.hypot(*d2)
    if n1 == 0.0 or n2 == 0.0:
        return None
    denom = float(cross2(d1, d2))
    if abs(denom) < PARALLEL_SIN * n1 * n2:
        return None
    t = float(cross2(np.asarray(b1) - a1, d2)) / denom
    return np.asarray(a1) + t * d1


def track_apex(p_ll, p_l, p_r, p_rr, apex_old: np.ndarray):
    """New apex from the intersection of the second-last wall edges.

    p_ll..p_l is the second-last edge left of the apex, p_r..p_rr the one
    on the right.  Near-parallel walls return None (caller falls back to
    averaged neighbor displacement).  The apex never rises: material only
    dissolves, so y is clamped to min(old_y, 0, intersection_y).
    """
    hit = line_intersection(p_ll, p_l, p_r, p_rr)
    if hit is None:
        return None
    return np.array([hit[0], min(hit[1], apex_old[1], 0.0)])


def _maybe_retire_apex(mesh: TriMesh, chain: PitChain) -> None:
    """Drop apex tracking when the ridge has effectively corroded away.

    Two symptoms end the ridge regime: the wall lines through the
    second-last edges become nearly collinear (no wedge left to track), or
    a neighbor vertex has crowded onto the apex, which starves the local
    edge and stalls the front time step.  Either way plain normal motion
    takes over and rounds off the remnant.
    """
    a = chain.apex_pos
    p = mesh.vertices[chain.vertices[a - 2:a + 3]]
    w1 = p[1] - p[0]
    w2 = p[3] - p[4]
    n1 = np.hypot(*w1)
    n2 = np.hypot(*w2)
    seg = np.hypot(*np.diff(mesh.vertices[chain.vertices], axis=0).T)
    crowd = min(seg[a - 1], seg[a]) < 0.25 * float(np.median(seg))
    flat = False
    if n1 > 0.0 and n2 > 0.0:
        turn = 180.0 - np.rad2deg(np.arccos(
            np.clip(np.dot(w1, w2) / (n1 * n2), -1.0, 1.0)))
        flat = turn < APEX_RETIRE_TURN_DEG
    if flat or crowd:
        logger.info("pit %d: apex retired (%s)", chain.pit_id,
                    "walls collinear" if flat else "neighbor crowded in")
        chain.apex_pos = None


def _advance_apex(mesh: TriMesh, chain: PitChain, old_neighbors: np.ndarray) -> None:
    a = chain.apex_pos
    if a < 2 or a > chain.n_vertices - 3:
        raise FrontError(f"apex at chain position {a} needs 2 edges per side")
    verts = chain.vertices
    apex_id = verts[a]
    pos = mesh.vertices
    new = track_apex(pos[verts[a - 2]], pos[verts[a - 1]],
                     pos[verts[a + 1]], pos[verts[a + 2]], pos[apex_id])
    if new is None:
        disp = (pos[verts[[a - 1, a + 1]]] - old_neighbors).mean(axis=0)
        new = pos[apex_id] + disp
        new[1] = min(new[1], 0.0)
        logger.warning("pit %d: apex walls near-parallel, advancing by "
                       "averaged neighbor displacement", chain.pit_id)
    mesh.vertices[apex_id] = new


def detect_merge(mesh: TriMesh, chains: Sequence[PitChain],
                 fparams: FrontParams) -> Optional[MergeCandidate]:
    """Shortest sub-tolerance surface edge joining two facing pit corners."""
    if len(chains) < 2:
        return None
    order = sorted(range(len(chains)),
                   key=lambda ci: mesh.vertices[chains[ci].left_corner, 0])
    en = mesh.edge_nodes
    best = None
    for c1, c2 in zip(order, order[1:]):
        rc = chains[c1].right_corner
        lc = chains[c2].left_corner
        sel = (mesh.edge_tags == BoundaryTag.BOTTOM) & (
            ((en[:, 0] == rc) & (en[:, 1] == lc))
            | ((en[:, 0] == lc) & (en[:, 1] == rc)))
        idx = np.where(sel)[0]
        if len(idx) != 1:
            continue  # surface vertices still sit between these pits
        gap = float(np.linalg.norm(mesh.vertices[rc] - mesh.vertices[lc]))
        if gap < fparams.merge_gap_tol and (best is None or gap < best.gap_length):
            best = MergeCandidate(int(idx[0]), c1, c2, gap)
    return best


def _triangle_angles(p0, p1, p2):
    """Interior angles at p0, p1, p2."""
    def ang(a, b, c):
        u = b - a
        v = c - a
        cosv = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
        return float(np.arccos(np.clip(cosv, -1.0, 1.0)))
    return ang(p0, p1, p2), ang(p1, p2, p0), ang(p2, p0, p1)


def merge_pits(mesh: TriMesh, chains: Sequence[PitChain],
               cand: MergeCandidate) -> tuple:
    """Collapse the gap edge between two pits into one chain with an apex.

    The gap-edge endpoint with the larger angle in the owning triangle
    becomes the apex at the gap midpoint; the other endpoint moves halfway
    toward its first chain neighbor.  Vertex and cell counts are untouched;
    the gap edge and the right pit's edges are retagged to the merged pit.
    """
    left = chains[cand.left_chain]
    right = chains[cand.right_chain]
    rc, lc = left.right_corner, right.left_corner

    tri = mesh.triangles
    has = ((tri == rc).any(axis=1)) & ((tri == lc).any(axis=1))
    cells = np.where(has)[0]
    if len(cells) != 1:
        raise FrontError(f"gap edge ({rc},{lc}) owned by {len(cells)} cells")
    cell = tri[cells[0]]
    w = int(cell[(cell != rc) & (cell != lc)][0])
    pos = mesh.vertices
    ang_rc = _triangle_angles(pos[rc], pos[lc], pos[w])[0]
    ang_lc = _triangle_angles(pos[lc], pos[w], pos[rc])[0]

    apex_point = 0.5 * (pos[rc] + pos[lc])
    if ang_rc >= ang_lc:
        apex_id, moved_id = rc, lc
        neighbor = int(right.vertices[1])
    else:
        apex_id, moved_id = lc, rc
        neighbor = int(left.vertices[-2])
    saved = pos[[rc, lc]].copy()
    pos[apex_id] = apex_point
    pos[moved_id] = 0.5 * (apex_point + pos[neighbor])

    areas_ok = mesh.signed_areas() > 0.0
    if not np.all(areas_ok):
        pos[[rc, lc]] = saved
        raise FrontError(
            f"merging pits {left.pit_id} and {right.pit_id} would invert "
            f"cells {np.where(~areas_ok)[0][:5].tolist()}; "
            "use a smaller merge_gap_tol")

    merged_id = left.pit_id
    mesh.edge_tags[cand.edge_index] = BoundaryTag.PIT
    mesh.edge_pits[cand.edge_index] = merged_id
    right_sel = (mesh.edge_tags == BoundaryTag.PIT) & \
        (mesh.edge_pits == right.pit_id)
    mesh.edge_pits[right_sel] = merged_id

    merged = PitChain(
        merged_id,
        np.concatenate((left.vertices, right.vertices)).astype(np.int32),
        apex_pos=len(left.vertices) - 1 if apex_id == rc else len(left.vertices))

    new_chains = [c for i, c in enumerate(chains)
                  if i not in (cand.left_chain, cand.right_chain)]
    new_chains.append(merged)
    new_chains.sort(key=lambda c: mesh.vertices[c.left_corner, 0])
    _renumber_pits(mesh, new_chains)
    event = MergeEvent(left.pit_id, right.pit_id, int(apex_id), int(moved_id),
                       (float(apex_point[0]), float(apex_point[1])),
                       cand.gap_length)
    logger.info("merged pits %d and %d at x=%.3f (gap %.3g)", left.pit_id,
                right.pit_id, apex_point[0], cand.gap_length)
    return new_chains, event


def _renumber_pits(mesh: TriMesh, chains: Sequence[PitChain]) -> None:
    """Make pit ids contiguous from 0, in left-to-right chain order."""
    mapping = {}
    for new_id, chain in enumerate(chains):
        mapping[chain.pit_id] = new_id
    old = mesh.edge_pits.copy()
    for old_id, new_id in mapping.items():
        mesh.edge_pits[old == old_id] = new_id
    for chain in chains:
        chain.pit_id = mapping[chain.pit_id]


def pit_area(mesh: TriMesh, chain: PitChain) -> float:
    """Cavity area enclosed between the chain and the surface y = 0."""
    p = chain.positions(mesh)
    x, y = p[:, 0], p[:, 1]
    shoelace = np.sum(x[:-1] * y[1:] - x[1:] * y[:-1])
    shoelace += x[-1] * 0.0 - x[0] * 0.0  # closing run along y = 0
    return abs(0.5 * shoelace)
