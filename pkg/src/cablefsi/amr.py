"""Adaptive refinement marking: interface cuts, wall distance, flow features.

Marking produces edge sets for newest-vertex bisection.  The driving rule
is the doubly-intersected criterion: an edge crossed twice by the embedded
surface spans the cable body entirely, so the dual cells on both sides
straddle wetted geometry the flux stencil cannot see.  Wall-distance and
velocity-feature rules supplement it; the marked set is the union of
whichever rules are switched on.
"""

import dataclasses
import logging

import numpy as np

from .mesh import least_squares_gradients
from .surface import intersect_edges_batch, point_surface_distance

log = logging.getLogger(__name__)


@dataclasses.dataclass
class AmrCriteria:
    """Switchable edge-marking rules.

    Attributes
    ----------
    doubly_intersected : bool
        Mark edges with >= 2 surface crossings and length above
        ``min_edge_length``.
    near_wall : bool
        Mark edges whose midpoint lies within ``wall_distance`` of the
        surface and whose length exceeds ``near_wall_size``.
    feature : bool
        Mark edges whose velocity-magnitude second difference
        |(g_j - g_i) . (x_j - x_i)| exceeds ``feature_threshold`` and
        whose length exceeds ``feature_size``.
    """

    doubly_intersected: bool = True
    min_edge_length: float = 0.0
    near_wall: bool = False
    wall_distance: float = 0.0
    near_wall_size: float = 0.0
    feature: bool = False
    feature_threshold: float = 0.0
    feature_size: float = 0.0


def doubly_intersected_edges(mesh, surface, min_length=0.0):
    """Rows of mesh.edges crossed at least twice by the surface."""
    edges = mesh.edges
    pi = mesh.nodes[edges[:, 0]]
    pj = mesh.nodes[edges[:, 1]]
    counts, _ = intersect_edges_batch(surface, pi, pj)
    lengths = np.linalg.norm(pj - pi, axis=1)
    return np.nonzero((counts >= 2) & (lengths > min_length))[0]


def mark_for_amr(mesh, surface, criteria, velocity=None, node_mask=None):
    """Edges to bisect under the enabled criteria.

    Parameters
    ----------
    mesh : Mesh
    surface : EmbeddedSurface or None
        None disables the two geometric rules.
    criteria : AmrCriteria
    velocity : array (n, 3), optional
        Nodal flow velocity for the feature rule.
    node_mask : bool array (n,), optional
        Nodes usable in feature stencils (the real nodes); edges with an
        excluded endpoint neither contribute to gradients nor get marked
        by the feature rule.

    Returns
    -------
    array (m, 2)
        Marked edge node pairs; empty when nothing triggers.
    """
    edges = mesh.edges
    pi = mesh.nodes[edges[:, 0]]
    pj = mesh.nodes[edges[:, 1]]
    lengths = np.linalg.norm(pj - pi, axis=1)
    marked = np.zeros(len(edges), dtype=bool)

    if surface is not None and criteria.doubly_intersected:
        counts, _ = intersect_edges_batch(surface, pi, pj)
        marked |= (counts >= 2) & (lengths > criteria.min_edge_length)

    if surface is not None and criteria.near_wall:
        mid = 0.5 * (pi + pj)
        dist = point_surface_distance(surface, mid, cutoff=criteria.wall_distance)
        marked |= (dist <= criteria.wall_distance) & (lengths > criteria.near_wall_size)

    if criteria.feature and velocity is not None:
        speed = np.linalg.norm(np.asarray(velocity, dtype=float), axis=1)
        if node_mask is not None:
            keep = node_mask[edges[:, 0]] & node_mask[edges[:, 1]]
        else:
            keep = np.ones(len(edges), dtype=bool)
        grads = least_squares_gradients(mesh.nodes, edges, speed, edge_mask=keep)
        eta = np.abs(
            np.einsum("ij,ij->i", grads[edges[:, 1]] - grads[edges[:, 0]], pj - pi)
        )
        marked |= keep & (eta > criteria.feature_threshold) & (lengths > criteria.feature_size)

    rows = np.nonzero(marked)[0]
    if len(rows):
        log.info("amr marking: %d of %d edges", len(rows), len(edges))
    return edges[rows]
