"""Volume-preserving pair-swap descent on weighted cell graphs.

Shared by the planar and slab solvers: cells carry a binary phase, edges
carry interface weights (all geometric factors folded in), and each cell
knows its bulk energy at both phases. A swap exchanges one phase-1 cell
with one phase-0 cell, so the phase cell count is invariant. Swaps are
accepted first-improvement along a seeded random permutation of the
(ones x zeros) pairs, enumerated in lexicographic cell order before
shuffling; passes repeat until one full pass accepts nothing. The accepted
sequence is a pure function of the seed and the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

SWAP_THRESHOLD = -1e-12  # strict-decrease guard against float-noise cycling
_SCAN_CHUNK = 16384


@dataclass(frozen=True, eq=False)
class SwapGraph:
    n_cells: int
    edge_cells: np.ndarray  # (E, 2)
    edge_weight: np.ndarray  # (E,)

    @cached_property
    def incidence(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (indptr, edge ids) of edges incident to each cell."""
        counts = np.zeros(self.n_cells, dtype=int)
        np.add.at(counts, self.edge_cells.ravel(), 1)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        ids = np.empty(indptr[-1], dtype=int)
        cursor = indptr[:-1].copy()
        for e, (a, b) in enumerate(self.edge_cells):
            ids[cursor[a]] = e
            cursor[a] += 1
            ids[cursor[b]] = e
            cursor[b] += 1
        return indptr, ids

    @cached_property
    def neighbor_table(self) -> tuple[np.ndarray, np.ndarray]:
        """(neighbors, weights) padded to max degree with -1 / 0."""
        indptr, ids = self.incidence
        max_deg = int(np.max(np.diff(indptr))) if self.n_cells else 0
        nbrs = np.full((self.n_cells, max_deg), -1, dtype=int)
        wts = np.zeros((self.n_cells, max_deg))
        for c in range(self.n_cells):
            es = ids[indptr[c] : indptr[c + 1]]
            other = np.where(self.edge_cells[es, 0] == c, self.edge_cells[es, 1], self.edge_cells[es, 0])
            nbrs[c, : len(es)] = other
            wts[c, : len(es)] = self.edge_weight[es]
        return nbrs, wts


def interface_weight(graph: SwapGraph, chi: np.ndarray) -> float:
    a, b = graph.edge_cells[:, 0], graph.edge_cells[:, 1]
    return float(np.sum(graph.edge_weight[chi[a] != chi[b]]))


@dataclass(frozen=True)
class SwapOutcome:
    chi: np.ndarray
    accepted: int
    passes: int


def improve_by_swaps(
    graph: SwapGraph,
    chi: np.ndarray,
    bulk_at: np.ndarray,
    rng: np.random.Generator,
    threshold: float = SWAP_THRESHOLD,
) -> SwapOutcome:
    """Descend by volume-preserving pair swaps until no swap improves.

    `bulk_at` has shape (n_cells, 2): the bulk energy contribution of each
    cell at phase 0 and phase 1 (the displacement is frozen during the
    search). Pair deltas are assembled from per-cell flip costs plus an
    adjacency correction (a shared edge stays an interface when both of its
    cells flip, which the two one-cell costs would double-count).
    """
    chi = np.ascontiguousarray(chi, dtype=np.int8).copy()
    e0, e1 = graph.edge_cells[:, 0], graph.edge_cells[:, 1]
    diff = chi[e0] != chi[e1]
    indptr, inc_ids = graph.incidence
    nbrs, nbr_w = graph.neighbor_table

    def perimeter_flip(cells):
        out = np.empty(len(cells))
        for idx, c in enumerate(cells):
            es = inc_ids[indptr[c] : indptr[c + 1]]
            out[idx] = np.sum(graph.edge_weight[es] * (1.0 - 2.0 * diff[es]))
        return out

    dp = np.empty(graph.n_cells)
    sgn = graph.edge_weight * (1.0 - 2.0 * diff)
    dp[:] = 0.0
    np.add.at(dp, e0, sgn)
    np.add.at(dp, e1, sgn)
    bulk_flip = bulk_at[np.arange(graph.n_cells), 1 - chi] - bulk_at[np.arange(graph.n_cells), chi]
    fc = bulk_flip + dp

    total_accepted = 0
    passes = 0
    while True:
        passes += 1
        ones = np.where(chi == 1)[0]
        zeros = np.where(chi == 0)[0]
        if len(ones) == 0 or len(zeros) == 0:
            break
        n_pairs = len(ones) * len(zeros)
        perm = rng.permutation(n_pairs)
        accepted_this_pass = 0
        pos = 0
        while pos < n_pairs:
            chunk = perm[pos : pos + _SCAN_CHUNK]
            i = ones[chunk // len(zeros)]
            j = zeros[chunk % len(zeros)]
            valid = (chi[i] == 1) & (chi[j] == 0)
            corr = 2.0 * np.sum(nbr_w[i] * (nbrs[i] == j[:, None]), axis=1)
            delta = fc[i] + fc[j] + corr
            ok = valid & (delta < threshold)
            if not np.any(ok):
                pos += len(chunk)
                continue
            k = int(np.argmax(ok))
            ci, cj = int(i[k]), int(j[k])
            chi[ci] = 0
            chi[cj] = 1
            touched_edges = np.unique(
                np.concatenate([inc_ids[indptr[ci] : indptr[ci + 1]], inc_ids[indptr[cj] : indptr[cj + 1]]])
            )
            diff[touched_edges] = chi[e0[touched_edges]] != chi[e1[touched_edges]]
            affected = np.unique(
                np.concatenate([[ci, cj], nbrs[ci][nbrs[ci] >= 0], nbrs[cj][nbrs[cj] >= 0]])
            )
            dp[affected] = perimeter_flip(affected)
            fc[affected] = (
                bulk_at[affected, 1 - chi[affected]] - bulk_at[affected, chi[affected]] + dp[affected]
            )
            accepted_this_pass += 1
            total_accepted += 1
            pos += k + 1
        if accepted_this_pass == 0:
            break
    return SwapOutcome(chi=chi, accepted=total_accepted, passes=passes)
