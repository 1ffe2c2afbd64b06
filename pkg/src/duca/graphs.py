"""Graph topologies, Laplacian-type matrices, and algorithm parameter settings.

Builds the undirected communication graph, the Metropolis and related
graph-Laplacian-type weight matrices, and the six named parameter settings
(``P_H``, ``P_Htilde``, ``P_D``, ``rho``) consumed by the round engine.  Also
validates the positive-semidefiniteness / nullspace conditions that every
setting must satisfy, and computes the spectral quantities that enter the
convergence bounds.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    AssumptionViolatedError,
    DisconnectedError,
    InvalidEdgeError,
    MissingTuningError,
    PatternMismatchError,
)

__all__ = [
    "Graph",
    "Variant",
    "ParamSetting",
    "Check",
    "ValidationReport",
    "SpectralQuantities",
    "build_graph",
    "random_connected_graph",
    "metropolis_matrix",
    "laplacian_from_weights",
    "make_setting",
    "validate_setting",
    "spectral_quantities",
    "export_matrix_csv",
]

# Eigenvalue tolerances: symmetric eigensolvers are accurate to ~1e-12 * ||A||
# at the sizes used here, so -1e-9 is a safe PSD cut and 1e-9 a safe zero cut.
PSD_TOL = -1e-9
NULL_TOL = 1e-9
PINV_CUT = 1e-10


# ---------------------------------------------------------------------------
# Graph container and constructors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Graph:
    """Undirected connected graph with sorted neighbor lists.

    Attributes
    ----------
    n_nodes : int
        Number of agents N.
    edges : tuple of (i, j) pairs with i < j
        The undirected link set.
    neighbor_lists : tuple of tuples
        ``neighbor_lists[i]`` is the sorted tuple of neighbors of node i.
    """

    n_nodes: int
    edges: tuple
    neighbor_lists: tuple

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degree(self, i: int) -> int:
        return len(self.neighbor_lists[i])


def build_graph(n: int, edges) -> Graph:
    """Validate an edge list and return a connected Graph.

    Raises InvalidEdgeError for out-of-range/self-loop/duplicate edges and
    DisconnectedError if some node is unreachable from node 0.
    """
    if n < 1:
        raise InvalidEdgeError(f"need at least one node, got n={n}")
    seen = set()
    canon = []
    for e in edges:
        i, j = int(e[0]), int(e[1])
        if not (0 <= i < n and 0 <= j < n):
            raise InvalidEdgeError(f"edge ({i},{j}) out of range for n={n}")
        if i == j:
            raise InvalidEdgeError(f"self-loop at node {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise InvalidEdgeError(f"duplicate edge {key}")
        seen.add(key)
        canon.append(key)
    canon.sort()
    nbrs = [[] for _ in range(n)]
    for i, j in canon:
        nbrs[i].append(j)
        nbrs[j].append(i)
    # connectivity: BFS from node 0
    reach = {0}
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in nbrs[u]:
                if v not in reach:
                    reach.add(v)
                    nxt.append(v)
        frontier = nxt
    if len(reach) != n:
        missing = sorted(set(range(n)) - reach)
        raise DisconnectedError(f"nodes unreachable from 0: {missing}")
    return Graph(
        n_nodes=n,
        edges=tuple(canon),
        neighbor_lists=tuple(tuple(sorted(a)) for a in nbrs),
    )


def random_connected_graph(n: int, n_edges: int, seed: int) -> Graph:
    """Random connected graph: Pruefer-sequence spanning tree + uniform extra edges.

    Deterministic for a fixed seed.  Requires n-1 <= n_edges <= n(n-1)/2.
    """
    if n == 1:
        if n_edges != 0:
            raise InvalidEdgeError("a single node admits no edges")
        return build_graph(1, [])
    max_edges = n * (n - 1) // 2
    if not (n - 1 <= n_edges <= max_edges):
        raise InvalidEdgeError(
            f"n_edges={n_edges} out of [{n - 1}, {max_edges}] for n={n}"
        )
    rng = np.random.default_rng(seed)
    if n == 2:
        tree = [(0, 1)]
    else:
        # Pruefer decode: every sequence over {0..n-1}^(n-2) maps to a tree.
        seq = [int(v) for v in rng.integers(0, n, size=n - 2)]
        degree = [1] * n
        for v in seq:
            degree[v] += 1
        tree = []
        for v in seq:
            leaf = min(i for i in range(n) if degree[i] == 1)
            tree.append((min(leaf, v), max(leaf, v)))
            degree[leaf] -= 1
            degree[v] -= 1
        last = [i for i in range(n) if degree[i] == 1]
        tree.append((last[0], last[1]))
    have = set(tree)
    # uniform extra edges among the absent pairs
    absent = [
        (i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in have
    ]
    extra = n_edges - len(have)
    if extra > 0:
        pick = rng.choice(len(absent), size=extra, replace=False)
        for idx in sorted(int(t) for t in pick):
            have.add(absent[idx])
    return build_graph(n, sorted(have))


# ---------------------------------------------------------------------------
# Weight matrices
# ---------------------------------------------------------------------------


def metropolis_matrix(g: Graph) -> np.ndarray:
    """Metropolis Laplacian-type matrix M.

    Off-diagonals are -1/(max{deg_i, deg_j}+1) on edges and 0 otherwise; each
    diagonal entry is the negated off-diagonal row sum, so M @ 1 = 0 and M is
    positive semidefinite with nullspace span(1) on a connected graph.
    """
    n = g.n_nodes
    M = np.zeros((n, n))
    for i, j in g.edges:
        w = -1.0 / (max(g.degree(i), g.degree(j)) + 1)
        M[i, j] = w
        M[j, i] = w
    for i in range(n):
        M[i, i] = -M[i].sum() + M[i, i]
    return M


def laplacian_from_weights(W: np.ndarray, g: Graph) -> np.ndarray:
    """Graph Laplacian diag(row sums) - W for an admissible weight matrix W.

    W must be symmetric, strictly positive on edges, zero on non-edges, and
    nonnegative on the diagonal; self-weights cancel out of the Laplacian.
    """
    W = np.asarray(W, dtype=float)
    n = g.n_nodes
    if W.shape != (n, n):
        raise PatternMismatchError(f"weight matrix shape {W.shape} != ({n},{n})")
    if not np.allclose(W, W.T, atol=1e-12, rtol=0.0):
        raise PatternMismatchError("weight matrix is not symmetric")
    edge_set = set(g.edges)
    for i in range(n):
        if W[i, i] < 0:
            raise PatternMismatchError(f"negative self-weight at node {i}")
        for j in range(i + 1, n):
            on_edge = (i, j) in edge_set
            if on_edge and W[i, j] <= 0:
                raise PatternMismatchError(f"non-positive weight on edge ({i},{j})")
            if not on_edge and W[i, j] != 0:
                raise PatternMismatchError(f"nonzero weight off the graph at ({i},{j})")
    return np.diag(W.sum(axis=1)) - W


def export_matrix_csv(M: np.ndarray, path=None) -> str:
    """Render a matrix as CSV (row-major, 17 significant digits); optionally save."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    text = "\n".join(",".join("%.17g" % v for v in row) for row in M) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# Parameter settings
# ---------------------------------------------------------------------------


class Variant(str, Enum):
    DUCA_I = "DUCA_I"
    PEXTRA = "PEXTRA"
    PGC = "PGC"
    DPGA = "DPGA"
    DIST_ADMM = "DIST_ADMM"
    ALT = "ALT"


SINGLE_EXCHANGE = (Variant.DUCA_I, Variant.PEXTRA, Variant.PGC, Variant.DPGA)
DOUBLE_EXCHANGE = (Variant.DIST_ADMM, Variant.ALT)


@dataclass
class ParamSetting:
    """One algorithm parameterization: the penalty matrices and scalars.

    ``P_A = P_D - rho * P_H`` must be PSD, ``P_D`` diagonal positive,
    ``P_H >= P_Htilde`` in the PSD order, and both P_H and P_Htilde must have
    nullspace exactly span(1).  In double-exchange mode ``P_H = L @ M`` and
    ``P_Htilde = L @ L`` hold entrywise, where L is the Laplacian used for the
    second exchanged variable and M its companion.
    """

    variant: Variant
    P_H: np.ndarray
    P_Htilde: np.ndarray
    P_D: np.ndarray
    rho: float
    alpha: float = 0.0
    exchange_mode: str = "single"  # "single" | "double"
    L_matrix: np.ndarray | None = None
    M_matrix: np.ndarray | None = None
    tuning: dict = field(default_factory=dict)
    graph: "Graph | None" = None

    @property
    def exchange_matrix(self) -> np.ndarray:
        """The weight matrix multiplying the exchanged variable in y-tilde."""
        return self.P_H if self.exchange_mode == "single" else self.L_matrix

    @property
    def n_nodes(self) -> int:
        return self.P_H.shape[0]

    @property
    def P_A(self) -> np.ndarray:
        return self.P_D - self.rho * self.P_H

    @property
    def d_prime(self) -> np.ndarray:
        """Diagonal of P_D as a vector."""
        return np.diag(self.P_D).copy()


def _dpga_scale(g: Graph, c: float) -> float:
    min_deg = min(g.degree(i) for i in range(g.n_nodes))
    return float(np.sqrt(c * g.n_nodes / (g.n_edges * min_deg)))


def make_setting(variant, g: Graph, rho: float, alpha: float = 0.0, tuning=None) -> ParamSetting:
    """Construct and validate one named parameter setting on graph g.

    Parameters
    ----------
    variant : Variant or str
        One of DUCA_I, PEXTRA, PGC, DPGA (single exchange), DIST_ADMM, ALT
        (double exchange).
    rho : float
        Penalty scalar.  PGC and DPGA fix rho = 1 (their knobs are the tuning
        constants below).
    alpha : float
        Proximal weight; 0 gives the plain method, > 0 the proximal variant.
    tuning : dict, optional
        Variant-specific constants: ``c`` (DUCA_I, >= 2, default 2.0),
        ``rho_prime`` (PGC, required), ``c`` (DPGA, required).

    Raises
    ------
    MissingTuningError, AssumptionViolatedError
    """
    variant = Variant(variant)
    tuning = dict(tuning or {})
    if rho <= 0:
        raise AssumptionViolatedError(f"rho must be positive, got {rho}")
    if alpha < 0:
        raise AssumptionViolatedError(f"alpha must be nonnegative, got {alpha}")
    n = g.n_nodes
    MG = metropolis_matrix(g)
    L_mat = None
    M_mat = None
    used_keys = set()

    if variant == Variant.DUCA_I:
        c = float(tuning.get("c", 2.0))
        used_keys.add("c")
        if c < 2.0:
            raise AssumptionViolatedError(f"DUCA_I needs c >= 2, got {c}")
        P_H = MG
        P_Ht = MG.copy()
        P_D = c * rho * np.diag(np.diag(MG))
        mode = "single"
    elif variant == Variant.PEXTRA:
        P_H = MG / 2.0
        P_Ht = MG / 2.0
        P_D = rho * np.eye(n)
        mode = "single"
    elif variant == Variant.PGC:
        if "rho_prime" not in tuning:
            raise MissingTuningError("PGC needs tuning['rho_prime'] > 0")
        rho_prime = float(tuning["rho_prime"])
        used_keys.add("rho_prime")
        if rho_prime <= 0:
            raise MissingTuningError(f"rho_prime must be positive, got {rho_prime}")
        if rho != 1.0:
            raise AssumptionViolatedError("PGC fixes rho = 1; tune rho_prime instead")
        L1 = np.zeros((n, n))
        for i, j in g.edges:
            L1[i, j] = L1[j, i] = -2.0 * rho_prime
        for i in range(n):
            L1[i, i] = -L1[i].sum() + L1[i, i]
        P_H = L1 / 2.0
        P_Ht = L1 / 2.0
        P_D = np.diag(np.diag(L1))
        mode = "single"
    elif variant == Variant.DPGA:
        if "c" not in tuning:
            raise MissingTuningError("DPGA needs tuning['c'] > 0")
        c = float(tuning["c"])
        used_keys.add("c")
        if c <= 0:
            raise MissingTuningError(f"c must be positive, got {c}")
        if rho != 1.0:
            raise AssumptionViolatedError("DPGA fixes rho = 1; tune c instead")
        s = _dpga_scale(g, c)
        L2 = np.zeros((n, n))
        for i, j in g.edges:
            L2[i, j] = L2[j, i] = -s / 2.0
        for i in range(n):
            L2[i, i] = -L2[i].sum() + L2[i, i]
        P_H = L2
        P_Ht = L2.copy()
        P_D = s * np.diag([float(g.degree(i)) for i in range(n)])
        mode = "single"
    elif variant == Variant.DIST_ADMM:
        L_mat = MG
        M_mat = MG
        P_H = MG @ MG
        P_Ht = MG @ MG
        deg1 = np.array([g.degree(j) + 1.0 for j in range(n)])
        P_D = np.diag((MG**2) @ deg1)
        mode = "double"
    elif variant == Variant.ALT:
        W4 = np.eye(n) - MG / 2.0
        L_mat = np.eye(n) - W4  # = MG / 2
        M_mat = np.eye(n) + W4  # = 2I - L
        P_H = L_mat @ M_mat  # = I - W4 @ W4
        P_Ht = L_mat @ L_mat  # = (I - W4)^2
        P_D = rho * np.eye(n)
        mode = "double"
    else:  # pragma: no cover
        raise AssumptionViolatedError(f"unknown variant {variant}")

    unknown = set(tuning) - used_keys
    if unknown:
        raise MissingTuningError(f"unknown tuning keys for {variant.value}: {sorted(unknown)}")

    s = ParamSetting(
        variant=variant,
        P_H=P_H,
        P_Htilde=P_Ht,
        P_D=P_D,
        rho=float(rho),
        alpha=float(alpha),
        exchange_mode=mode,
        L_matrix=L_mat,
        M_matrix=M_mat,
        tuning={k: float(v) for k, v in tuning.items()},
        graph=g,
    )
    report = validate_setting(s)
    if not report.passed:
        raise AssumptionViolatedError(
            f"{variant.value} setting fails validation:\n{report}"
        )
    return s


# ---------------------------------------------------------------------------
# Validation and spectral quantities
# ---------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def __str__(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}" + (f" ({self.detail})" if self.detail else "")


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self):
        return "\n".join(str(c) for c in self.checks)


def _sym_eigs(M):
    """Eigenvalues (ascending) and vectors of the symmetrized matrix."""
    S = 0.5 * (M + M.T)
    return np.linalg.eigh(S)


def _nullspace_is_ones(M, n, checks, label):
    """Append checks that M's nullspace is exactly span(1)."""
    vals, vecs = _sym_eigs(M)
    scale = max(abs(vals[-1]), 1.0)
    checks.append(
        Check(
            f"{label} smallest eigenvalue ~ 0",
            abs(vals[0]) < NULL_TOL * scale,
            f"lam_min={vals[0]:.3e}",
        )
    )
    ones = np.ones(n) / np.sqrt(n)
    align = abs(float(vecs[:, 0] @ ones))
    checks.append(
        Check(
            f"{label} null eigenvector is the ones direction",
            align > 1.0 - 1e-8,
            f"|<v0, 1/sqrt(N)>|={align:.12f}",
        )
    )
    if n > 1:
        checks.append(
            Check(
                f"{label} second-smallest eigenvalue > 0",
                vals[1] > NULL_TOL * scale,
                f"lam_2={vals[1]:.3e}",
            )
        )


def validate_setting(s: ParamSetting) -> ValidationReport:
    """Report-style validation of every standing matrix assumption."""
    checks = []
    n = s.n_nodes
    for label, M in (("P_H", s.P_H), ("P_Htilde", s.P_Htilde)):
        checks.append(
            Check(
                f"{label} symmetric",
                bool(np.allclose(M, M.T, atol=1e-12, rtol=0.0)),
            )
        )
        vals, _ = _sym_eigs(M)
        checks.append(
            Check(f"{label} PSD", vals[0] >= PSD_TOL, f"lam_min={vals[0]:.3e}")
        )
    off = s.P_D - np.diag(np.diag(s.P_D))
    checks.append(Check("P_D diagonal", float(np.abs(off).max()) == 0.0))
    dmin = float(np.diag(s.P_D).min()) if n else 0.0
    checks.append(Check("P_D positive", dmin > 0.0, f"min diag={dmin:.3e}"))
    vals_A, _ = _sym_eigs(s.P_A)
    checks.append(
        Check("P_A = P_D - rho*P_H PSD", vals_A[0] >= PSD_TOL, f"lam_min={vals_A[0]:.3e}")
    )
    vals_diff, _ = _sym_eigs(s.P_H - s.P_Htilde)
    checks.append(
        Check(
            "P_H >= P_Htilde (PSD order)",
            vals_diff[0] >= PSD_TOL,
            f"lam_min={vals_diff[0]:.3e}",
        )
    )
    _nullspace_is_ones(s.P_H, n, checks, "P_H")
    _nullspace_is_ones(s.P_Htilde, n, checks, "P_Htilde")
    checks.append(Check("rho positive", s.rho > 0, f"rho={s.rho}"))
    checks.append(Check("alpha nonnegative", s.alpha >= 0, f"alpha={s.alpha}"))
    if s.exchange_mode == "double":
        okL = s.L_matrix is not None and s.M_matrix is not None
        checks.append(Check("double mode carries L and M", okL))
        if okL:
            errH = float(np.abs(s.P_H - s.L_matrix @ s.M_matrix).max())
            errHt = float(np.abs(s.P_Htilde - s.L_matrix @ s.L_matrix).max())
            checks.append(Check("P_H == L @ M", errH <= 1e-12, f"max err={errH:.3e}"))
            checks.append(Check("P_Htilde == L @ L", errHt <= 1e-12, f"max err={errHt:.3e}"))
    return ValidationReport(checks)


def block_quadratic_norm(M: np.ndarray, rows: np.ndarray) -> float:
    """sqrt(y^T (M kron I) y) for y stored as (N, b) agent rows.

    The Kronecker-lifted quadratic form reduces to sum(rows * (M @ rows));
    tiny negative values from roundoff on PSD M are clipped to zero.
    """
    val = float(np.sum(rows * (M @ rows)))
    return float(np.sqrt(max(val, 0.0)))


@dataclass
class SpectralQuantities:
    lam1_PA: float
    lamNm1_PHtilde: float
    pinv_PHtilde: np.ndarray


def spectral_quantities(s: ParamSetting) -> SpectralQuantities:
    """Largest eigenvalue of P_A, second-smallest of P_Htilde, and its pseudo-inverse.

    Eigenvalues below ``PINV_CUT`` times the largest magnitude are treated as
    zero when inverting (the only intended null direction is the ones vector).
    """
    vals_A, _ = _sym_eigs(s.P_A)
    lam1 = max(float(vals_A[-1]), 0.0)
    vals, vecs = _sym_eigs(s.P_Htilde)
    n = s.n_nodes
    lam_nm1 = float(vals[1]) if n > 1 else float("nan")
    scale = max(float(np.abs(vals).max()), 1.0)
    keep = np.abs(vals) > PINV_CUT * scale
    inv = np.where(keep, 1.0 / np.where(keep, vals, 1.0), 0.0)
    pinv = (vecs * inv) @ vecs.T
    return SpectralQuantities(lam1_PA=lam1, lamNm1_PHtilde=lam_nm1, pinv_PHtilde=pinv)
