"""Synchronous message-passing simulator for the dual-consensus rounds.

Both update schemes run as bulk-synchronous rounds over a fixed undirected
graph.  Every cross-agent read goes through a :class:`Mailbox`, so the code
cannot accidentally use a value that was never communicated; per-round
algebraic identities (cone split, column-sum conservation, the cumulative
constraint identity, and the ergodic feasibility bound) are asserted as the
simulation advances.

Single-exchange round (one broadcast of y per agent)::

    ytilde_i = d'_i y_i - rho * sum_j W_ij y_j - v_i
    x_i+     = argmin_{X_i} f_i + (1/2d'_i)(||[mu~+g_i]_+||^2 + ||lam~+h_i||^2)
                              + (alpha/2)||x - x_i||^2
    y_i+     = (1/d'_i) * Pi_K(ytilde_i + [g_i; h_i](x_i+))
    v_i+     = v_i + rho * sum_j W_ij y_j+

Double-exchange round (broadcasts y then u)::

    ytilde_i = d'_i y_i - sum_j L_ij u_j
    ...same local solve and cone projection...
    z_i+     = z_i + rho * sum_j L_ij y_j+
    u_i+     = z_i+ + rho * sum_j M_ij y_j+

K is the cone R_+^m x R^p; the split of the pre-projection vector into its
K-part and polar-cone part is recomputed independently and checked to
reconstruct the input exactly (Moreau decomposition).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AssumptionViolatedError,
    ConfigError,
    DimMismatchError,
    InsufficientDataError,
    InvalidInitError,
    InvariantBreachError,
    MailboxError,
)
from .graphs import ParamSetting, block_quadratic_norm, spectral_quantities
from .localsolver import DEFAULT_MAX_ITERS, DEFAULT_TOL, solve_local_batch
from .problem import Problem, StackedPoint, coupled_violation_norm, gtilde_rows
from .textdoc import DocReader, DocWriter

#: exact-identity tolerance for the Moreau split and its complementarity
MOREAU_TOL = 1e-10
#: elementwise cone-sign tolerance for mu-blocks of y and sigma
CONE_TOL = 1e-14
#: column-sum conservation of v, per round
VSUM_TOL_PER_ROUND = 1e-9
#: cumulative constraint identity budget at round 1000 (scales linearly after)
CUMULATIVE_TOL = 1e-8
#: inexact-inner-solve slack = EPS_INNER_FACTOR * inner tolerance
EPS_INNER_FACTOR = 100.0


def eps_inner(tol_inner: float) -> float:
    """Slack absorbed by bound checks for certified-inexact local solves."""
    return EPS_INNER_FACTOR * tol_inner


class Mailbox:
    """Per-agent inboxes of round-tagged neighbor messages.

    Each (receiver, kind, sender) slot keeps the most recent message together
    with the round index it was sent in.  A collect for a different round
    means some agent skipped a send, or a phase tried to read stale data --
    both are programming errors surfaced as :class:`MailboxError`.
    """

    def __init__(self, neighbor_lists):
        self.neighbor_lists = [tuple(ns) for ns in neighbor_lists]
        n = len(self.neighbor_lists)
        for i, ns in enumerate(self.neighbor_lists):
            if any(j == i or not 0 <= j < n for j in ns):
                raise MailboxError(f"invalid neighbor list for agent {i}: {ns}")
        self._slots = [dict() for _ in range(n)]
        self.reals_sent = 0

    def send(self, sender, receiver, kind, round_index, vec, count=True):
        if sender not in self.neighbor_lists[receiver]:
            raise MailboxError(
                f"agent {sender} is not a neighbor of {receiver}; send refused"
            )
        self._slots[receiver][(kind, sender)] = (
            round_index,
            np.array(vec, dtype=float, copy=True),
        )
        if count:
            self.reals_sent += len(vec)

    def collect(self, receiver, kind, round_index):
        """Messages of one kind from all neighbors, for one specific round."""
        out = {}
        for j in self.neighbor_lists[receiver]:
            slot = self._slots[receiver].get((kind, j))
            if slot is None:
                raise MailboxError(
                    f"agent {receiver} has no '{kind}' message from neighbor {j}"
                )
            sent_round, vec = slot
            if sent_round != round_index:
                raise MailboxError(
                    f"agent {receiver} read '{kind}' from {j} tagged round "
                    f"{sent_round}, expected {round_index}"
                )
            out[j] = vec
        return out


@dataclass
class NetworkState:
    """Complete state of the network after ``k`` rounds.

    Arrays are stored as agent rows: ``X`` is (N, dmax) zero-padded, the dual
    quantities ``Y``/``V``/``SIG`` (and ``Z``/``U`` in double mode) are
    (N, m+p).  ``V`` always holds the implicit disagreement variable; in
    double mode it mirrors ``L @ Z`` and is never communicated.  Running sums
    support O(1) ergodic averages; ``cum_gs`` accumulates
    sum_l sum_i ([g_i; h_i](x_i^l) + sigma_i^l) for the cumulative identity.
    """

    k: int
    X: np.ndarray
    Y: np.ndarray
    V: np.ndarray
    SIG: np.ndarray
    X0: np.ndarray
    Y0: np.ndarray
    sum_X: np.ndarray
    sum_Y: np.ndarray
    cum_gs: np.ndarray
    Z: np.ndarray | None = None
    U: np.ndarray | None = None
    comm_total: int = 0
    inner_iters_total: int = 0
    solver_failures: int = 0
    moreau_residual: float = 0.0
    cumulative_residual: float = 0.0


def _neighbor_lists(s: ParamSetting):
    """Communication topology: the setting's graph, else matrix sparsity."""
    if s.graph is not None:
        return [tuple(ns) for ns in s.graph.neighbor_lists]
    W = np.abs(s.exchange_matrix).copy()
    if s.exchange_mode == "double":
        W = W + np.abs(s.M_matrix)
    np.fill_diagonal(W, 0.0)
    return [tuple(np.nonzero(W[i])[0]) for i in range(W.shape[0])]


def init(pb: Problem, s: ParamSetting, x0=None, y0=None) -> NetworkState:
    """Fresh state at k=0; double mode computes u0 = z0 + rho * (M y0)_i."""
    n, mp = pb.n_agents, pb.mp
    if s.n_nodes != n:
        raise DimMismatchError(f"setting is for {s.n_nodes} nodes, problem has {n}")
    if (s.d_prime <= 0).any():
        raise AssumptionViolatedError("P_D diagonal must be positive")
    X = np.zeros((n, pb.dmax)) if x0 is None else np.array(x0, dtype=float)
    Y = np.zeros((n, mp)) if y0 is None else np.array(y0, dtype=float)
    if X.shape != (n, pb.dmax):
        raise InvalidInitError(f"x0 must have shape {(n, pb.dmax)}, got {X.shape}")
    if Y.shape != (n, mp):
        raise InvalidInitError(f"y0 must have shape {(n, mp)}, got {Y.shape}")
    for i in range(n):
        if np.any(X[i, pb.dims[i] :] != 0.0):
            raise InvalidInitError(f"x0 row {i} has nonzero padding beyond d_i")
    if pb.m and Y[:, : pb.m].min() < 0.0:
        raise InvalidInitError("y0 mu-blocks must be nonnegative")
    st = NetworkState(
        k=0,
        X=X,
        Y=Y,
        V=np.zeros((n, mp)),
        SIG=np.zeros((n, mp)),
        X0=X.copy(),
        Y0=Y.copy(),
        sum_X=np.zeros((n, pb.dmax)),
        sum_Y=np.zeros((n, mp)),
        cum_gs=np.zeros(mp),
    )
    if s.exchange_mode == "double":
        st.Z = np.zeros((n, mp))
        st.U = st.Z + s.rho * (s.M_matrix @ Y)
    return st


def seed_mailbox(st: NetworkState, s: ParamSetting) -> Mailbox:
    """Mailbox carrying the initial (uncounted) dissemination of y0 (and u0)."""
    mb = Mailbox(_neighbor_lists(s))
    for i in range(s.n_nodes):
        for j in mb.neighbor_lists[i]:
            mb.send(i, j, "y", st.k, st.Y[i], count=False)
            if s.exchange_mode == "double":
                mb.send(i, j, "u", st.k, st.U[i], count=False)
    mb.reals_sent = st.comm_total
    return mb


def cone_split(pre: np.ndarray, m: int):
    """Split rows into projections onto K = R_+^m x R^p and its polar cone.

    Returns (proj, sigma) with proj - sigma == pre and proj * sigma == 0
    per coordinate; the polar of K is R_-^m x {0}^p and sigma is the negated
    polar projection, hence nonnegative mu-blocks and exactly zero lambda-
    blocks.
    """
    proj = pre.copy()
    np.maximum(pre[:, :m], 0.0, out=proj[:, :m])
    sigma = np.zeros_like(pre)
    np.maximum(-pre[:, :m], 0.0, out=sigma[:, :m])
    return proj, sigma


def _weighted_neighbor_sum(W, i, own, received):
    """W_ii * own + sum_j W_ij * received[j], in fixed neighbor order."""
    acc = W[i, i] * own
    for j, vec in received.items():
        acc = acc + W[i, j] * vec
    return acc


def _dual_and_cone_update(st, pb, s, ytilde, X_new):
    """Shared y/sigma update + exact-identity residuals for both modes."""
    m = pb.m
    gt = gtilde_rows(pb, X_new)
    pre = ytilde + gt
    proj, sig = cone_split(pre, m)
    Y_new = proj / s.d_prime[:, None]
    recon = s.d_prime[:, None] * Y_new - sig
    moreau = float(np.abs(recon - pre).max())
    compl = float(np.abs(np.sum((s.d_prime[:, None] * Y_new) * sig, axis=1)).max())
    return gt, Y_new, sig, moreau, compl


def _check_exact(st, pb, s, moreau, compl, check_vsum):
    k = st.k
    if moreau > MOREAU_TOL:
        raise InvariantBreachError(f"round {k}: Moreau split residual {moreau:.3e}")
    if compl > MOREAU_TOL:
        raise InvariantBreachError(f"round {k}: cone complementarity {compl:.3e}")
    if pb.m:
        if st.Y[:, : pb.m].min() < -CONE_TOL:
            raise InvariantBreachError(f"round {k}: negative mu-block in y")
        if st.SIG[:, : pb.m].min() < -CONE_TOL:
            raise InvariantBreachError(f"round {k}: negative mu-block in sigma")
    if pb.p and np.any(st.SIG[:, pb.m :] != 0.0):
        raise InvariantBreachError(f"round {k}: sigma lambda-block not exactly zero")
    if check_vsum:
        vsum = float(np.abs(st.V.sum(axis=0)).max())
        if vsum > VSUM_TOL_PER_ROUND * max(k, 1):
            raise InvariantBreachError(
                f"round {k}: sum_i v_i = {vsum:.3e} exceeds {VSUM_TOL_PER_ROUND:g}*k"
            )


def _cumulative_residual(st, s) -> float:
    """sum_l sum_i (gtilde_i + sigma_i) == column sums of P_A (Y - Y0)."""
    rhs = (s.P_A.sum(axis=0)) @ (st.Y - st.Y0)
    return float(np.abs(st.cum_gs - rhs).max())


def _check_ergodic_bound(st, pb, s, lam1_PA, tol_inner):
    """Per-round ergodic feasibility bound (norm-A form, certificate-free)."""
    fe = coupled_violation_norm(pb, st.sum_X / st.k)
    bound = (
        np.sqrt(pb.n_agents * lam1_PA) / st.k
    ) * block_quadratic_norm(s.P_A, st.Y - st.Y0) + eps_inner(tol_inner)
    if fe > bound:
        raise InvariantBreachError(
            f"round {st.k}: ergodic feasibility {fe:.6e} exceeds bound {bound:.6e}"
        )


def _finish_round(st, pb, s, gt, iters, done, moreau, compl, mailbox,
                  check, lam1_PA, tol_inner):
    st.sum_X += st.X
    st.sum_Y += st.Y
    st.cum_gs += gt.sum(axis=0) + st.SIG.sum(axis=0)
    st.k += 1
    st.comm_total = mailbox.reals_sent
    st.inner_iters_total += int(iters.sum())
    st.solver_failures += int((~done).sum())
    st.moreau_residual = max(moreau, compl)
    st.cumulative_residual = _cumulative_residual(st, s)
    if check:
        _check_exact(st, pb, s, moreau, compl, s.exchange_mode == "single")
        bar = CUMULATIVE_TOL * max(1.0, st.k / 1000.0)
        if st.cumulative_residual > bar:
            raise InvariantBreachError(
                f"round {st.k}: cumulative constraint identity residual "
                f"{st.cumulative_residual:.3e}"
            )
        if lam1_PA is None:
            lam1_PA = spectral_quantities(s).lam1_PA
        _check_ergodic_bound(st, pb, s, lam1_PA, tol_inner)
    return st


def single_exchange_round(st, pb, s, mailbox=None, tol_inner=DEFAULT_TOL,
                          max_iters=DEFAULT_MAX_ITERS, check=True, lam1_PA=None):
    """One synchronous round of the single-broadcast scheme (in place)."""
    if s.exchange_mode != "single":
        raise ConfigError("setting is not in single-exchange mode")
    mb = mailbox if mailbox is not None else seed_mailbox(st, s)
    W, rho, d = s.P_H, s.rho, s.d_prime
    k, n = st.k, s.n_nodes

    Wy = np.empty_like(st.Y)
    for i in range(n):
        Wy[i] = _weighted_neighbor_sum(W, i, st.Y[i], mb.collect(i, "y", k))
    ytilde = d[:, None] * st.Y - rho * Wy - st.V

    X_new, _res, iters, done, _vals, _ = solve_local_batch(
        pb, ytilde, d, s.alpha, st.X, tol=tol_inner, max_iters=max_iters
    )
    gt, Y_new, sig, moreau, compl = _dual_and_cone_update(st, pb, s, ytilde, X_new)

    for i in range(n):
        for j in mb.neighbor_lists[i]:
            mb.send(i, j, "y", k + 1, Y_new[i])
    Wy_new = np.empty_like(Y_new)
    for i in range(n):
        Wy_new[i] = _weighted_neighbor_sum(W, i, Y_new[i], mb.collect(i, "y", k + 1))

    st.X, st.Y, st.SIG = X_new, Y_new, sig
    st.V = st.V + rho * Wy_new
    return _finish_round(st, pb, s, gt, iters, done, moreau, compl, mb,
                         check, lam1_PA, tol_inner)


def double_exchange_round(st, pb, s, mailbox=None, tol_inner=DEFAULT_TOL,
                          max_iters=DEFAULT_MAX_ITERS, check=True, lam1_PA=None):
    """One synchronous round of the double-broadcast scheme (in place)."""
    if s.exchange_mode != "double":
        raise ConfigError("setting is not in double-exchange mode")
    mb = mailbox if mailbox is not None else seed_mailbox(st, s)
    L, M, rho, d = s.L_matrix, s.M_matrix, s.rho, s.d_prime
    k, n = st.k, s.n_nodes

    Lu = np.empty_like(st.U)
    for i in range(n):
        Lu[i] = _weighted_neighbor_sum(L, i, st.U[i], mb.collect(i, "u", k))
    ytilde = d[:, None] * st.Y - Lu

    X_new, _res, iters, done, _vals, _ = solve_local_batch(
        pb, ytilde, d, s.alpha, st.X, tol=tol_inner, max_iters=max_iters
    )
    gt, Y_new, sig, moreau, compl = _dual_and_cone_update(st, pb, s, ytilde, X_new)

    for i in range(n):
        for j in mb.neighbor_lists[i]:
            mb.send(i, j, "y", k + 1, Y_new[i])
    Ly = np.empty_like(Y_new)
    My = np.empty_like(Y_new)
    for i in range(n):
        got = mb.collect(i, "y", k + 1)
        Ly[i] = _weighted_neighbor_sum(L, i, Y_new[i], got)
        My[i] = _weighted_neighbor_sum(M, i, Y_new[i], got)
    Z_new = st.Z + rho * Ly
    # u must satisfy u+ = rho*(sum_j M_ij y_j+) + z+ so that the round's
    # pre-projection vector equals A y - Htilde^{1/2} z; building u from the
    # stale z would shift the effective coupling matrix to L(M - L), which
    # breaks the P_H >= P_Htilde requirement (it is 0 >= L^2 when M = L).
    U_new = Z_new + rho * My
    for i in range(n):
        for j in mb.neighbor_lists[i]:
            mb.send(i, j, "u", k + 1, U_new[i])

    st.X, st.Y, st.SIG = X_new, Y_new, sig
    st.Z, st.U = Z_new, U_new
    st.V = L @ Z_new  # diagnostic mirror of the implicit disagreement variable
    return _finish_round(st, pb, s, gt, iters, done, moreau, compl, mb,
                         check, lam1_PA, tol_inner)


def run(pb, s, rounds, x0=None, y0=None, hook=None, tol_inner=DEFAULT_TOL,
        max_iters=DEFAULT_MAX_ITERS, check=True):
    """Run ``rounds`` synchronous rounds from a fresh state.

    ``hook(st)`` is invoked once on the initial state (k=0) and then after
    every round, in round order.  Returns the final state.
    """
    if rounds < 1:
        raise ConfigError(f"rounds must be >= 1, got {rounds}")
    st = init(pb, s, x0=x0, y0=y0)
    mb = seed_mailbox(st, s)
    lam1 = spectral_quantities(s).lam1_PA
    step = single_exchange_round if s.exchange_mode == "single" else double_exchange_round
    if hook is not None:
        hook(st)
    for _ in range(rounds):
        step(st, pb, s, mailbox=mb, tol_inner=tol_inner, max_iters=max_iters,
             check=check, lam1_PA=lam1)
        if hook is not None:
            hook(st)
    return st


def ergodic_point(st: NetworkState, pb: Problem):
    """Running averages: (stacked x-average, consensus estimate of y).

    The consensus estimate is the mean across agents of each agent's running
    y-average -- the projection of the stacked average onto the consensus
    subspace.
    """
    if st.k < 1:
        raise InsufficientDataError("ergodic averages need at least one round")
    xbar = StackedPoint.from_rows(st.sum_X / st.k, pb.dims)
    ybar = (st.sum_Y / st.k).mean(axis=0)
    return xbar, ybar


# ---------------------------------------------------------------------------
# Checkpointing


def dump_state(st: NetworkState) -> str:
    """Serialize a state to structured text; bit-exact round trip."""
    w = DocWriter("netstate", 1)
    w.scalar("k", st.k)
    w.scalar("comm_total", st.comm_total)
    w.scalar("inner_iters_total", st.inner_iters_total)
    w.scalar("solver_failures", st.solver_failures)
    w.scalar("moreau_residual", st.moreau_residual)
    w.scalar("cumulative_residual", st.cumulative_residual)
    w.scalar("double_mode", st.Z is not None)
    for name in ("X", "Y", "V", "SIG", "X0", "Y0", "sum_X", "sum_Y", "cum_gs"):
        w.array(name, getattr(st, name))
    if st.Z is not None:
        w.array("Z", st.Z)
        w.array("U", st.U)
    return w.text()


def load_state(text: str) -> NetworkState:
    r = DocReader(text, "netstate")
    k = r.scalar_int("k")
    comm = r.scalar_int("comm_total")
    inner = r.scalar_int("inner_iters_total")
    fails = r.scalar_int("solver_failures")
    moreau = r.scalar_float("moreau_residual")
    cum = r.scalar_float("cumulative_residual")
    double_mode = r.scalar_bool("double_mode")
    arrays = {
        name: r.array(name)
        for name in ("X", "Y", "V", "SIG", "X0", "Y0", "sum_X", "sum_Y", "cum_gs")
    }
    Z = U = None
    if double_mode:
        Z = r.array("Z")
        U = r.array("U")
    r.done()
    return NetworkState(
        k=k,
        Z=Z,
        U=U,
        comm_total=comm,
        inner_iters_total=inner,
        solver_failures=fails,
        moreau_residual=moreau,
        cumulative_residual=cum,
        **arrays,
    )
