"""Dense Hermitian(-definite) eigensolver, degeneracy clustering, curve tracking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from .errors import PositiveDefiniteError

#: Relative gap tolerance used to detect true degeneracies at t = 0.
TAU_REL_DEGENERATE = 1e-6
#: Tighter tolerance for split detection at t > 0, so first-order splits of
#: size ~ t * gap are resolved as distinct clusters.
TAU_REL_SPLIT = 1e-9
#: Acceptable per-vector residual ||A x - lambda B x|| (with ||x||_B = 1).
RESIDUAL_BOUND = 1e-9


@dataclass(frozen=True)
class ClusterInfo:
    """A maximal run of numerically equal eigenvalues."""

    lam: float
    mult_c: int
    mult_h: int
    start: int
    stop: int  # exclusive
    kramers_ok: bool


@dataclass
class SpectrumResult:
    """Sorted spectrum of one (A, B) solve with clustering and metadata.

    ``vectors`` are B-orthonormal columns with canonical phases; ``B`` is kept
    (when requested) so curve matching can score eigenvector overlaps in the
    deformed inner product.  Serialized artifacts carry only eigenvalues,
    clusters, the residual bound and metadata.
    """

    eigenvalues: np.ndarray
    clusters: list[ClusterInfo]
    residual_max: float
    meta: dict
    vectors: np.ndarray | None = None
    B: np.ndarray | None = None
    mode_set: object = None

    def cluster_of(self, lam):
        """The cluster whose representative is closest to lam."""
        if not self.clusters:
            raise ValueError("empty spectrum")
        best = min(self.clusters, key=lambda c: abs(c.lam - lam))
        return best

    def to_json_dict(self):
        return {
            "meta": {
                "delta": list(self.meta.get("delta", [])),
                "N": self.meta.get("N"),
                "t": self.meta.get("t"),
                "f_ref": self.meta.get("f_ref"),
                "tau_rel": self.meta.get("tau_rel"),
                "volume": self.meta.get("volume"),
            },
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "clusters": [
                {"lambda": float(c.lam), "mult_c": c.mult_c, "mult_h": c.mult_h}
                for c in self.clusters
            ],
            "residual_max": float(self.residual_max),
        }

    @classmethod
    def from_json_dict(cls, doc):
        values = np.asarray(doc["eigenvalues"], dtype=float)
        clusters = []
        start = 0
        for c in doc["clusters"]:
            mult_c = int(c["mult_c"])
            clusters.append(
                ClusterInfo(
                    lam=float(c["lambda"]),
                    mult_c=mult_c,
                    mult_h=int(c["mult_h"]),
                    start=start,
                    stop=start + mult_c,
                    kramers_ok=mult_c % 2 == 0,
                )
            )
            start += mult_c
        return cls(
            eigenvalues=values,
            clusters=clusters,
            residual_max=float(doc["residual_max"]),
            meta=dict(doc["meta"]),
        )

    def csv_rows(self):
        rows = [("lambda", "mult_complex", "mult_quaternionic")]
        for c in self.clusters:
            rows.append((repr(float(c.lam)), str(c.mult_c), str(c.mult_h)))
        return rows


def canonicalize_phases(V, tol=1e-8):
    """Rotate each column so its first significant entry is real positive.

    Eigenvectors are defined up to phase; fixing it makes derived artifacts
    reproducible.
    """
    V = np.array(V, copy=True)
    absV = np.abs(V)
    for j in range(V.shape[1]):
        col = absV[:, j]
        m = col.max()
        if m == 0.0:
            continue
        i = int(np.argmax(col > tol * m))
        z = V[i, j]
        if z != 0:
            V[:, j] *= np.conj(z) / abs(z)
    return V


def solve_gen_hermitian(A, B=None, residual_bound=RESIDUAL_BOUND):
    """Solve A x = lambda B x for Hermitian A and Hermitian PD B.

    Returns ascending eigenvalues, B-orthonormal phase-canonicalized
    eigenvectors, and the largest per-vector residual
    ``||A x - lambda B x||_2`` (with ``||x||_B = 1``).

    Raises PositiveDefiniteError when B fails its Cholesky factorization and
    RuntimeError when the residual bound is violated.
    """
    A = np.asarray(A)
    if B is not None:
        B = np.asarray(B)
        if B.shape != A.shape:
            raise ValueError("A and B must have matching shapes")
    try:
        w, V = scipy.linalg.eigh(A, B)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - scipy raises below
        raise PositiveDefiniteError(str(exc)) from exc
    except scipy.linalg.LinAlgError as exc:
        raise PositiveDefiniteError(
            f"weight matrix is not positive definite: {exc}"
        ) from exc
    V = canonicalize_phases(V)
    R = A @ V - (B @ V if B is not None else V) * w[None, :]
    residuals = np.linalg.norm(R, axis=0)
    residual_max = float(residuals.max()) if residuals.size else 0.0
    scale = max(1.0, float(np.abs(w).max())) if w.size else 1.0
    if residual_max > residual_bound * scale:
        raise RuntimeError(
            f"eigensolver residual {residual_max:.3e} exceeds bound "
            f"{residual_bound:.3e} * {scale:.3e}"
        )
    return w, V, residual_max


def cluster_eigenvalues(values, tau_rel):
    """Partition sorted eigenvalues into maximal runs of near-equal values.

    Consecutive values belong to the same cluster when their gap is at most
    ``tau_rel * max(1, |value|)``.  Returns ClusterInfo entries; odd complex
    multiplicity is flagged (``kramers_ok=False``) rather than raised.
    """
    values = np.asarray(values, dtype=float)
    if np.any(np.diff(values) < 0):
        raise ValueError("eigenvalues must be sorted ascending")
    clusters = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > tau_rel * max(
            1.0, abs(values[i - 1]), abs(values[i])
        ):
            members = values[start:i]
            mult_c = len(members)
            clusters.append(
                ClusterInfo(
                    lam=float(members.mean()),
                    mult_c=mult_c,
                    mult_h=mult_c // 2,
                    start=start,
                    stop=i,
                    kramers_ok=mult_c % 2 == 0,
                )
            )
            start = i
    return clusters


def build_spectrum_result(
    w, V, residual_max, tau_rel, meta, mode_set=None, B=None, keep_vectors=True
):
    clusters = cluster_eigenvalues(w, tau_rel)
    meta = dict(meta)
    meta["tau_rel"] = tau_rel
    return SpectrumResult(
        eigenvalues=np.asarray(w, dtype=float),
        clusters=clusters,
        residual_max=residual_max,
        meta=meta,
        vectors=V if keep_vectors else None,
        B=B,
        mode_set=mode_set,
    )


@dataclass
class CurveFamily:
    """Eigenvalue trajectories matched across a deformation parameter grid.

    ``flagged`` marks trajectories with a low-overlap step or a per-step jump
    exceeding the first-order Lipschitz estimate |d lambda / dt| <= |lambda|
    * sup|f| (when a rate bound is supplied to the matcher).
    """

    t_values: list[float]
    trajectories: np.ndarray  # (n_traj, n_t)
    overlaps: np.ndarray  # (n_traj, n_t - 1) matching scores in [0, 1]
    flagged: list[bool] = field(default_factory=list)
    ambiguous: bool = False

    def csv_rows(self):
        rows = [("t", "trajectory_id", "lambda")]
        for i in range(self.trajectories.shape[0]):
            for k, t in enumerate(self.t_values):
                rows.append((repr(float(t)), str(i), repr(float(self.trajectories[i, k]))))
        return rows

    def to_json_dict(self):
        return {
            "t_values": [float(t) for t in self.t_values],
            "trajectories": [[float(v) for v in row] for row in self.trajectories],
            "overlaps": [[float(v) for v in row] for row in self.overlaps],
            "flagged": list(self.flagged),
            "ambiguous": bool(self.ambiguous),
        }


def _step_overlap(prev, nxt):
    """Overlap scores between trajectory slots of consecutive snapshots.

    The score of slot i against new vector j is the norm of the projection of
    the new vector onto the cluster subspace that slot i belongs to, in the
    B-inner product of the later snapshot.  Scoring whole degenerate
    subspaces (Kramers pairs are degenerate at every t) keeps the score at ~1
    inside a cluster instead of depending on the arbitrary basis returned by
    the solver; for a simple eigenvalue it reduces to |<x_i, x_j>_B|.
    """
    B = nxt.B
    X = prev.vectors
    Y = nxt.vectors
    cross = X.conj().T @ (B @ Y if B is not None else Y)
    n = X.shape[1]
    scores = np.empty((n, n))
    for c in prev.clusters:
        block = cross[c.start : c.stop, :]
        scores[c.start : c.stop, :] = np.linalg.norm(block, axis=0)[None, :]
    return np.clip(scores, 0.0, 1.0)


def _greedy_assign(scores):
    n = scores.shape[0]
    order = np.argsort(scores, axis=None)[::-1]
    row_used = np.zeros(n, dtype=bool)
    col_used = np.zeros(n, dtype=bool)
    perm = np.full(n, -1)
    filled = 0
    for flat in order:
        i, j = divmod(int(flat), n)
        if not row_used[i] and not col_used[j]:
            perm[i] = j
            row_used[i] = True
            col_used[j] = True
            filled += 1
            if filled == n:
                break
    return perm


def match_curves(
    snapshots, flag_threshold=0.7, ambiguous_threshold=0.3, rate_bound=None
):
    """Match eigenvalue trajectories across snapshots by eigenvector overlap.

    Greedy matching on the overlap matrix, with an optimal-assignment
    fallback when the greedy pairing leaves an overlap below the ambiguity
    threshold.  Trajectories are ordered by their value at the first
    snapshot.  Low-overlap steps flag the trajectory; a step where even the
    optimal assignment stays below ``ambiguous_threshold`` marks the whole
    family ambiguous (reported, never fatal).

    ``rate_bound`` (typically sup|f|) enables a continuity check: a step with
    |delta lambda| beyond twice the first-order estimate
    ``max(1, |lambda|) * rate_bound * delta t`` also flags the trajectory.
    """
    if len(snapshots) < 2:
        raise ValueError("need at least two snapshots")
    n = len(snapshots[0].eigenvalues)
    for s in snapshots:
        if len(s.eigenvalues) != n:
            raise ValueError("snapshots have mismatched dimensions")
        if s.vectors is None:
            raise ValueError("snapshots must retain eigenvectors for matching")
    first_ms = snapshots[0].mode_set
    if first_ms is not None:
        for s in snapshots[1:]:
            if s.mode_set is not None and not first_ms.same_modes(s.mode_set):
                raise ValueError("snapshots live on different mode sets")

    n_t = len(snapshots)
    traj = np.zeros((n, n_t))
    overlaps = np.ones((n, n_t - 1))
    slots = np.arange(n)  # slot -> eigenindex in current snapshot
    traj[:, 0] = snapshots[0].eigenvalues
    ambiguous = False
    for k in range(n_t - 1):
        scores = _step_overlap(snapshots[k], snapshots[k + 1])
        perm = _greedy_assign(scores)
        step = scores[np.arange(n), perm]
        if step.min() < ambiguous_threshold:
            rows, cols = linear_sum_assignment(-scores)
            perm = cols[np.argsort(rows)]
            step = scores[np.arange(n), perm]
            if step.min() < ambiguous_threshold:
                ambiguous = True
        overlaps[:, k] = step[slots]
        slots = perm[slots]
        traj[:, k + 1] = snapshots[k + 1].eigenvalues[slots]
    flagged = np.min(overlaps, axis=1) < flag_threshold
    t_values = [float(s.meta.get("t", k)) for k, s in enumerate(snapshots)]
    if rate_bound is not None:
        dt = np.abs(np.diff(np.asarray(t_values)))
        scale = np.maximum(1.0, np.abs(traj[:, :-1]))
        bound = 2.0 * scale * rate_bound * dt[None, :] + 1e-8
        flagged |= np.any(np.abs(np.diff(traj, axis=1)) > bound, axis=1)
    flagged = list(flagged)
    order = np.argsort(traj[:, 0], kind="stable")
    return CurveFamily(
        t_values=t_values,
        trajectories=traj[order],
        overlaps=overlaps[order],
        flagged=[flagged[i] for i in order],
        ambiguous=ambiguous,
    )
