"""Recovering cone heights from base distances and cone distances.

Given base points ``z_i`` (through their pairwise distances), the generatrix
length ``beta`` and the cone distances ``a_ij``, the heights solve the
law-of-cosines system

    t_i^2 + t_j^2 - 2 t_i t_j cos(theta_ij) = a_ij^2,
    theta_ij = pi * min(d(z_i, z_j) / beta, 1).

Triangles are solved by a dense multi-start search with damped Gauss-Newton
refinement; larger instances solve the most non-degenerate triangle first and
extend each candidate one node at a time through the single quadratic that
node satisfies with an anchor.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DataError, NumericalError

__all__ = [
    "HeightRecoveryProblem",
    "SolutionSet",
    "Degeneracy",
    "residuals",
    "recover_heights",
    "tetra_volume_poly",
    "check_degeneracy",
]


def _check_distance_matrix(m, name):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataError(f"{name} must be a square matrix")
    if not np.allclose(m, m.T, rtol=0, atol=1e-12) or np.any(np.diag(m) != 0):
        raise DataError(f"{name} must be symmetric with a zero diagonal")
    if np.any(m < 0):
        raise DataError(f"{name} must be nonnegative")
    return m


@dataclass
class HeightRecoveryProblem:
    base_dists: np.ndarray
    beta: float
    cone_dists: np.ndarray

    def __post_init__(self):
        self.base_dists = _check_distance_matrix(self.base_dists, "base_dists")
        self.cone_dists = _check_distance_matrix(self.cone_dists, "cone_dists")
        if self.base_dists.shape != self.cone_dists.shape:
            raise DataError("base_dists and cone_dists differ in size")
        if not self.beta > 0:
            raise DataError("beta must be positive")

    @property
    def n(self) -> int:
        return len(self.base_dists)

    @property
    def angles(self) -> np.ndarray:
        return math.pi * np.minimum(self.base_dists / self.beta, 1.0)

    @property
    def chord_sq(self) -> np.ndarray:
        """Cone distances rescaled to the unit-generatrix cone, squared."""
        return (self.cone_dists / self.beta) ** 2

    @classmethod
    def from_points(cls, z, t, beta) -> "HeightRecoveryProblem":
        """Build an instance from Euclidean base points and true heights."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        t = np.asarray(t, dtype=np.float64)
        dz = np.sqrt(np.sum((z[:, None, :] - z[None, :, :]) ** 2, axis=-1))
        return cls.from_base_dists(dz, t, beta)

    @classmethod
    def from_base_dists(cls, base_dists, t, beta) -> "HeightRecoveryProblem":
        base_dists = np.asarray(base_dists, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        theta = math.pi * np.minimum(base_dists / beta, 1.0)
        q = (t[:, None] - t[None, :]) ** 2 + 4.0 * np.outer(t, t) * np.sin(0.5 * theta) ** 2
        cone = beta * np.sqrt(q)
        np.fill_diagonal(cone, 0.0)
        return cls(base_dists, beta, cone)


@dataclass
class SolutionSet:
    solutions: list
    residual_tol: float
    merge_tol: float
    max_residuals: list = field(default_factory=list)
    low_residual_cells: int | None = None

    @property
    def count(self) -> int:
        return len(self.solutions)

    def contains(self, t, tol=1e-8) -> bool:
        t = np.asarray(t, dtype=np.float64)
        return any(np.max(np.abs(s - t)) < tol for s in self.solutions)


class Degeneracy(str, enum.Enum):
    GENERIC = "generic"
    COLLINEAR = "collinear"
    SATURATED = "saturated"


def _pairs(n):
    return np.triu_indices(n, 1)


def residuals(t, problem: HeightRecoveryProblem) -> np.ndarray:
    """Law-of-cosines residual for every unordered pair, in row-major order."""
    t = np.asarray(t, dtype=np.float64)
    if t.shape[-1] != problem.n:
        raise ValueError("height vector length does not match the problem")
    i, j = _pairs(problem.n)
    c = np.cos(problem.angles)[i, j]
    a2 = problem.chord_sq[i, j]
    ti, tj = t[..., i], t[..., j]
    return ti * ti + tj * tj - 2.0 * ti * tj * c - a2


def _jacobian(t, problem):
    n = problem.n
    i, j = _pairs(n)
    c = np.cos(problem.angles)[i, j]
    ti, tj = t[..., i], t[..., j]
    J = np.zeros(t.shape[:-1] + (len(i), n))
    rows = np.arange(len(i))
    J[..., rows, i] = 2.0 * ti - 2.0 * tj * c
    J[..., rows, j] = 2.0 * tj - 2.0 * ti * c
    return J


def _refine(starts, problem, iters):
    """Damped Gauss-Newton from a batch of start vectors."""
    t = np.array(starts, dtype=np.float64)
    r = residuals(t, problem)
    f = np.sum(r * r, axis=-1)
    for _ in range(iters):
        J = _jacobian(t, problem)
        step = -np.einsum("bij,bj->bi", np.linalg.pinv(J), r)
        accepted = np.zeros(len(t), dtype=bool)
        new_t = t.copy()
        new_f = f.copy()
        lam = 1.0
        for _ in range(12):
            trial = t + lam * step
            rt = residuals(trial, problem)
            ft = np.sum(rt * rt, axis=-1)
            ok = ~accepted & (ft < f)
            new_t[ok] = trial[ok]
            new_f[ok] = ft[ok]
            accepted |= ok
            if accepted.all():
                break
            lam *= 0.5
        if not accepted.any():
            break
        t, f = new_t, new_f
        r = residuals(t, problem)
        if np.all(f < 1e-30):
            break
    return t, np.max(np.abs(r), axis=-1)


def _dedupe(cands, maxres, merge_tol):
    order = np.argsort(maxres)
    kept, kept_res = [], []
    for idx in order:
        c = cands[idx]
        if all(np.max(np.abs(c - k)) > merge_tol for k in kept):
            kept.append(c)
            kept_res.append(float(maxres[idx]))
    return kept, kept_res


def _finalize(cands, maxres, residual_tol, merge_tol):
    lo, hi = -1e-12, 1.0 + 1e-12
    ok = (maxres < residual_tol) & np.all((cands >= lo) & (cands <= hi), axis=-1)
    cands = np.clip(cands[ok], 0.0, 1.0)
    return _dedupe(cands, maxres[ok], merge_tol)


def _solve_triangle(problem, grid_resolution, refine_iters, residual_tol, merge_tol, top_k=256):
    g = np.linspace(0.0, 1.0, grid_resolution)
    T = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    r = residuals(T, problem)
    F = np.sum(r * r, axis=-1)
    cube = F.reshape((grid_resolution,) * 3)
    local_min = (ndimage.minimum_filter(cube, size=3, mode="nearest") == cube).ravel()
    starts = np.union1d(np.flatnonzero(local_min), np.argsort(F)[:top_k])
    cell = 1.0 / max(grid_resolution - 1, 1)
    low_cells = int(np.sum(np.max(np.abs(r), axis=-1) < 4.0 * cell))
    cands, maxres = _refine(T[starts], problem, refine_iters)
    sols, res = _finalize(cands, maxres, residual_tol, merge_tol)
    return sols, res, low_cells


def _sub_problem(problem, idx):
    idx = np.asarray(idx)
    return HeightRecoveryProblem(
        problem.base_dists[np.ix_(idx, idx)], problem.beta, problem.cone_dists[np.ix_(idx, idx)]
    )


def _extend(tri_sol, anchors, problem, tol=1e-6):
    """Grow a triangle solution to all nodes via one quadratic per node."""
    n = problem.n
    C = np.cos(problem.angles)
    A2 = problem.chord_sq
    partial = [dict(zip(anchors, tri_sol))]
    a0 = anchors[0]
    for node in range(n):
        if node in anchors:
            continue
        grown = []
        for known in partial:
            ta, c = known[a0], C[a0, node]
            disc = A2[a0, node] - ta * ta * (1.0 - c * c)
            if disc < -tol:
                continue
            root = math.sqrt(max(disc, 0.0))
            for tl in {ta * c + root, ta * c - root}:
                if not -tol <= tl <= 1.0 + tol:
                    continue
                consistent = all(
                    abs(tl * tl + known[b] ** 2 - 2.0 * tl * known[b] * C[b, node] - A2[b, node]) < tol
                    for b in anchors[1:]
                )
                if consistent:
                    grown.append({**known, node: tl})
        partial = grown
        if not partial:
            break
    return [np.array([p[i] for i in range(n)]) for p in partial]


def tetra_volume_poly(theta1, theta2, theta3):
    """``1 + 2 cos1 cos2 cos3 - cos1^2 - cos2^2 - cos3^2``.

    Proportional to the volume of the tetrahedron spanned by the apex and a
    cone triangle with apex angles ``theta1..3``; zero when it is flat.
    """
    c1, c2, c3 = np.cos(theta1), np.cos(theta2), np.cos(theta3)
    return 1.0 + 2.0 * c1 * c2 * c3 - c1 * c1 - c2 * c2 - c3 * c3


def _triangles(n):
    return itertools.combinations(range(n), 3)


def _triangle_angles(theta, tri):
    i, j, k = tri
    # theta1 is opposite node i, matching (z2, z3) -> theta1
    return theta[j, k], theta[k, i], theta[i, j]


def check_degeneracy(problem: HeightRecoveryProblem, tol: float = 1e-9) -> Degeneracy:
    if problem.n < 3:
        raise ValueError("need at least 3 points")
    theta = problem.angles
    saturated = False
    for tri in _triangles(problem.n):
        angs = _triangle_angles(theta, tri)
        total = sum(angs)
        if total > 2.0 * math.pi + 1e-12:
            saturated = True
        elif abs(tetra_volume_poly(*angs)) < tol:
            return Degeneracy.COLLINEAR
    return Degeneracy.SATURATED if saturated else Degeneracy.GENERIC


def recover_heights(
    problem: HeightRecoveryProblem,
    grid_resolution: int = 50,
    refine_iters: int = 50,
    residual_tol: float = 1e-10,
    merge_tol: float = 1e-6,
) -> SolutionSet:
    """All height vectors in ``[0, 1]^n`` that reproduce the cone distances."""
    n = problem.n
    if n < 3:
        raise ValueError("need at least 3 points")
    if n == 3:
        sols, res, low = _solve_triangle(problem, grid_resolution, refine_iters, residual_tol, merge_tol)
    else:
        theta = problem.angles
        anchors = max(_triangles(n), key=lambda tri: abs(tetra_volume_poly(*_triangle_angles(theta, tri))))
        tri_sols, _, low = _solve_triangle(
            _sub_problem(problem, anchors), grid_resolution, refine_iters, residual_tol, merge_tol
        )
        cands = [c for s in tri_sols for c in _extend(list(s), list(anchors), problem)]
        if cands:
            refined, maxres = _refine(np.array(cands), problem, refine_iters)
            sols, res = _finalize(refined, maxres, residual_tol, merge_tol)
        else:
            sols, res = [], []
    if not sols:
        best = _refine(np.full((1, n), 0.5), problem, refine_iters)[1][0]
        raise NumericalError(
            f"no height vector reproduces the distances (best max residual {best:.3g}); "
            "input distances are inconsistent"
        )
    return SolutionSet(sols, residual_tol, merge_tol, res, low)


def report(problem: HeightRecoveryProblem, solution_set: SolutionSet) -> dict:
    """JSON-ready summary of a recovery run."""
    return {
        "n": problem.n,
        "beta": problem.beta,
        "degeneracy": check_degeneracy(problem).value,
        "solution_count": solution_set.count,
        "solutions": [s.tolist() for s in solution_set.solutions],
        "residuals": solution_set.max_residuals,
    }


def report_json(problem, solution_set) -> str:
    return json.dumps(report(problem, solution_set), indent=2)
