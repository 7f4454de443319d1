"""Symmetric point configurations on [-1,1]^k \\ {0}: the column matrix of
a configuration, extraction from orthonormal frames, the map into projected
product laws, and power-sum identification of column multisets.

A configuration stores one canonical representative per +-pair of atoms
(first nonzero coordinate positive).  The Gram matrix of its column matrix,
and hence every rate evaluated on it, is invariant under re-signing and
reordering atoms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import DimensionMismatch, DomainError, RecoveryFailure
from .linalg import ColumnList, as_matrix, signed_permutation_equal
from .projections import EmpiricalMeasure, ProjectedLaw, law_variance, sample_projected_law


def _canonical_sign(point: np.ndarray) -> np.ndarray:
    for v in point:
        if v > 0.0:
            return point
        if v < 0.0:
            return -point
    raise ValueError("atom at the origin")


@dataclass
class PointConfiguration:
    """Multiset of +-symmetric atoms in [-1,1]^k \\ {0}.

    ``atoms`` is a list of (point, multiplicity) pairs holding the canonical
    representative of each pair; the encoded measure also contains the
    negated points.  Per coordinate i, sum of multiplicity * point[i]^2 is
    at most 1 (rows of the column matrix sit in the unit ball of l2).
    """

    dim: int
    atoms: list

    @classmethod
    def from_atoms(cls, dim: int, atoms) -> "PointConfiguration":
        if dim < 1:
            raise DimensionMismatch("dim must be >= 1")
        merged: dict = {}
        order: list = []
        for point, mult in atoms:
            point = np.asarray(point, dtype=np.float64).reshape(dim)
            if int(mult) < 1:
                raise DomainError("multiplicity must be >= 1")
            if not np.all(np.isfinite(point)):
                raise ValueError("atom coordinates must be finite")
            if np.max(np.abs(point)) > 1.0 + 1e-9:
                raise DomainError("atoms must lie in [-1, 1]^k")
            if np.all(point == 0.0):
                raise DomainError("atoms must be nonzero")
            point = _canonical_sign(point)
            key = point.tobytes()
            if key in merged:
                merged[key][1] += int(mult)
            else:
                merged[key] = [point, int(mult)]
                order.append(key)
        atom_list = [(merged[k][0], merged[k][1]) for k in order]
        row_mass = np.zeros(dim)
        for point, mult in atom_list:
            row_mass += mult * point**2
        if np.max(row_mass, initial=0.0) > 1.0 + 1e-9:
            raise DomainError("per-coordinate squared mass exceeds 1")
        return cls(dim=dim, atoms=atom_list)

    @classmethod
    def empty(cls, dim: int) -> "PointConfiguration":
        return cls.from_atoms(dim, [])

    @property
    def total_multiplicity(self) -> int:
        return sum(m for _, m in self.atoms)

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "atoms": [
                {"point": [float(v) for v in point], "multiplicity": int(mult)}
                for point, mult in self.atoms
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PointConfiguration":
        return cls.from_atoms(
            int(doc["dim"]),
            [(a["point"], a["multiplicity"]) for a in doc["atoms"]],
        )


def config_from_stiefel(v, drop_tol: float = 0.0) -> PointConfiguration:
    """Configuration of +-column pairs of a k x n matrix.

    Columns of norm zero, or below ``drop_tol``, are dropped; exactly equal
    columns (after canonical re-signing) fold into one atom with
    multiplicity.
    """
    v = as_matrix(v)
    k = v.shape[0]
    atoms = []
    for j in range(v.shape[1]):
        col = v[:, j]
        norm = np.linalg.norm(col)
        if norm == 0.0 or norm < drop_tol:
            continue
        atoms.append((col, 1))
    return PointConfiguration.from_atoms(k, atoms)


def config_to_matrix(mu: PointConfiguration) -> ColumnList:
    """Column matrix of a configuration: one column per atom counted with
    multiplicity, canonical signs, ordered by (norm desc, lexicographic)."""
    cols = []
    for point, mult in mu.atoms:
        cols.extend([point] * mult)
    cols.sort(key=lambda c: (-np.linalg.norm(c), tuple(c)))
    if not cols:
        return ColumnList.empty(mu.dim)
    return ColumnList.from_columns(mu.dim, np.column_stack(cols))


def psi(mu, law, sigma, rng, count) -> EmpiricalMeasure:
    """Samples from the projected law attached to a configuration.

    The map fixes sigma^2 = Var(Y); the Gaussian part fills the complement
    of the configuration's Gram matrix.  Delegates to
    :func:`ldplab.projections.sample_projected_law`.
    """
    var = law_variance(law)
    if abs(sigma**2 - var) > 1e-9 * max(1.0, var):
        raise DomainError(
            f"sigma^2 = {sigma ** 2} must equal the product-law variance {var}"
        )
    projected = ProjectedLaw(
        a=config_to_matrix(mu), noise_variance=sigma**2, product_law=law
    )
    return sample_projected_law(rng, projected, count)


def power_sums(alpha, k_min: int, k_max: int) -> np.ndarray:
    """(sum_i alpha_i^k) for k = k_min .. k_max (inclusive)."""
    if k_min < 3:
        raise DomainError("k_min must be >= 3")
    if k_max < k_min:
        raise DomainError("k_max must be >= k_min")
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.size and np.min(alpha) < 0:
        raise DomainError("entries must be non-negative")
    ks = np.arange(k_min, k_max + 1)
    if alpha.size == 0:
        return np.zeros(ks.size)
    return np.sum(alpha[None, :] ** ks[:, None], axis=1)


def _stage_model(stages, ks):
    model = np.zeros_like(ks)
    for value, mult in stages:
        model = model + mult * value**ks
    return model


def _fit_stage_values(stages, sums, ks, hi, nuisance_cap=None):
    """Joint least squares on stage values (multiplicities stay fixed).

    With ``nuisance_cap`` the model carries an extra bounded geometric term
    amp * rho^k, rho <= cap, absorbing the not-yet-peeled mass so that the
    discovered values are not biased upward; without it this is the exact
    polishing step for a complete structure.
    """
    if not stages:
        return stages
    values = np.array([v for v, _ in stages])
    mults = np.array([m for _, m in stages], dtype=np.float64)
    scale = np.maximum(sums, 1e-300)

    if nuisance_cap is None:
        x0 = values
        lo = np.zeros(values.size)
        up = np.full(values.size, hi)

        def resid(x):
            model = np.sum(mults[:, None] * x[:, None] ** ks[None, :], axis=0)
            return (model - sums) / scale

    else:
        head = sums - _stage_model(stages, ks)
        if head[0] > 0 and 0 < head[1] < head[0]:
            rho0 = min(float(head[1] / head[0]), 0.999 * nuisance_cap)
        else:
            rho0 = 0.5 * nuisance_cap
        amp0 = max(float(head[0]), 1e-12) / max(rho0 ** ks[0], 1e-300)
        x0 = np.concatenate([values, [amp0, rho0]])
        lo = np.concatenate([np.zeros(values.size), [0.0, 0.0]])
        up = np.concatenate([np.full(values.size, hi), [np.inf, nuisance_cap]])

        def resid(x):
            model = np.sum(mults[:, None] * x[:-2, None] ** ks[None, :], axis=0)
            model = model + x[-2] * x[-1] ** ks
            return (model - sums) / scale

    x0 = np.clip(x0, lo, up)
    try:
        sol = least_squares(resid, x0, bounds=(lo, up),
                            xtol=3e-16, ftol=3e-16, gtol=3e-16)
    except Exception:
        return stages
    if not np.all(np.isfinite(sol.x)) or np.sum(sol.fun**2) > np.sum(resid(x0) ** 2):
        return stages
    return [(float(v), int(m)) for v, m in zip(sol.x[: values.size], mults)]


def _trusted_window(res, scale):
    """Initial run of indices whose residuals still look like power sums of
    a non-negative sequence: positive, above float noise, with ratios in
    (0, 1.02] that never back off by more than a small wiggle.  Where the
    pattern breaks, subtraction noise has taken over."""
    n = res.size
    good = (res > 1e-280) & (res > 1e-13 * scale)
    end = 0
    while end < n and good[end]:
        end += 1
    if end < 2:
        return np.arange(0)
    ratios = res[1:end] / res[: end - 1]
    stop = 1
    r_max = 0.0
    for i, r in enumerate(ratios):
        if not (0.0 < r <= 1.02) or r < r_max - 0.02:
            break
        r_max = max(r_max, r)
        stop = i + 2
    return np.arange(stop)


class _Peeler:
    """Depth-first peeling with integer-multiplicity backtracking.

    Each stage reads the dominant remaining value off the tail of the
    residual ratio sequence and its multiplicity from the dominant term,
    then subtracts and recurses; a joint fit of the candidate structure
    against all sums is the acceptance oracle.  Exact sums admit a
    near-zero-residual fit only for the true structure, so branches with a
    wrong multiplicity die there and the search backtracks.
    """

    NODE_CAP = 1500
    REL_FLOOR = 3e-7

    def __init__(self, s, ks, count_bound, tol):
        self.s = s
        self.ks = ks
        self.count_bound = count_bound
        self.tol = tol
        self.nodes = 0
        self.scale = np.maximum(s, 1e-300)
        self.hi = max(1.5, 2.0 * float((s[-1] / s[-2]) if s[-2] > 0 else 1.0))

    def tail_allowance(self, alpha_top):
        # entries below tol * alpha_top stay unresolved; their sums are
        # bounded by count_bound * (tol * alpha_top)^k
        top = 0.0 if alpha_top is None else alpha_top
        return self.count_bound * (self.tol * top) ** self.ks

    def accept(self, stages, alpha_top):
        polished = _fit_stage_values(stages, self.s, self.ks, self.hi)
        res = self.s - _stage_model(polished, self.ks)
        top = alpha_top if alpha_top is not None else (
            polished[0][0] if polished else 0.0)
        floor = self.REL_FLOOR * self.scale
        allowance = np.maximum(2.0 * self.tail_allowance(top), floor)
        if np.all(res <= allowance) and np.all(res >= -floor):
            return polished
        return None

    def peel(self, stages, alpha_top):
        self.nodes += 1
        if self.nodes > self.NODE_CAP:
            return None
        res = self.s - _stage_model(stages, self.ks)
        # partial-structure values carry percent-level error until the joint
        # refits have seen the full structure, so pruning must stay loose
        if np.any(res < -(0.08 * self.scale + 2.0 * self.tail_allowance(alpha_top))):
            return None
        budget = self.count_bound - sum(m for _, m in stages)
        window = _trusted_window(res, self.scale)
        if window.size < 4 or budget == 0:
            return self.accept(stages, alpha_top)
        maybe_done = res[0] <= 4.0 * self.tail_allowance(alpha_top)[0] + 0.02 * self.scale[0]
        if maybe_done:
            done = self.accept(stages, alpha_top)
            if done is not None:
                return done

        k_idx = int(window[-1])
        k_star = self.ks[k_idx]
        ratios = res[window[1:]] / res[window[:-1]]
        alpha0 = float(np.mean(ratios[-10:]))
        if not np.isfinite(alpha0) or alpha0 <= 0.0:
            return self.accept(stages, alpha_top)
        m_raw = float(res[k_idx] / alpha0**k_star)
        candidates = sorted(range(1, budget + 1), key=lambda m: abs(m - m_raw))
        for mult in candidates:
            alpha = float((max(res[k_idx], 1e-300) / mult) ** (1.0 / k_star))
            top = alpha_top if alpha_top is not None else alpha
            if alpha < self.tol * top:
                return self.accept(stages, alpha_top)
            trial = stages + [(alpha, mult)]
            trial = _fit_stage_values(trial, self.s, self.ks, self.hi,
                                      nuisance_cap=0.9995 * alpha)
            result = self.peel(trial, top)
            if result is not None:
                return result
        return None


def recover_from_power_sums(sums, count_bound: int, tol: float) -> list:
    """Invert :func:`power_sums`: recover the sorted non-negative sequence.

    ``sums[i]`` must be sum_j alpha_j^(i+3) of some non-increasing sequence
    with at most ``count_bound`` entries.  Entries below ``tol`` times the
    largest entry are left as unresolved tail mass rather than recovered.
    """
    s = np.asarray(sums, dtype=np.float64)
    if s.ndim != 1 or s.size < 4:
        raise DomainError("need a 1-d list of sums for k = 3..K")
    big_k = s.size + 2
    if big_k < 3 * count_bound + 20:
        raise DomainError(
            f"need K >= 3 * count_bound + 20 = {3 * count_bound + 20}, got {big_k}"
        )
    if np.any(s < 0):
        raise DomainError("power sums of a non-negative sequence cannot be negative")
    if np.any(~np.isfinite(s)):
        raise DomainError("power sums must be finite")
    ks = np.arange(3, big_k + 1, dtype=np.float64)
    if np.all(s <= 64 * np.finfo(np.float64).eps):
        return []
    peeler = _Peeler(s, ks, count_bound, tol)
    stages = peeler.peel([], None)
    if stages is None:
        raise RecoveryFailure("peeling did not reach a consistent structure")
    out: list = []
    for value, mult in stages:
        out.extend([float(value)] * mult)
    out.sort(reverse=True)
    return out


def _row_power_sums(cols: np.ndarray, k_max: int) -> np.ndarray:
    a = np.abs(cols)
    ks = np.arange(3, k_max + 1)
    # shape (rows, len(ks))
    return np.sum(a[:, :, None] ** ks[None, None, :], axis=1)


def identify_equivalent(p: ColumnList, q: ColumnList, k_max: int, tol: float) -> bool:
    """True iff two column lists are signed-permutation equivalent.

    Runs a necessary screen first: for each row, the power sums of the entry
    moduli for k = 3..k_max must agree; only then is the exact matching
    attempted.
    """
    if p.dim != q.dim:
        raise DimensionMismatch("column lists live in different dimensions")
    if k_max < 3:
        raise DomainError("k_max must be >= 3")
    if p.count != q.count:
        return False
    if p.count:
        sp = _row_power_sums(p.columns, k_max)
        sq = _row_power_sums(q.columns, k_max)
        slack = 4.0 * k_max * p.count * tol + 1e-12
        if np.max(np.abs(sp - sq)) > slack:
            return False
    return signed_permutation_equal(p, q, tol)
