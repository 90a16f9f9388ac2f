"""Effect restoration by inverting the measurement-error mechanism.

The observed table relates to the latent one by a per-(x, y) linear map:
P(x, y, w) = sum_z M(w, z) P(x, y, z).  When M is invertible the latent
joint distribution is recovered exactly (in the large-sample limit) by
applying the inverse map, after which ordinary confounder adjustment
yields the causal effect.  The same inverse also converts the error-prone
propensity score L(w) = P(X=1 | w) into the latent-score L(z), enabling
stratified estimation when the latent space is too large for cell-level
statistics.

Numerical policy: restoration solves linear systems per right-hand side
(no explicit inverse) once the dimension exceeds a small threshold, and
the conditioning of M is estimated from column norms before any solve.
Restored cells may come out slightly negative; a total absolute negative
mass up to ``TOL_INCOMPATIBLE`` is treated as numerical noise and clipped
(renormalizing each (x, y) slice to its conserved mass), while anything
larger means the postulated mechanism is incompatible with the data and
raises unless clipping is explicitly forced.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import (
    DegenerateStratumError,
    IncompatibleModelError,
    PositivityError,
    SingularError,
    ValidationError,
)
from .mechanism import ErrorMatrix
from .tables import AXIS_LATENT, AXIS_PROXY, JointTable, adjust_for_confounder

#: restored negative mass above this total is a modeling-incompatibility error
TOL_INCOMPATIBLE = 1e-6
#: mechanisms whose 1-norm condition estimate exceeds this cap refuse to invert
CONDITION_CAP = 1e8
#: dimension above which restoration solves systems instead of forming the inverse
_INVERT_MAX = 8


@dataclass(frozen=True, eq=False)
class RestorationResult:
    """Restored latent joint table plus diagnostics of the inversion."""

    restored: JointTable
    condition_estimate: float
    negative_mass: float
    clipped: bool

    def to_json_dict(self) -> dict:
        return {
            "restored": self.restored.to_json_dict(),
            "condition_estimate": float(self.condition_estimate),
            "negative_mass": float(self.negative_mass),
            "clipped": bool(self.clipped),
        }


def pushforward(table: JointTable, mechanism: ErrorMatrix) -> JointTable:
    """Map a latent table through the mechanism: P(x,y,w) = sum_z M(w,z) P(x,y,z)."""
    if mechanism.n_z != table.card_v:
        raise ValidationError(
            f"mechanism has n_z={mechanism.n_z} but table card_v={table.card_v}"
        )
    if mechanism.factors is not None and mechanism.entries is None:
        dims = [f.n_z for f in mechanism.factors]
        cells = table.cells.reshape(table.card_x, table.card_y, *dims)
        for i, f in enumerate(mechanism.factors):
            cells = np.moveaxis(
                np.tensordot(f.dense(), cells, axes=([1], [2 + i])), 0, 2 + i
            )
        cells = cells.reshape(table.card_x, table.card_y, mechanism.n_w)
    else:
        cells = np.einsum("wz,xyz->xyw", mechanism.dense(), table.cells)
    return JointTable(cells, AXIS_PROXY)


def _condition_estimate(m: np.ndarray) -> float:
    """1-norm condition number ||M||_1 ||M^-1||_1 (inf when singular)."""
    try:
        inv_norm = float(np.linalg.norm(np.linalg.inv(m), 1))
    except np.linalg.LinAlgError:
        return float("inf")
    return float(np.linalg.norm(m, 1)) * inv_norm


def _check_invertible(mechanism: ErrorMatrix, cond_cap: float, *, where: str = "") -> float:
    if not mechanism.is_square:
        raise ValidationError(
            f"restoration requires a square mechanism{where}, "
            f"got {mechanism.n_w}x{mechanism.n_z}"
        )
    if mechanism.factors is not None and mechanism.entries is None:
        cond = 1.0
        for f in mechanism.factors:
            cond *= _condition_estimate(f.dense())
    else:
        cond = _condition_estimate(mechanism.dense())
    if not cond < cond_cap:
        raise SingularError(
            f"mechanism{where} is singular or ill-conditioned "
            f"(condition estimate {cond:.3e} >= cap {cond_cap:.3e}); "
            "the inverse does not exist or cannot be applied reliably"
        )
    return cond


def _solve(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """M^-1 @ rhs; explicit inverse for tiny systems, LU solves otherwise."""
    try:
        if m.shape[0] <= _INVERT_MAX:
            return np.linalg.inv(m) @ rhs
        return np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularError(f"mechanism is singular: {exc}") from exc


def _apply_inverse(mechanism: ErrorMatrix, rhs: np.ndarray) -> np.ndarray:
    """Apply the mechanism inverse to each column of rhs (shape (n, k))."""
    if mechanism.factors is not None and mechanism.entries is None:
        dims = [f.n_w for f in mechanism.factors]
        k = rhs.shape[1]
        out = rhs.reshape(*dims, k)
        for i, f in enumerate(mechanism.factors):
            moved = np.moveaxis(out, i, 0)
            flat = moved.reshape(f.n_w, -1)
            solved = _solve(f.dense(), flat)
            out = np.moveaxis(solved.reshape(moved.shape), 0, i)
        return out.reshape(int(np.prod(dims)), k)
    return _solve(mechanism.dense(), rhs)


def _finalize(
    raw: np.ndarray, *, clip: bool, tol_incompat: float
) -> tuple[np.ndarray, float, bool]:
    """Clip-or-reject policy for negative restored cells.

    Returns (cells, total absolute negative mass before clipping, clipped
    flag).  Clipping zeroes the negatives and rescales each (x, y) slice
    back to its pre-clip mass, which restoration conserves.
    """
    neg = raw < 0.0
    negative_mass = float(-raw[neg].sum()) if neg.any() else 0.0
    if negative_mass == 0.0:
        return raw, 0.0, False
    if negative_mass > tol_incompat and not clip:
        raise IncompatibleModelError(
            f"restored table carries negative mass {negative_mass:.3e} "
            f"(> {tol_incompat:.1e}): the postulated error mechanism is "
            "incompatible with the observed distribution, so no estimate "
            "will be obtained"
        )
    target = raw.sum(axis=2)
    cells = np.where(neg, 0.0, raw)
    slice_sum = cells.sum(axis=2)
    bad = (target > 0.0) & (slice_sum <= 0.0)
    if bad.any():
        x, y = (int(i[0]) for i in np.nonzero(bad))
        raise IncompatibleModelError(
            f"slice (x={x}, y={y}) has no nonnegative mass left after clipping"
        )
    scale = np.divide(target, slice_sum, out=np.ones_like(target), where=slice_sum > 0.0)
    return cells * scale[:, :, None], negative_mass, True


def restore_joint(
    observed: JointTable,
    mechanism: ErrorMatrix,
    *,
    clip: bool = False,
    tol_incompat: float = TOL_INCOMPATIBLE,
    cond_cap: float = CONDITION_CAP,
) -> RestorationResult:
    """Recover P(x, y, z) from P(x, y, w) and a shared mechanism P(w | z).

    The per-(x, y) mass is conserved exactly (the inverse's columns sum to
    one because the mechanism's do), so the restored table is normalized
    whenever the observed one is.  Raises SingularError for
    non-invertible mechanisms and IncompatibleModelError when the data
    contradict the postulated mechanism (see module docstring).
    """
    if mechanism.n_w != observed.card_v:
        raise ValidationError(
            f"mechanism has n_w={mechanism.n_w} but observed card_v={observed.card_v}"
        )
    cond = _check_invertible(mechanism, cond_cap)
    rhs = observed.cells.reshape(-1, observed.card_v).T
    raw = _apply_inverse(mechanism, rhs).T.reshape(
        observed.card_x, observed.card_y, mechanism.n_z
    )
    cells, negative_mass, clipped = _finalize(raw, clip=clip, tol_incompat=tol_incompat)
    return RestorationResult(
        restored=JointTable(cells, AXIS_LATENT),
        condition_estimate=cond,
        negative_mass=negative_mass,
        clipped=clipped,
    )


def restore_joint_differential(
    observed: JointTable,
    mechanisms: Mapping[tuple[int, int], ErrorMatrix],
    *,
    clip: bool = False,
    tol_incompat: float = TOL_INCOMPATIBLE,
    cond_cap: float = CONDITION_CAP,
) -> RestorationResult:
    """Restoration with a separate mechanism P(w | z, x, y) per (x, y) pair.

    Used when the measurement error is differential: the proxy's error
    rates depend on treatment and outcome, so each (x, y) slice is
    inverted with its own matrix.  Errors are reported with the offending
    (x, y) pair; the condition estimate is the worst across pairs.
    """
    missing = [
        (x, y)
        for x in range(observed.card_x)
        for y in range(observed.card_y)
        if (x, y) not in mechanisms
    ]
    if missing:
        raise ValidationError(f"no mechanism supplied for (x, y) pairs {missing}")
    raw = np.empty((observed.card_x, observed.card_y, observed.card_v))
    worst = 1.0
    for (x, y), mech in mechanisms.items():
        if not (0 <= x < observed.card_x and 0 <= y < observed.card_y):
            raise ValidationError(f"mechanism key (x={x}, y={y}) out of table range")
        if mech.n_w != observed.card_v:
            raise ValidationError(
                f"mechanism for (x={x}, y={y}) has n_w={mech.n_w}, expected {observed.card_v}"
            )
        try:
            worst = max(worst, _check_invertible(mech, cond_cap, where=f" for (x={x}, y={y})"))
            raw[x, y, :] = _apply_inverse(mech, observed.cells[x, y, :][:, None])[:, 0]
        except SingularError as exc:
            raise SingularError(f"(x={x}, y={y}): {exc}") from exc
    cells, negative_mass, clipped = _finalize(raw, clip=clip, tol_incompat=tol_incompat)
    return RestorationResult(
        restored=JointTable(cells, AXIS_LATENT),
        condition_estimate=worst,
        negative_mass=negative_mass,
        clipped=clipped,
    )


def causal_effect_restored(
    observed: JointTable,
    mechanism: ErrorMatrix,
    x: int,
    *,
    clip: bool = False,
    tol_incompat: float = TOL_INCOMPATIBLE,
    cond_cap: float = CONDITION_CAP,
) -> np.ndarray:
    """P(y | do(x)) from proxy data: restore the latent joint, then adjust.

    The one inverse matrix enters every summation of the adjustment
    formula, so computing the restored table once and adjusting it is
    both the definition and the efficient implementation.
    """
    result = restore_joint(
        observed, mechanism, clip=clip, tol_incompat=tol_incompat, cond_cap=cond_cap
    )
    return adjust_for_confounder(result.restored, x)


def restored_propensity(
    score_w: np.ndarray,
    p_w: np.ndarray,
    mechanism: ErrorMatrix,
    *,
    tol_den: float = 1e-9,
    cond_cap: float = CONDITION_CAP,
) -> np.ndarray:
    """Latent propensity score from the error-prone one.

    L(z) = sum_w I(z,w) L(w) P(w) / sum_w I(z,w) P(w), where L(w) is the
    observable score P(X=1 | w) and I is the mechanism inverse.  Both
    numerator and denominator are single inverse applications, so only
    the proxy-level score and marginal ever need to be estimated from
    data.
    """
    score_w = np.asarray(score_w, dtype=float)
    p_w = np.asarray(p_w, dtype=float)
    if score_w.shape != (mechanism.n_w,) or p_w.shape != (mechanism.n_w,):
        raise ValidationError(
            f"score_w and p_w must have shape ({mechanism.n_w},), "
            f"got {score_w.shape} and {p_w.shape}"
        )
    if abs(p_w.sum() - 1.0) > 1e-9 or p_w.min() < -1e-12:
        raise ValidationError("p_w must be a probability distribution")
    _check_invertible(mechanism, cond_cap)
    stacked = np.column_stack([score_w * p_w, p_w])
    solved = _apply_inverse(mechanism, stacked)
    num, den = solved[:, 0], solved[:, 1]
    small = np.abs(den) < tol_den
    if small.any():
        z = int(np.nonzero(small)[0][0])
        raise DegenerateStratumError(
            f"restored stratum z={z} has vanishing probability ({den[z]:.3e}); "
            "its propensity score is undefined"
        )
    return num / den


@dataclass(frozen=True, eq=False)
class PropensityProfile:
    """Latent propensity scores with a stratification of the z-space.

    ``scores[z]`` is L(z) = P(X=treated | z) (NaN for zero-mass strata),
    ``strata`` partitions the positive-mass z indices into score groups,
    and ``weights[k]`` is the total latent mass P(l) of stratum k.
    """

    scores: np.ndarray
    strata: tuple[tuple[int, ...], ...]
    weights: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        scores.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "strata", tuple(tuple(int(z) for z in s) for s in self.strata))
        object.__setattr__(self, "weights", weights)
        if len(self.strata) != weights.shape[0]:
            raise ValidationError("one weight per stratum required")
        if weights.min(initial=0.0) < -1e-12:
            raise ValidationError("stratum weights must be nonnegative")
        if abs(float(weights.sum()) - 1.0) > 1e-9:
            raise ValidationError(f"stratum weights sum to {weights.sum()!r}, expected 1")
        seen: set[int] = set()
        for s in self.strata:
            if seen & set(s):
                raise ValidationError("strata must be disjoint")
            seen |= set(s)


def propensity_profile(
    table: JointTable, *, treated: int = 1, n_bins: int = 20
) -> PropensityProfile:
    """Score and stratify a latent joint table.

    Scores are grouped by value (agreeing to 12 decimals, so last-bit
    noise cannot split a genuinely discrete score) when they take at
    most ``n_bins`` distinct values — a lossless stratification;
    otherwise equal-width bins over [0, 1] are used.  Zero-mass z
    indices get NaN scores and belong to no stratum.
    """
    if not 0 <= treated < table.card_x:
        raise ValidationError(f"treated={treated} out of range for card_x={table.card_x}")
    if n_bins < 1:
        raise ValidationError("n_bins must be >= 1")
    p_z = table.cells.sum(axis=(0, 1))
    p_xz = table.cells.sum(axis=1)
    pos = p_z > 0.0
    scores = np.full(table.card_v, np.nan)
    scores[pos] = p_xz[treated, pos] / p_z[pos]
    pos_idx = np.nonzero(pos)[0]
    values = np.round(scores[pos_idx], 12)
    groups: dict[float, list[int]] = {}
    if len(np.unique(values)) <= n_bins:
        for z, val in zip(pos_idx, values):
            groups.setdefault(float(val), []).append(int(z))
    else:
        clipped = np.clip(values, 0.0, 1.0)
        bins = np.minimum((clipped * n_bins).astype(int), n_bins - 1)
        for z, b in zip(pos_idx, bins):
            groups.setdefault(float(b), []).append(int(z))
    strata = tuple(tuple(groups[k]) for k in sorted(groups))
    weights = np.array([p_z[list(s)].sum() for s in strata])
    weights = weights / weights.sum()
    return PropensityProfile(scores=scores, strata=strata, weights=weights)


def stratified_effect(table: JointTable, profile: PropensityProfile, x: int) -> np.ndarray:
    """Stratified estimate sum_l P(y | x, l) P(l) over propensity strata.

    With one stratum per distinct latent value this reproduces full
    confounder adjustment exactly; with coarser strata it trades bias for
    the ability to work from sparse cell statistics.
    """
    if not 0 <= x < table.card_x:
        raise ValidationError(f"x={x} out of range for card_x={table.card_x}")
    p_z = table.cells.sum(axis=(0, 1))
    covered = set()
    for s in profile.strata:
        covered |= set(s)
    uncovered = [int(z) for z in np.nonzero(p_z > 0.0)[0] if int(z) not in covered]
    if uncovered:
        raise ValidationError(f"strata do not cover positive-mass z indices {uncovered}")
    out = np.zeros(table.card_y)
    for k, (members, weight) in enumerate(zip(profile.strata, profile.weights)):
        if weight <= 0.0:
            continue
        if not members:
            raise DegenerateStratumError(f"stratum {k} is empty but has weight {weight:.3e}")
        idx = list(members)
        p_xl = float(table.cells[x, :, idx].sum())
        if p_xl <= 0.0:
            raise PositivityError(
                f"P(x={x}, l) = 0 in stratum {k} (weight {weight:.3e}): positivity violated"
            )
        p_xyl = table.cells[x, :, idx].sum(axis=0)
        out += weight * (p_xyl / p_xl)
    return out
