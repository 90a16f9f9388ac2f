"""Representations of the measurement-error mechanism P(w | z).

The mechanism is a column-stochastic matrix M with M[w, z] = P(w | z):
each column is the distribution of the proxy reading given the true
latent value.  High-dimensional mechanisms made of independent
per-component channels are kept in factored form; the dense matrix is the
tensor (Kronecker) product of the factors and is only materialized below
a configurable size cap.  The inverse of the product is the product of
the inverses, so factored mechanisms never require a dense inversion.

The binary special case is parameterized by the two misclassification
rates eps = P(w=0 | z=1) and delta = P(w=1 | z=0); the mechanism becomes
non-invertible exactly when eps + delta = 1 (the proxy then carries no
information about the latent value).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import SingularError, ValidationError

#: column sums must match 1 within this tolerance
TOL_STOCHASTIC = 1e-12
#: |1 - eps - delta| below this is treated as non-invertible
TOL_SINGULAR = 1e-6
#: largest dimension at which a factored mechanism may be expanded densely
DENSE_CAP = 4096


def _check_stochastic(arr: np.ndarray) -> None:
    if arr.ndim != 2:
        raise ValidationError(f"mechanism entries must be a 2-d matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("mechanism entries must be finite")
    if arr.min() < -TOL_STOCHASTIC or arr.max() > 1.0 + TOL_STOCHASTIC:
        raise ValidationError("mechanism entries must lie in [0, 1]")
    colsums = arr.sum(axis=0)
    worst = float(np.abs(colsums - 1.0).max())
    if worst > TOL_STOCHASTIC:
        raise ValidationError(f"columns must sum to 1 (worst defect {worst:.3e})")


@dataclass(frozen=True, eq=False)
class ErrorMatrix:
    """Column-stochastic matrix P(w | z), dense and/or factored.

    ``entries`` holds the dense matrix when available; ``factors`` holds
    the per-component mechanisms whose tensor product it is.  At least
    one of the two must be present.  ``dense()`` materializes (and then
    caches nothing: callers hold the result) only when the product
    dimension is within ``DENSE_CAP``.
    """

    entries: np.ndarray | None = None
    factors: tuple["ErrorMatrix", ...] | None = None

    def __post_init__(self) -> None:
        if self.entries is None and not self.factors:
            raise ValidationError("an ErrorMatrix needs dense entries or factors")
        if self.entries is not None:
            arr = np.asarray(self.entries, dtype=float).copy()
            _check_stochastic(arr)
            arr.setflags(write=False)
            object.__setattr__(self, "entries", arr)
        if self.factors is not None:
            object.__setattr__(self, "factors", tuple(self.factors))
            for f in self.factors:
                if not isinstance(f, ErrorMatrix):
                    raise ValidationError("factors must be ErrorMatrix instances")
            if self.entries is not None:
                nw = int(np.prod([f.n_w for f in self.factors]))
                nz = int(np.prod([f.n_z for f in self.factors]))
                if (nw, nz) != self.entries.shape:
                    raise ValidationError(
                        f"factor product dimension ({nw}, {nz}) does not match "
                        f"dense entries {self.entries.shape}"
                    )

    @property
    def n_w(self) -> int:
        if self.entries is not None:
            return self.entries.shape[0]
        return int(np.prod([f.n_w for f in self.factors]))

    @property
    def n_z(self) -> int:
        if self.entries is not None:
            return self.entries.shape[1]
        return int(np.prod([f.n_z for f in self.factors]))

    @property
    def is_square(self) -> bool:
        return self.n_w == self.n_z

    def dense(self, *, cap: int = DENSE_CAP) -> np.ndarray:
        """Dense matrix; expands factors via Kronecker product (first factor
        owns the most significant digit of the composite index)."""
        if self.entries is not None:
            return np.array(self.entries)
        if max(self.n_w, self.n_z) > cap:
            raise ValidationError(
                f"dense expansion of size {self.n_w}x{self.n_z} exceeds cap {cap}; "
                "use the factored code paths"
            )
        return reduce(np.kron, (f.dense(cap=cap) for f in self.factors))

    @classmethod
    def identity(cls, n: int) -> "ErrorMatrix":
        return cls(entries=np.eye(n))

    @classmethod
    def from_binary(cls, err: "BinaryErrorParams") -> "ErrorMatrix":
        return cls(entries=err.matrix())

    def to_json_dict(self) -> dict:
        out: dict = {"n_w": self.n_w, "n_z": self.n_z}
        if self.entries is not None:
            out["entries"] = [float(v) for v in np.asarray(self.entries).ravel(order="F")]
        if self.factors is not None:
            out["factors"] = [f.to_json_dict() for f in self.factors]
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "ErrorMatrix":
        try:
            factors = None
            if "factors" in data and data["factors"]:
                factors = tuple(cls.from_json_dict(f) for f in data["factors"])
            entries = None
            if "entries" in data and data["entries"] is not None:
                n_w, n_z = int(data["n_w"]), int(data["n_z"])
                entries = np.asarray(data["entries"], dtype=float).reshape(
                    (n_w, n_z), order="F"
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed error-matrix JSON: {exc}") from exc
        return cls(entries=entries, factors=factors)


@dataclass(frozen=True)
class BinaryErrorParams:
    """Misclassification pair for one binary proxy.

    eps = P(w=0 | z=1), delta = P(w=1 | z=0).  Construction fails with
    SingularError when |1 - eps - delta| < tol_sing: the 2x2 mechanism is
    then (numerically) non-invertible, its inverse entries scaling as
    1 / (1 - eps - delta).
    """

    eps: float
    delta: float
    tol_sing: float = TOL_SINGULAR

    def __post_init__(self) -> None:
        for name, v in (("eps", self.eps), ("delta", self.delta)):
            if not np.isfinite(v) or not 0.0 <= v < 1.0:
                raise ValidationError(f"{name} must lie in [0, 1), got {v!r}")
        if abs(self.determinant) < self.tol_sing:
            raise SingularError(
                f"eps + delta = {self.eps + self.delta:.8g}: the proxy carries no "
                "information about the latent value and the mechanism is not invertible"
            )

    @property
    def determinant(self) -> float:
        """det of the 2x2 mechanism, 1 - eps - delta."""
        return 1.0 - self.eps - self.delta

    def matrix(self) -> np.ndarray:
        """The 2x2 mechanism [[1-delta, eps], [delta, 1-eps]] (columns are z)."""
        return np.array([[1.0 - self.delta, self.eps], [self.delta, 1.0 - self.eps]])

    def to_json_dict(self) -> dict:
        return {"eps": float(self.eps), "delta": float(self.delta)}

    @classmethod
    def from_json_dict(cls, data: dict) -> "BinaryErrorParams":
        try:
            return cls(eps=float(data["eps"]), delta=float(data["delta"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed binary error params JSON: {exc}") from exc


def component_mechanism(errs: Sequence[BinaryErrorParams]) -> ErrorMatrix:
    """Factored mechanism for K independent binary proxy components."""
    if not errs:
        raise ValidationError("need at least one component")
    return ErrorMatrix(factors=tuple(ErrorMatrix.from_binary(e) for e in errs))


def expand_factored(factors: Sequence[ErrorMatrix], *, cap: int = DENSE_CAP) -> ErrorMatrix:
    """Dense tensor-product expansion of per-component mechanisms.

    Composite indices are mixed-radix with the first factor most
    significant, matching ``numpy.kron``.  Each factor must be square so
    the expansion stays invertible; the expansion's inverse equals the
    tensor product of the per-factor inverses, which is how the factored
    restoration paths avoid ever forming this matrix above ``cap``.
    """
    factors = tuple(factors)
    if not factors:
        raise ValidationError("need at least one factor")
    for i, f in enumerate(factors):
        if not f.is_square:
            raise ValidationError(f"factor {i} is {f.n_w}x{f.n_z}; inversion needs square factors")
    n = int(np.prod([f.n_w for f in factors]))
    if n > cap:
        raise ValidationError(
            f"dense expansion of dimension {n} exceeds cap {cap}; use the factored paths"
        )
    dense = reduce(np.kron, (f.dense(cap=cap) for f in factors))
    return ErrorMatrix(entries=dense, factors=factors)
