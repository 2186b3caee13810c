"""Least squares on (1, D, s(X)): covariate maps, sample fits, hypothetical
estimands under a known outcome model, and induced-index refits.

All solves go through a QR factorization after an explicit eigenvalue check of
the Gram matrix; rank deficiency raises instead of silently regularizing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, NumericError, ValidationError
from .sample import EmpiricalCond, Sample, SubsampleHandle, empirical_joint, units_of

GRAM_EIGEN_TOL = 1e-10


# ---------------------------------------------------------------------------
# Covariate maps
# ---------------------------------------------------------------------------


class CovariateMap:
    """Maps a raw control vector to the covariate block s(x) of the design."""

    kind: str = "abstract"

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def values(self, x: tuple[float, ...]) -> tuple[float, ...]:
        raise NotImplementedError

    def column_names(self) -> list[str]:
        raise NotImplementedError

    @property
    def is_scalar_index(self) -> bool:
        return False

    def index_value(self, x: tuple[float, ...]) -> float:
        raise ValidationError(f"map {self.kind!r} does not define a scalar index")

    def describe(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class ConstantOnlyMap(CovariateMap):
    """No covariates: the design is (1, D)."""

    kind: str = field(default="constant_only", init=False)

    @property
    def dim(self) -> int:
        return 0

    def values(self, x):
        return ()

    def column_names(self):
        return []


@dataclass(frozen=True)
class IdentityMap(CovariateMap):
    """s(x) = x; a scalar index when p = 1."""

    p: int
    kind: str = field(default="identity", init=False)

    @property
    def dim(self) -> int:
        return self.p

    def values(self, x):
        return tuple(x)

    def column_names(self):
        return [f"x{j + 1}" for j in range(self.p)]

    @property
    def is_scalar_index(self) -> bool:
        return self.p == 1

    def index_value(self, x):
        if self.p != 1:
            raise ValidationError("identity map is not scalar for p > 1")
        return float(x[0])

    def describe(self):
        return {"kind": self.kind, "p": self.p}


@dataclass(frozen=True)
class IndexMap(CovariateMap):
    """Single covariate x'c (optionally over a base map's covariates)."""

    coefficients: tuple[float, ...]
    base: CovariateMap | None = None
    kind: str = field(default="index", init=False)

    def __post_init__(self):
        if not any(c != 0.0 for c in self.coefficients):
            raise NumericError("degenerate index: all coefficients are zero")

    @property
    def dim(self) -> int:
        return 1

    def _base_values(self, x):
        return self.base.values(x) if self.base is not None else tuple(x)

    def values(self, x):
        v = self._base_values(x)
        if len(v) != len(self.coefficients):
            raise ValidationError(
                f"index has {len(self.coefficients)} coefficients for {len(v)} covariates"
            )
        return (float(np.dot(v, self.coefficients)),)

    def column_names(self):
        return ["index"]

    @property
    def is_scalar_index(self) -> bool:
        return True

    def index_value(self, x):
        return self.values(x)[0]

    def describe(self):
        return {"kind": self.kind, "coefficients": list(self.coefficients)}


@dataclass(frozen=True)
class LinearPropensityMap(CovariateMap):
    """Single covariate: fitted linear probability of treatment, a + x'b."""

    intercept: float
    coefficients: tuple[float, ...]
    kind: str = field(default="linear_propensity", init=False)

    @staticmethod
    def fit(view_or_sample) -> "LinearPropensityMap":
        """Fit d on (1, x) by least squares; uses controls and d only."""
        x = view_or_sample.x_matrix()
        d = view_or_sample.d_array().astype(float)
        design = np.column_stack([np.ones(len(d)), x])
        coef = _qr_solve(design, d, weights=None, what="linear propensity fit")
        return LinearPropensityMap(intercept=float(coef[0]), coefficients=tuple(coef[1:]))

    @property
    def dim(self) -> int:
        return 1

    def values(self, x):
        return (self.intercept + float(np.dot(x, self.coefficients)),)

    def column_names(self):
        return ["pscore"]

    @property
    def is_scalar_index(self) -> bool:
        return True

    def index_value(self, x):
        return self.values(x)[0]

    def describe(self):
        return {
            "kind": self.kind,
            "intercept": self.intercept,
            "coefficients": list(self.coefficients),
        }


@dataclass(frozen=True)
class StrataMap(CovariateMap):
    """Indicators of consecutive strata of an underlying scalar index.

    The first stratum's indicator is dropped (the intercept absorbs it), which
    keeps the design full rank with a deterministic identification.
    """

    cutpoints: tuple[float, ...]
    index: CovariateMap
    kind: str = field(default="strata", init=False)

    def __post_init__(self):
        if not self.cutpoints:
            raise ValidationError("strata map needs at least one cutpoint")
        if any(b <= a for a, b in zip(self.cutpoints, self.cutpoints[1:])):
            raise ValidationError("strata cutpoints must be strictly increasing")
        if not self.index.is_scalar_index:
            raise ValidationError("strata map needs a scalar index underneath")

    @property
    def n_strata(self) -> int:
        return len(self.cutpoints) + 1

    def stratum(self, x) -> int:
        t = self.index.index_value(x)
        return 1 + sum(1 for c in self.cutpoints if t > c)

    @property
    def dim(self) -> int:
        return self.n_strata - 1

    def values(self, x):
        s = self.stratum(x)
        return tuple(1.0 if s == k else 0.0 for k in range(2, self.n_strata + 1))

    def column_names(self):
        return [f"stratum{k}" for k in range(2, self.n_strata + 1)]

    @property
    def is_scalar_index(self) -> bool:
        return True

    def index_value(self, x):
        # pushforward is the stratum label, matching the saturated regression grid
        return float(self.stratum(x))

    def describe(self):
        return {
            "kind": self.kind,
            "cutpoints": list(self.cutpoints),
            "index": self.index.describe(),
        }


def map_from_spec(spec: dict) -> CovariateMap:
    kind = spec["kind"]
    if kind == "constant_only":
        return ConstantOnlyMap()
    if kind == "identity":
        return IdentityMap(p=int(spec["p"]))
    if kind == "index":
        return IndexMap(coefficients=tuple(float(c) for c in spec["coefficients"]))
    if kind == "linear_propensity":
        return LinearPropensityMap(
            intercept=float(spec["intercept"]),
            coefficients=tuple(float(c) for c in spec["coefficients"]),
        )
    if kind == "strata":
        return StrataMap(
            cutpoints=tuple(float(c) for c in spec["cutpoints"]),
            index=map_from_spec(spec["index"]),
        )
    raise ValidationError(f"unknown covariate map kind {kind!r}")


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegressionFit:
    """A least squares fit of y on Z = (1, D, s(X))."""

    theta: np.ndarray
    gram: np.ndarray
    n: int
    residuals: np.ndarray
    map: CovariateMap
    columns: tuple[str, ...]
    unit_ids: tuple[str, ...]

    @property
    def alpha(self) -> float:
        return float(self.theta[0])

    @property
    def beta(self) -> float:
        return float(self.theta[1])

    @property
    def gamma(self) -> np.ndarray:
        return self.theta[2:]


def design_matrix(s: Sample | SubsampleHandle, cmap: CovariateMap) -> np.ndarray:
    rows = []
    for u in units_of(s):
        rows.append((1.0, float(u.d)) + tuple(cmap.values(u.x)))
    return np.array(rows, dtype=float)


def _check_gram(z: np.ndarray, weights: np.ndarray | None, columns: Sequence[str], what: str):
    if weights is None:
        gram = z.T @ z / z.shape[0]
    else:
        gram = (z * weights[:, None]).T @ z
    eigvals, eigvecs = np.linalg.eigh(gram)
    scale = np.trace(gram) / gram.shape[0]
    if eigvals[0] <= GRAM_EIGEN_TOL * max(scale, 1e-300):
        v = eigvecs[:, 0]
        worst = [columns[j] for j in np.argsort(-np.abs(v))[:3]]
        raise NumericError(
            f"{what}: singular design; near-collinear combination of {', '.join(worst)}"
        )
    return gram


def _qr_solve(z: np.ndarray, y: np.ndarray, weights: np.ndarray | None, what: str) -> np.ndarray:
    if weights is not None:
        sw = np.sqrt(weights)
        z = z * sw[:, None]
        y = y * sw
    q, r = np.linalg.qr(z)
    if np.min(np.abs(np.diag(r))) <= 1e-13 * max(np.max(np.abs(np.diag(r))), 1e-300):
        raise NumericError(f"{what}: rank-deficient design")
    return np.linalg.solve(r, q.T @ y)


def fit_ols(s: Sample | SubsampleHandle, cmap: CovariateMap) -> RegressionFit:
    """Least squares of y on (1, D, s(X)) within the sample or subsample."""
    us = units_of(s)
    parent_design_only = s.design_only if isinstance(s, Sample) else s.parent.design_only
    if parent_design_only:
        raise ValidationError("cannot fit a regression on a design-only sample")
    y = np.array([u.y for u in us], dtype=float)
    z = design_matrix(s, cmap)
    columns = ("const", "d") + tuple(cmap.column_names())
    _check_gram(z, None, columns, "fit")
    theta = _qr_solve(z, y, None, "fit")
    resid = y - z @ theta
    score = z * resid[:, None]
    if np.max(np.abs(score.mean(axis=0))) > 1e-8 * max(1.0, float(np.abs(y).max())):
        raise NumericError("fit: normal equations violated beyond tolerance")
    gram = z.T @ z / len(us)
    return RegressionFit(
        theta=theta,
        gram=gram,
        n=len(us),
        residuals=resid,
        map=cmap,
        columns=columns,
        unit_ids=tuple(u.id for u in us),
    )


def regression_value(theta: np.ndarray, cmap: CovariateMap, x: tuple[float, ...], d: int) -> float:
    """The fitted regression function evaluated at (x, d)."""
    sv = cmap.values(x)
    return float(theta[0] + theta[1] * d + np.dot(theta[2:], sv))


# ---------------------------------------------------------------------------
# Known data generating processes (finite support)
# ---------------------------------------------------------------------------

Atom = tuple[tuple[float, ...], int, float]


@dataclass(frozen=True)
class DGPSpec:
    """Finite-support description of a population: joint atoms of (x, d), the
    conditional mean table f(x, d) on the x-grid for both arms, and an
    optional conditional second moment of the error."""

    atoms: tuple[Atom, ...]
    f: Mapping[tuple[tuple[float, ...], int], float]
    noise: Mapping[tuple[tuple[float, ...], int], float] | None = None

    def __post_init__(self):
        total = sum(p for _, _, p in self.atoms)
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"atom probabilities sum to {total!r}")
        if not any(d == 1 for _, d, p in self.atoms if p > 0):
            raise ValidationError("no treated mass")
        if not any(d == 0 for _, d, p in self.atoms if p > 0):
            raise ValidationError("no untreated mass")

    def f_at(self, x: tuple[float, ...], d: int) -> float:
        key = (x, d)
        if key not in self.f:
            raise DomainError(f"conditional mean not tabulated at x={x}, d={d}")
        return float(self.f[key])

    def noise_at(self, x: tuple[float, ...], d: int) -> float:
        if self.noise is None:
            raise DomainError("no conditional second moment tabulated")
        key = (x, d)
        if key not in self.noise:
            raise DomainError(f"second moment not tabulated at x={x}, d={d}")
        return float(self.noise[key])

    def pr_arm(self, d: int) -> float:
        return sum(p for _, dd, p in self.atoms if dd == d)

    def conditional(self, arm: int) -> EmpiricalCond:
        pr = self.pr_arm(arm)
        pairs = [
            (x[0] if len(x) == 1 else x, p / pr) for x, d, p in self.atoms if d == arm and p > 0
        ]
        return EmpiricalCond.from_pairs(arm, pairs)

    def x_support(self) -> tuple[tuple[float, ...], ...]:
        seen: dict[tuple[float, ...], None] = {}
        for x, _, p in self.atoms:
            if p > 0:
                seen.setdefault(x, None)
        return tuple(seen.keys())


def _as_atoms(g, dgp: DGPSpec) -> tuple[Atom, ...]:
    """Normalize a design distribution: the DGP's own joint, a sample or
    subsample (as its empirical joint), a pair of arm distributions with a
    treated share (g1, g0, pr1), or raw atoms."""
    if g is None:
        return dgp.atoms
    if isinstance(g, (Sample, SubsampleHandle)):
        return empirical_joint(g)
    if (
        len(g) == 3
        and isinstance(g[0], EmpiricalCond)
        and isinstance(g[1], EmpiricalCond)
    ):
        g1, g0, pr1 = g
        atoms = []
        for cond, d, pr in ((g1, 1, float(pr1)), (g0, 0, 1.0 - float(pr1))):
            for loc, m in cond.points:
                x = loc if isinstance(loc, tuple) else (loc,)
                atoms.append((x, d, pr * m))
        return tuple(atoms)
    return tuple(g)


def conditional_estimand(dgp: DGPSpec, cmap: CovariateMap, g=None) -> np.ndarray:
    """Coefficients of the hypothetical regression of f(x, d) on (1, d, s(x))
    under the finite design distribution ``g`` (the DGP's own joint when
    omitted; a sample or subsample is taken as its empirical joint)."""
    atoms = _as_atoms(g, dgp)
    w = np.array([p for _, _, p in atoms], dtype=float)
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValidationError("design distribution masses must sum to 1")
    z = np.array([(1.0, float(d)) + tuple(cmap.values(x)) for x, d, _ in atoms], dtype=float)
    y = np.array([dgp.f_at(x, d) for x, d, _ in atoms], dtype=float)
    columns = ("const", "d") + tuple(cmap.column_names())
    _check_gram(z, w, columns, "estimand")
    return _qr_solve(z, y, w, "estimand")


def att_parameter(dgp: DGPSpec, g1: EmpiricalCond) -> float:
    """Mean treated-minus-untreated conditional outcome gap over the arm-1
    distribution."""
    total = 0.0
    for loc, m in g1.points:
        x = loc if isinstance(loc, tuple) else (loc,)
        total += m * (dgp.f_at(x, 1) - dgp.f_at(x, 0))
    return float(total)


def extended_parameters(dgp: DGPSpec, g=None, interaction_map: CovariateMap | None = None) -> dict:
    """Treatment-effect aggregates over a finite design: effect on the
    treated (att), on the untreated (ateu), and overall (ate), by direct
    summation. With ``interaction_map``, also the coefficient of d in the
    model with treated-mean-centered interactions, whose value is the att
    aggregate of that extended model."""
    atoms = _as_atoms(g, dgp)
    pr1 = sum(p for _, d, p in atoms if d == 1)
    pr0 = 1.0 - pr1
    att = 0.0
    ateu = 0.0
    for x, d, p in atoms:
        gap = dgp.f_at(x, 1) - dgp.f_at(x, 0)
        if d == 1:
            att += p / pr1 * gap
        else:
            ateu += p / pr0 * gap
    ate = pr1 * att + pr0 * ateu
    out = {"att": float(att), "ateu": float(ateu), "ate": float(ate)}
    if interaction_map is not None:
        out["att_interaction"] = interaction_estimand(dgp, interaction_map, g=g)
    return out


def interaction_estimand(dgp: DGPSpec, cmap: CovariateMap, g=None) -> float:
    """Coefficient of d in the hypothetical regression with interaction block
    d * (s(x) - mean of s over the treated), which equals the model-implied
    average effect on the treated."""
    atoms = _as_atoms(g, dgp)
    w = np.array([p for _, _, p in atoms], dtype=float)
    svals = np.array([cmap.values(x) for x, _, _ in atoms], dtype=float)
    dcol = np.array([float(d) for _, d, _ in atoms])
    if svals.shape[1] == 0:
        raise ValidationError("interaction model needs at least one covariate")
    w1 = w * dcol
    mean_s_treated = (svals * w1[:, None]).sum(axis=0) / w1.sum()
    z = np.column_stack(
        [np.ones(len(atoms)), dcol, svals, dcol[:, None] * (svals - mean_s_treated)]
    )
    y = np.array([dgp.f_at(x, d) for x, d, _ in atoms], dtype=float)
    names = (
        ["const", "d"]
        + list(cmap.column_names())
        + [f"d*{c}" for c in cmap.column_names()]
    )
    _check_gram(z, w, names, "interaction estimand")
    theta = _qr_solve(z, y, w, "interaction estimand")
    return float(theta[1])


def index_level_dgp(dgp: DGPSpec, cmap: CovariateMap, g=None) -> tuple[DGPSpec, tuple[Atom, ...]]:
    """Collapse a DGP and design onto a scalar index: atoms become (t, d) with
    pooled mass, and the conditional mean becomes the mass-weighted average of
    f within each (t, d) cell."""
    if not cmap.is_scalar_index:
        raise ValidationError("index-level reduction needs a scalar-valued map")
    atoms = _as_atoms(g, dgp)
    cells: dict[tuple[float, int], tuple[float, float]] = {}
    for x, d, p in atoms:
        t = float(cmap.index_value(x))
        mass, fsum = cells.get((t, d), (0.0, 0.0))
        cells[(t, d)] = (mass + p, fsum + p * dgp.f_at(x, d))
    new_atoms = tuple(((t,), d, mass) for (t, d), (mass, _) in cells.items())
    f_table: dict[tuple[tuple[float, ...], int], float] = {}
    for (t, d), (mass, fsum) in cells.items():
        f_table[((t,), d)] = fsum / mass
    # the collapsed table must cover both arms on the union t-grid
    t_grid = {t for (t, _), _ in cells.items()}
    for t in t_grid:
        for d in (0, 1):
            if ((t,), d) not in f_table:
                # average f(x, d) over every x mapping to t, using total mass at t
                num = den = 0.0
                for x, dd, p in atoms:
                    if float(cmap.index_value(x)) == t:
                        num += p * dgp.f_at(x, d)
                        den += p
                f_table[((t,), d)] = num / den
    collapsed = DGPSpec(atoms=new_atoms, f=f_table)
    return collapsed, new_atoms


def fit_from_theta(theta: np.ndarray, cmap: CovariateMap, n: int) -> RegressionFit:
    """Wrap a hypothetical-estimand coefficient vector as a fit record (no
    residuals; used for report plumbing)."""
    k = 2 + cmap.dim
    return RegressionFit(
        theta=np.asarray(theta, dtype=float),
        gram=np.eye(k),
        n=n,
        residuals=np.zeros(0),
        map=cmap,
        columns=("const", "d") + tuple(cmap.column_names()),
        unit_ids=(),
    )


def induced_index_refit(s: Sample | SubsampleHandle, base_fit: RegressionFit) -> RegressionFit:
    """Refit on (1, D, s(x)'g) where g is the base fit's covariate
    coefficient vector; the treatment coefficient is unchanged and the index
    coefficient is one."""
    gamma = base_fit.gamma
    if gamma.size == 0 or not np.any(gamma != 0.0):
        raise NumericError("degenerate index: base fit has no nonzero covariate coefficients")
    idx = IndexMap(coefficients=tuple(float(gc) for gc in gamma), base=base_fit.map)
    return fit_ols(s, idx)
