"""Deterministic dosing policies (linear / constant), constraint sets, and projections."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError


@dataclass(frozen=True)
class L2Ball:
    """Constraint ||beta||_2 <= w2."""

    w2: float

    def __post_init__(self):
        if self.w2 <= 0:
            raise ConfigError(f"l2 ball radius must be positive, got {self.w2}")

    def to_dict(self):
        return {"kind": "l2_ball", "w2": self.w2}


@dataclass(frozen=True)
class Box:
    """Componentwise constraint lower <= beta <= upper."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ConfigError("box constraint requires lower <= upper componentwise")

    def to_dict(self):
        return {"kind": "box", "lower": list(self.lower), "upper": list(self.upper)}


ConstraintSet = L2Ball | Box | None


def project(params, constraints: ConstraintSet):
    """Euclidean projection of a parameter vector onto the constraint set."""
    params = np.asarray(params, dtype=float)
    if constraints is None:
        return params.copy()
    if isinstance(constraints, L2Ball):
        norm = float(np.linalg.norm(params))
        if norm <= constraints.w2:
            return params.copy()
        return params * (constraints.w2 / norm)
    if isinstance(constraints, Box):
        return np.clip(params, constraints.lower, constraints.upper)
    raise ConfigError(f"unknown constraint set {constraints!r}")


def contains(params, constraints: ConstraintSet, tol: float = 1e-9) -> bool:
    params = np.asarray(params, dtype=float)
    return bool(np.linalg.norm(params - project(params, constraints)) <= tol)


@dataclass(frozen=True)
class LinearPolicy:
    """tau(x) = beta @ x + intercept."""

    beta: tuple[float, ...]
    intercept: float = 0.0
    constraints: ConstraintSet = None

    def __post_init__(self):
        if self.constraints is not None and not contains(self.beta, self.constraints):
            raise ConfigError("policy coefficients violate the attached constraint set")

    @property
    def d(self) -> int:
        return len(self.beta)

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if (x.shape[1] if not single else x.shape[0]) != self.d:
            raise ConfigError(
                f"dimension mismatch: policy has d={self.d}, covariates have "
                f"d={x.shape[-1]}"
            )
        out = (x[None, :] if single else x) @ np.asarray(self.beta) + self.intercept
        return float(out[0]) if single else out

    def to_dict(self):
        return {
            "kind": "linear",
            "beta": list(self.beta),
            "intercept": self.intercept,
            "constraints": None if self.constraints is None else self.constraints.to_dict(),
        }


@dataclass(frozen=True)
class ConstantPolicy:
    """tau(x) = dose for every x."""

    dose: float
    constraints: ConstraintSet = None

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return float(self.dose)
        return np.full(x.shape[0], float(self.dose))

    def to_dict(self):
        return {
            "kind": "constant",
            "dose": self.dose,
            "constraints": None if self.constraints is None else self.constraints.to_dict(),
        }


Policy = LinearPolicy | ConstantPolicy


def constraints_from_dict(obj) -> ConstraintSet:
    if obj is None:
        return None
    kind = obj.get("kind")
    if kind in (None, "none"):
        return None
    if kind == "l2_ball":
        return L2Ball(w2=float(obj["w2"]))
    if kind == "box":
        return Box(lower=tuple(obj["lower"]), upper=tuple(obj["upper"]))
    raise ConfigError(f"unknown constraint kind {kind!r}")


def policy_from_dict(obj) -> Policy:
    kind = obj.get("kind")
    constraints = constraints_from_dict(obj.get("constraints"))
    if kind == "linear":
        return LinearPolicy(
            beta=tuple(float(b) for b in obj["beta"]),
            intercept=float(obj.get("intercept", 0.0)),
            constraints=constraints,
        )
    if kind == "constant":
        return ConstantPolicy(dose=float(obj["dose"]), constraints=constraints)
    raise ConfigError(f"unknown policy kind {kind!r}")


def load_policy(path) -> Policy:
    with open(path) as f:
        return policy_from_dict(json.load(f))


def save_policy(policy: Policy, path) -> None:
    with open(path, "w") as f:
        json.dump(policy.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def warfarin_box(dataset: Dataset) -> Box:
    """Per-coordinate coefficient bounds keeping linear dose policies inside
    the range supported by the logged treatments.

    Each coordinate gets the symmetric half-width
    ``t_max / (0.25 * d * |mean(x_j)|)`` where ``t_max`` is the largest logged
    treatment and ``d`` the covariate dimension.  Features with
    (numerically) zero mean make the bound undefined and raise.
    """
    if len(dataset) == 0:
        raise ConfigError("cannot derive coefficient bounds from an empty dataset")
    t_max = float(np.max(dataset.t))
    mu = dataset.x.mean(axis=0)
    zero = np.nonzero(np.abs(mu) < 1e-12)[0]
    if zero.size:
        names = [f"x{j}" for j in zero]
        raise ConfigError(
            f"features {names} have zero mean; drop or recenter them before "
            "deriving coefficient bounds"
        )
    half = t_max / (0.25 * dataset.d * np.abs(mu))
    return Box(lower=tuple(-half), upper=tuple(half))
