"""Core data types: logged interaction records, immutable datasets, evaluation results."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError


@dataclass(frozen=True)
class LogRecord:
    """One logged interaction: covariates, treatment, outcome (a loss), and the
    logging density of the observed treatment given the covariates."""

    x: tuple[float, ...]
    t: float
    y: float
    q: float | None = None


@dataclass(frozen=True)
class Violation:
    """A single invariant violation found by :func:`validate`."""

    index: int | None
    field: str
    message: str


class Dataset:
    """Immutable columnar collection of logged interactions.

    Parameters
    ----------
    x : array of shape (n, d)
        Covariates.
    t : array of shape (n,)
        Logged treatments (scalar, continuous).
    y : array of shape (n,)
        Logged outcomes, interpreted as losses (lower is better).
    q : array of shape (n,), optional
        Logging densities f(t | x) of the observed treatments.  May be
        omitted and imputed later (see ``with_gps``).
    treatment_bounds : (lo, hi), optional
        Closed treatment interval; required for boundary-corrected estimation.
    """

    def __init__(self, x, t, y, q=None, treatment_bounds=None):
        x = np.array(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        t = np.array(t, dtype=float).ravel()
        y = np.array(y, dtype=float).ravel()
        n = x.shape[0]
        if t.shape != (n,) or y.shape != (n,):
            raise ConfigError(
                f"inconsistent lengths: x has {n} rows, t has {t.shape[0]}, y has {y.shape[0]}"
            )
        if q is not None:
            q = np.array(q, dtype=float).ravel()
            if q.shape != (n,):
                raise ConfigError(f"q has length {q.shape[0]}, expected {n}")
            q.flags.writeable = False
        if treatment_bounds is not None:
            lo, hi = float(treatment_bounds[0]), float(treatment_bounds[1])
            if not lo < hi:
                raise ConfigError(f"treatment bounds must satisfy lo < hi, got {treatment_bounds}")
            treatment_bounds = (lo, hi)
        for arr in (x, t, y):
            arr.flags.writeable = False
        self._x = x
        self._t = t
        self._y = y
        self._q = q
        self._bounds = treatment_bounds

    # -- accessors ---------------------------------------------------------
    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def t(self) -> np.ndarray:
        return self._t

    @property
    def y(self) -> np.ndarray:
        return self._y

    @property
    def q(self) -> np.ndarray | None:
        return self._q

    @property
    def treatment_bounds(self) -> tuple[float, float] | None:
        return self._bounds

    @property
    def d(self) -> int:
        return self._x.shape[1]

    def __len__(self) -> int:
        return self._x.shape[0]

    def __repr__(self):
        q = "present" if self._q is not None else "absent"
        return f"Dataset(n={len(self)}, d={self.d}, q={q}, bounds={self._bounds})"

    @property
    def records(self) -> list[LogRecord]:
        qs = self._q if self._q is not None else [None] * len(self)
        return [
            LogRecord(tuple(xi), float(ti), float(yi), None if qi is None else float(qi))
            for xi, ti, yi, qi in zip(self._x, self._t, self._y, qs)
        ]

    # -- construction ------------------------------------------------------
    @classmethod
    def from_records(cls, records, treatment_bounds=None) -> "Dataset":
        if not records:
            return cls(np.empty((0, 0)), [], [], None, treatment_bounds)
        d = len(records[0].x)
        for i, r in enumerate(records):
            if len(r.x) != d:
                raise ConfigError(f"record {i} has dimension {len(r.x)}, expected {d}")
        has_q = all(r.q is not None for r in records)
        return cls(
            np.array([r.x for r in records], dtype=float),
            [r.t for r in records],
            [r.y for r in records],
            [r.q for r in records] if has_q else None,
            treatment_bounds,
        )

    def with_gps(self, model) -> "Dataset":
        """Return a copy whose q column is filled from a GPS model."""
        q = model.density(self._t, self._x)
        return Dataset(self._x, self._t, self._y, q, self._bounds)

    def with_bounds(self, bounds) -> "Dataset":
        return Dataset(self._x, self._t, self._y, self._q, bounds)

    # -- CSV schema: x0,...,x{d-1},t,y[,q] -----------------------------------
    @classmethod
    def from_csv(cls, path, treatment_bounds=None) -> "Dataset":
        df = pd.read_csv(path)
        cols = list(df.columns)
        xcols = [c for c in cols if c.startswith("x") and c[1:].isdigit()]
        xcols.sort(key=lambda c: int(c[1:]))
        expected = [f"x{i}" for i in range(len(xcols))]
        if xcols != expected or "t" not in cols or "y" not in cols:
            raise ConfigError(
                f"CSV must have header x0,...,x{{d-1}},t,y[,q]; got {cols}"
            )
        q = df["q"].to_numpy() if "q" in cols else None
        return cls(df[xcols].to_numpy(), df["t"].to_numpy(), df["y"].to_numpy(), q, treatment_bounds)

    def to_csv(self, path) -> None:
        data = {f"x{i}": self._x[:, i] for i in range(self.d)}
        data["t"] = self._t
        data["y"] = self._y
        if self._q is not None:
            data["q"] = self._q
        pd.DataFrame(data).to_csv(path, index=False)


def validate(dataset: Dataset) -> list[Violation]:
    """Report all record-level invariant violations; empty list means valid."""
    out: list[Violation] = []
    for name, col in (("x", dataset.x), ("t", dataset.t), ("y", dataset.y)):
        bad = ~np.all(np.isfinite(np.atleast_2d(col.T)), axis=0)
        for i in np.nonzero(bad)[0]:
            out.append(Violation(int(i), name, f"{name} is not finite"))
    if dataset.q is not None:
        for i in np.nonzero(~np.isfinite(dataset.q))[0]:
            out.append(Violation(int(i), "q", "q is not finite"))
        for i in np.nonzero(np.isfinite(dataset.q) & (dataset.q < 0))[0]:
            out.append(Violation(int(i), "q", f"q = {dataset.q[i]} is negative"))
    if dataset.treatment_bounds is not None and len(dataset) > 0:
        lo, hi = dataset.treatment_bounds
        outside = np.isfinite(dataset.t) & ((dataset.t < lo) | (dataset.t > hi))
        for i in np.nonzero(outside)[0]:
            out.append(
                Violation(int(i), "t", f"t = {dataset.t[i]} outside bounds [{lo}, {hi}]")
            )
    out.sort(key=lambda v: (v.index if v.index is not None else -1))
    return out


@dataclass(frozen=True)
class EvalResult:
    """Result of an off-policy value estimate.

    ``terms`` are per-record contributions on the scale of the estimate, so
    ``estimate == mean(terms)`` for every estimator kind.  ``std`` is the
    dispersion statistic ``(1/n) * sqrt(sum((terms - estimate)^2))`` used for
    variance regularization.  ``n_eff`` counts records with nonzero kernel
    weight; ``low_overlap`` flags n_eff < 5.
    """

    estimate: float
    terms: np.ndarray = field(repr=False)
    std: float
    n_eff: int
    bandwidth: float
    low_overlap: bool = False
    sn_denominator: float | None = None

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "std": self.std,
            "n_eff": self.n_eff,
            "bandwidth": self.bandwidth,
            "low_overlap": self.low_overlap,
            "sn_denominator": self.sn_denominator,
        }
