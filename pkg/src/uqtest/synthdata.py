"""Seeded synthetic regression tasks with known heteroscedastic noise.

A :class:`Generator` describes a 1-D (plus optional nuisance features)
regression problem ``y = f(x) + sigma_gt(x) * eps``. The parameters
``amplitude``, ``frequency``, ``shift`` and ``noise_scale`` are semantic
dimensions: they are recorded on every generated row so that slices and
sweeps can select by them.

Only the first feature drives the mean and noise functions; any extra
features are non-semantic coordinates that carry no signal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import rng
from .errors import ConfigurationError, GeneratorConfigError, ParseError

MEAN_FUNCTIONS = ("sin", "polynomial", "piecewise")
NOISE_FUNCTIONS = ("constant", "affine", "step")
SAMPLERS = ("uniform", "gaussian")
SEMANTIC_PARAMETERS = ("amplitude", "frequency", "shift", "noise_scale")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented table of regression rows.

    ``semantics`` maps a dimension name to a per-row array; ``group`` is a
    per-row array of labels for fairness-style comparisons. ``mu_gt`` is
    the noise-free target where the generator knows it.
    """

    x: np.ndarray
    y: np.ndarray
    sigma_gt: np.ndarray | None = None
    mu_gt: np.ndarray | None = None
    semantics: dict = field(default_factory=dict)
    group: np.ndarray | None = None
    provenance: object = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ConfigurationError(f"x shape {x.shape} inconsistent with {y.shape[0]} targets")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        n = y.shape[0]
        for name in ("sigma_gt", "mu_gt"):
            col = getattr(self, name)
            if col is not None:
                col = np.asarray(col, dtype=np.float64).reshape(-1)
                if col.shape[0] != n:
                    raise ConfigurationError(f"{name} has {col.shape[0]} rows, expected {n}")
                object.__setattr__(self, name, col)
        if self.sigma_gt is not None and np.any(self.sigma_gt < 0):
            raise ConfigurationError("sigma_gt must be >= 0")
        sem = {}
        for key, col in dict(self.semantics).items():
            col = np.asarray(col)
            if col.shape != (n,):
                raise ConfigurationError(f"semantic column {key!r} has shape {col.shape}, expected ({n},)")
            sem[key] = col
        object.__setattr__(self, "semantics", sem)
        if self.group is not None:
            g = np.asarray(self.group, dtype=object).reshape(-1)
            if g.shape[0] != n:
                raise ConfigurationError("group column length mismatch")
            object.__setattr__(self, "group", g)

    def __len__(self):
        return self.y.shape[0]

    @property
    def n_features(self):
        return self.x.shape[1]

    def take(self, idx, provenance=None):
        idx = np.asarray(idx)
        return Dataset(
            self.x[idx], self.y[idx],
            None if self.sigma_gt is None else self.sigma_gt[idx],
            None if self.mu_gt is None else self.mu_gt[idx],
            {k: v[idx] for k, v in self.semantics.items()},
            None if self.group is None else self.group[idx],
            self.provenance if provenance is None else provenance,
        )

    def with_x(self, x, provenance=None):
        return Dataset(x, self.y, self.sigma_gt, self.mu_gt, self.semantics, self.group,
                       self.provenance if provenance is None else provenance)

    def equals(self, other):
        """Exact equality of all columns (provenance ignored)."""
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and bool(np.all(a == b))

        return (same(self.x, other.x) and same(self.y, other.y)
                and same(self.sigma_gt, other.sigma_gt) and same(self.mu_gt, other.mu_gt)
                and same(self.group, other.group)
                and self.semantics.keys() == other.semantics.keys()
                and all(same(v, other.semantics[k]) for k, v in self.semantics.items()))


def concat(datasets, provenance=None):
    datasets = list(datasets)
    if not datasets:
        raise ConfigurationError("nothing to concatenate")

    def cat(name):
        cols = [getattr(d, name) for d in datasets]
        if any(c is None for c in cols):
            return None
        return np.concatenate(cols)

    keys = set(datasets[0].semantics)
    for d in datasets[1:]:
        keys &= set(d.semantics)
    return Dataset(
        np.concatenate([d.x for d in datasets]), cat("y"), cat("sigma_gt"), cat("mu_gt"),
        {k: np.concatenate([d.semantics[k] for d in datasets]) for k in sorted(keys)},
        cat("group"), provenance,
    )


@dataclass(frozen=True)
class Generator:
    """Synthetic regression task.

    The defaults are the canonical demo task: x uniform on [-3, 3],
    f(x) = sin(2x), sigma_gt(x) = 0.1 + 0.2|x|.

    ``shift`` translates the sampling box (an ID to OOD axis);
    ``noise_scale`` multiplies the noise function.
    """

    mean: str = "sin"
    noise: str = "affine"
    sampler: str = "uniform"
    low: float = -3.0
    high: float = 3.0
    n_features: int = 1
    amplitude: float = 1.0
    frequency: float = 2.0
    shift: float = 0.0
    noise_scale: float = 1.0
    noise_base: float = 0.1
    noise_slope: float = 0.2
    noise_knot: float = 1.0
    coefficients: tuple = (0.0, 0.0, 0.25)
    groups: tuple = ()

    def __post_init__(self):
        if self.mean not in MEAN_FUNCTIONS:
            raise GeneratorConfigError(f"unknown mean function {self.mean!r}")
        if self.noise not in NOISE_FUNCTIONS:
            raise GeneratorConfigError(f"unknown noise function {self.noise!r}")
        if self.sampler not in SAMPLERS:
            raise GeneratorConfigError(f"unknown sampler {self.sampler!r}")
        if not self.low < self.high:
            raise GeneratorConfigError(f"sampling box [{self.low}, {self.high}] is empty")
        if self.n_features < 1:
            raise GeneratorConfigError("n_features must be >= 1")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "groups", tuple(str(g) for g in self.groups))

    @classmethod
    def from_dict(cls, doc, path=None):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known - {"n", "seed"}
        if unknown:
            raise GeneratorConfigError(f"unknown generator fields {sorted(unknown)}", path)
        kwargs = {k: v for k, v in doc.items() if k in known}
        for key in ("coefficients", "groups"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise GeneratorConfigError(str(exc), path) from exc

    def to_dict(self):
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        doc["coefficients"] = list(self.coefficients)
        doc["groups"] = list(self.groups)
        return doc

    def semantic_values(self):
        return {name: float(getattr(self, name)) for name in SEMANTIC_PARAMETERS}

    @property
    def box(self):
        """Feature box actually sampled by the uniform sampler."""
        return (self.low + self.shift, self.high + self.shift)

    def mean_fn(self, x):
        """Noise-free target for an ``(N, d)`` or ``(N,)`` input."""
        z = _first_feature(x)
        if self.mean == "sin":
            f = np.sin(self.frequency * z)
        elif self.mean == "polynomial":
            f = np.polynomial.polynomial.polyval(z, self.coefficients)
        else:
            f = np.abs(np.mod(self.frequency * z, 2.0) - 1.0)
        return self.amplitude * f

    def noise_fn(self, x):
        z = _first_feature(x)
        if self.noise == "constant":
            s = np.full_like(z, self.noise_base)
        elif self.noise == "affine":
            s = self.noise_base + self.noise_slope * np.abs(z)
        else:
            s = np.where(np.abs(z) > self.noise_knot, self.noise_base + self.noise_slope, self.noise_base)
        return self.noise_scale * s


def _first_feature(x):
    x = np.asarray(x, dtype=np.float64)
    return x if x.ndim == 1 else x[:, 0]


def generate(g, n, seed):
    """Draw ``n`` rows from ``g``.

    Draws are prefix-stable: row ``i`` is the same for every ``n > i``.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    d = g.n_features
    if g.sampler == "uniform":
        u = rng.stream(seed, "x").random((n, d))
        x = g.low + (g.high - g.low) * u
    else:
        centre, scale = 0.5 * (g.low + g.high), (g.high - g.low) / 6.0
        x = centre + scale * rng.stream(seed, "x").standard_normal((n, d))
    x = x + g.shift
    mu = g.mean_fn(x)
    sigma = g.noise_fn(x)
    bad = np.flatnonzero(~(sigma >= 0))
    if bad.size:
        i = int(bad[0])
        raise GeneratorConfigError(f"noise function is {sigma[i]:.6g} < 0 at x={x[i, 0]:.6g} (row {i})")
    eps = rng.stream(seed, "noise").standard_normal(n)
    y = mu + sigma * eps
    semantics = {k: np.full(n, v) for k, v in g.semantic_values().items()}
    group = None
    if g.groups:
        group = np.array([g.groups[i % len(g.groups)] for i in range(n)], dtype=object)
    return Dataset(x, y, sigma, mu, semantics, group,
                   provenance={"generator": g.to_dict(), "n": int(n), "seed": int(seed)})


def _row_dict(ds, i):
    row = {"x": ds.x[i].tolist(), "y": float(ds.y[i])}
    if ds.sigma_gt is not None:
        row["sigma_gt"] = float(ds.sigma_gt[i])
    if ds.mu_gt is not None:
        row["mu_gt"] = float(ds.mu_gt[i])
    if ds.semantics:
        row["semantics"] = {k: _plain(v[i]) for k, v in ds.semantics.items()}
    if ds.group is not None:
        row["group"] = ds.group[i]
    return row


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def save_jsonl(ds, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(ds)):
            fh.write(json.dumps(_row_dict(ds, i), sort_keys=True))
            fh.write("\n")


def _number(value, name, row, path, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ParseError(f"{name} must be a finite number, got {value!r}", row, path)
    return float(value)


def load_curated(path):
    """Load a JSONL dataset, validating every row.

    Rows must agree on feature width and on which optional columns
    (``sigma_gt``, ``mu_gt``, ``group``, semantic keys) they carry.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError("file does not exist", path=path)
    xs, ys, sig, mus, groups, sems = [], [], [], [], [], []
    layout = None
    with open(path, encoding="utf-8") as fh:
        for row_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", row_no, path) from exc
            if not isinstance(row, dict):
                raise ParseError("row must be a JSON object", row_no, path)
            unknown = set(row) - {"x", "y", "sigma_gt", "mu_gt", "semantics", "group"}
            if unknown:
                raise ParseError(f"unknown fields {sorted(unknown)}", row_no, path)
            x = row.get("x")
            if not isinstance(x, list) or not x:
                raise ParseError("x must be a non-empty list", row_no, path)
            x = [_number(v, "x", row_no, path) for v in x]
            y = _number(row.get("y"), "y", row_no, path)
            s = _number(row.get("sigma_gt"), "sigma_gt", row_no, path, allow_none=True)
            if s is not None and s < 0:
                raise ParseError(f"sigma_gt must be >= 0, got {s}", row_no, path)
            m = _number(row.get("mu_gt"), "mu_gt", row_no, path, allow_none=True)
            sem = row.get("semantics", {})
            if not isinstance(sem, dict):
                raise ParseError("semantics must be an object", row_no, path)
            this_layout = (len(x), s is not None, m is not None, "group" in row, tuple(sorted(sem)))
            if layout is None:
                layout = this_layout
            elif this_layout != layout:
                raise ParseError("row layout differs from the first row "
                                 "(feature width or optional columns)", row_no, path)
            xs.append(x)
            ys.append(y)
            sig.append(s)
            mus.append(m)
            groups.append(row.get("group"))
            sems.append(sem)
    if layout is None:
        raise ParseError("file contains no rows", path=path)
    semantics = {}
    for key in layout[4]:
        vals = [s[key] for s in sems]
        semantics[key] = (np.array(vals, dtype=np.float64)
                          if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals)
                          else np.array(vals, dtype=object))
    return Dataset(
        np.array(xs), np.array(ys),
        np.array(sig) if layout[1] else None,
        np.array(mus) if layout[2] else None,
        semantics,
        np.array(groups, dtype=object) if layout[3] else None,
        provenance={"curated": str(path)},
    )


def with_parameter(g, name, value):
    if name not in SEMANTIC_PARAMETERS:
        raise GeneratorConfigError(f"{name!r} is not a semantic parameter of the generator "
                                   f"(choose from {', '.join(SEMANTIC_PARAMETERS)})")
    return replace(g, **{name: float(value)})
