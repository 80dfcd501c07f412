"""Turning data specifications into concrete evaluation points.

Covers the four subset/point-wise selection strategies (output-uncertainty
quantile slices, semantic slices and sweeps, curated critical sets,
uncertainty-guided search) plus low-level corruptions for shift tests and
feature-masking sensitivity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import rng
from .errors import CapabilityError, ConfigurationError, DomainError, EmptySelectionError
from .metrics import SCORE_KINDS, point_scores, quantile
from .nn import HALF_LOG_2PI
from .synthdata import Dataset, Generator, concat, generate, load_curated, with_parameter

CORRUPTIONS = ("gaussian_noise", "feature_scale", "constant_offset", "feature_dropout")
OBJECTIVES = SCORE_KINDS + ("sigma",)


@dataclass(frozen=True)
class FullOdd:
    generator: Generator
    n: int
    seed: int | None = None


@dataclass(frozen=True)
class SemanticSlice:
    dim: str
    low: float | None = None
    high: float | None = None
    values: tuple | None = None
    base: object = None


@dataclass(frozen=True)
class SemanticSweep:
    generator: Generator
    dim: str
    grid: tuple
    n: int
    seed: int | None = None


@dataclass(frozen=True)
class QuantileSlice:
    score: str
    q_lo: float
    q_hi: float
    base: object = None

    def __post_init__(self):
        if not 0.0 <= self.q_lo < self.q_hi <= 1.0:
            raise ConfigurationError(f"need 0 <= q_lo < q_hi <= 1, got [{self.q_lo}, {self.q_hi}]")
        if self.score not in SCORE_KINDS:
            raise ConfigurationError(f"unknown score kind {self.score!r}")


@dataclass(frozen=True)
class CuratedSet:
    path: str


@dataclass(frozen=True)
class Shifted:
    base: object
    corruption: str
    severity: float

    def __post_init__(self):
        if self.corruption not in CORRUPTIONS:
            raise ConfigurationError(f"unknown corruption {self.corruption!r}")
        if self.severity < 0:
            raise ConfigurationError("severity must be >= 0")


@dataclass(frozen=True)
class SearchConfig:
    """Pattern-search settings.

    ``step`` is the initial step as a fraction of each box side; the
    search of a restart stops once every step is below ``min_step``
    times its side, or after ``steps`` polls.
    """

    objective: str = "nll"
    box: tuple = ((-3.0, 3.0),)
    restarts: int = 10
    steps: int = 200
    step: float = 0.25
    shrink: float = 0.5
    min_step: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ConfigurationError(f"unknown search objective {self.objective!r}")
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if not box or any(not (np.isfinite(lo) and np.isfinite(hi) and lo < hi) for lo, hi in box):
            raise ConfigurationError(f"search box must be bounded and non-empty, got {self.box}")
        object.__setattr__(self, "box", box)
        if self.restarts < 1 or self.steps < 0:
            raise ConfigurationError("need restarts >= 1 and steps >= 0")
        if not self.step > 0 or not 0 < self.shrink < 1:
            raise ConfigurationError("need step > 0 and 0 < shrink < 1")


@dataclass(frozen=True)
class SearchGenerated:
    config: SearchConfig
    oracle: Generator | None = None


@dataclass(frozen=True)
class Path1D:
    """Straight input path from ``start`` to ``stop`` with ``points`` samples."""

    start: tuple
    stop: tuple
    points: int


def spec_to_dict(spec):
    """Plain-JSON description of a spec, used as provenance."""
    if spec is None:
        return None
    out = {"kind": type(spec).__name__}
    for key, value in vars(spec).items():
        if isinstance(value, Generator):
            value = value.to_dict()
        elif isinstance(value, SearchConfig):
            value = {k: (list(map(list, v)) if k == "box" else v) for k, v in vars(value).items()}
        elif hasattr(value, "__dataclass_fields__"):
            value = spec_to_dict(value)
        elif isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out


def _require(data, what):
    if len(data) == 0:
        raise EmptySelectionError(f"{what} selected no rows")
    return data


def select(spec, est=None, base=None, seed=0):
    """Resolve ``spec`` to a dataset.

    Specs that refine other data (slices, shifts) use their own ``base``
    spec when set, else the ``base`` dataset passed in. An empty result
    raises :class:`EmptySelectionError`.
    """
    if spec is None:
        if base is None:
            raise ConfigurationError("no data spec and no base dataset")
        return _require(base, "base dataset")
    prov = spec_to_dict(spec)
    if isinstance(spec, FullOdd):
        seed = spec.seed if spec.seed is not None else seed
        return generate(spec.generator, spec.n, seed)
    if isinstance(spec, SemanticSweep):
        return concat(sweep(spec.generator, spec.dim, spec.grid, spec.n,
                            spec.seed if spec.seed is not None else seed), provenance=prov)
    if isinstance(spec, CuratedSet):
        return _require(load_curated(spec.path), "curated set")
    if isinstance(spec, SearchGenerated):
        if est is None:
            raise ConfigurationError("search-generated data needs an estimator")
        found = search(est, spec.config, spec.oracle)
        X = np.array([f["x"] for f in found])
        oracle = spec.oracle
        mu_gt = oracle.mean_fn(X) if oracle is not None else None
        sig_gt = oracle.noise_fn(X) if oracle is not None else None
        y = mu_gt if mu_gt is not None else np.full(len(found), np.nan)
        return Dataset(X, y, sig_gt, mu_gt, provenance=prov)
    if isinstance(spec, Path1D):
        t = np.linspace(0.0, 1.0, spec.points)[:, None]
        start, stop = np.asarray(spec.start, float), np.asarray(spec.stop, float)
        return Dataset(start + t * (stop - start), np.zeros(spec.points), provenance=prov)

    parent = base
    if getattr(spec, "base", None) is not None:
        parent = select(spec.base, est, base, seed)
    if parent is None:
        raise ConfigurationError(f"{type(spec).__name__} needs a base dataset")

    if isinstance(spec, SemanticSlice):
        if spec.dim not in parent.semantics:
            raise CapabilityError(f"rows carry no semantic annotation {spec.dim!r}")
        col = parent.semantics[spec.dim]
        if spec.values is not None:
            keep = np.isin(col, np.asarray(spec.values, dtype=col.dtype))
        else:
            keep = np.ones(len(parent), dtype=bool)
            if spec.low is not None:
                keep &= col >= spec.low
            if spec.high is not None:
                keep &= col <= spec.high
        return _require(parent.take(np.flatnonzero(keep), prov), "semantic slice")
    if isinstance(spec, QuantileSlice):
        if est is None:
            raise ConfigurationError("quantile slicing needs an estimator to score points")
        _require(parent, "quantile slice base")
        scores = point_scores(est.predict(parent.x, seed), parent.y, spec.score)
        lo, hi = quantile(scores, spec.q_lo), quantile(scores, spec.q_hi)
        keep = (scores >= lo) & (scores <= hi)
        return _require(parent.take(np.flatnonzero(keep), prov), "quantile slice")
    if isinstance(spec, Shifted):
        shifted = corrupt(parent, spec.corruption, spec.severity, seed)
        return shifted.with_x(shifted.x, prov)
    raise ConfigurationError(f"unsupported data spec {type(spec).__name__}")


def corrupt(data, kind, severity, seed=0):
    """Distort features; targets and ground-truth sigmas are left untouched."""
    if kind not in CORRUPTIONS:
        raise ConfigurationError(f"unknown corruption {kind!r}; choose from {', '.join(CORRUPTIONS)}")
    if severity < 0:
        raise DomainError("severity must be >= 0")
    x = data.x
    if severity == 0:
        return data.with_x(x.copy())
    if kind == "gaussian_noise":
        x = x + severity * rng.stream(seed, "corrupt", kind).standard_normal(x.shape)
    elif kind == "feature_scale":
        x = x * (1.0 + severity)
    elif kind == "constant_offset":
        x = x + severity
    else:
        drop = rng.stream(seed, "corrupt", kind).random(x.shape) < min(severity, 1.0)
        x = np.where(drop, 0.0, x)
    return data.with_x(x, {"corrupted": {"kind": kind, "severity": float(severity)},
                           "from": data.provenance})


def sweep(generator, dim, grid, n, seed=0):
    """One dataset per grid value of ``dim``; everything else (seed included) fixed."""
    grid = [float(v) for v in grid]
    if not grid:
        raise ConfigurationError("sweep grid is empty")
    if grid != sorted(grid):
        raise ConfigurationError("sweep grid must be sorted")
    return [generate(with_parameter(generator, dim, v), n, seed) for v in grid]


def make_objective(est, kind, oracle=None, seed=0):
    """Point-wise score function ``X -> scores`` (larger = worse) for search.

    ``nll`` is the expected NLL under the oracle's noise distribution,
    ``abs_normalized_residual`` compares against the oracle's noise-free
    mean, ``sigma`` is the raw predicted sigma (no oracle needed).
    """
    if kind not in OBJECTIVES:
        raise ConfigurationError(f"unknown objective {kind!r}")
    if kind != "sigma" and oracle is None:
        raise CapabilityError(f"objective {kind!r} needs a ground-truth oracle")

    def score(X):
        p = est.predict(X, seed)
        if kind == "sigma":
            return p.sigma.copy()
        err = p.mu - oracle.mean_fn(X)
        if kind == "abs_normalized_residual":
            return np.abs(err) / p.sigma
        s_gt = oracle.noise_fn(X)
        return np.log(p.sigma) + (err * err + s_gt * s_gt) / (2 * p.sigma**2) + HALF_LOG_2PI

    return score


def pattern_search(score, cfg):
    """Coordinate pattern search from ``cfg.restarts`` random starts.

    Each poll tries +/- the current step along every coordinate (clipped
    into the box) and moves to the best strictly improving candidate;
    if none improves, the step shrinks. Returns one record per restart
    with the local optimum and the best-so-far trace.
    """
    lo = np.array([b[0] for b in cfg.box])
    hi = np.array([b[1] for b in cfg.box])
    width = hi - lo
    d = lo.size
    out = []
    for r in range(cfg.restarts):
        x = lo + width * rng.stream(cfg.seed, "search-start", r).random(d)
        fx = float(score(x[None, :])[0])
        step = cfg.step * width
        trace = [fx]
        for _ in range(cfg.steps):
            if np.all(step < cfg.min_step * width):
                break
            cand = np.repeat(x[None, :], 2 * d, axis=0)
            for j in range(d):
                cand[2 * j, j] += step[j]
                cand[2 * j + 1, j] -= step[j]
            cand = np.clip(cand, lo, hi)
            fc = np.asarray(score(cand), dtype=np.float64)
            j = int(np.argmax(fc))
            if fc[j] > fx:
                x, fx = cand[j], float(fc[j])
            else:
                step = step * cfg.shrink
            trace.append(fx)
        out.append({"x": x.tolist(), "score": fx, "restart": r, "trace": trace})
    out.sort(key=lambda rec: (-rec["score"], rec["x"]))
    return out


def search(est, cfg, oracle=None):
    """Uncertainty-guided search; local optima sorted worst-first.

    ``est`` may be an estimator (scored with ``cfg.objective``) or a plain
    score function. Each result records which uncertainty source
    dominates at the found point, or ``"unattributed"`` when the estimator
    cannot decompose.
    """
    if callable(est) and not hasattr(est, "predict"):
        return pattern_search(est, cfg)
    found = pattern_search(make_objective(est, cfg.objective, oracle, cfg.seed), cfg)
    for rec in found:
        p = est.predict(np.asarray(rec["x"]), cfg.seed)
        if p.has_decomposition:
            rec["attribution"] = ("aleatoric" if p.sigma_aleatoric[0] >= p.sigma_epistemic[0]
                                  else "epistemic")
        else:
            rec["attribution"] = "unattributed"
    return found


def mask_sensitivity(est, data, seed=0):
    """Mean absolute change of sigma when each feature is set to its mean."""
    _require(data, "mask sensitivity")
    base = est.predict(data.x, seed).sigma
    # a constant column's float mean can drift by an ulp; use the value itself
    means = np.where(np.all(data.x == data.x[0], axis=0), data.x[0], data.x.mean(axis=0))
    out = np.empty(data.n_features)
    for j in range(data.n_features):
        x = data.x.copy()
        x[:, j] = means[j]
        out[j] = np.mean(np.abs(est.predict(x, seed).sigma - base))
    return out


def odd_box(generator, odd=None):
    """Feature box implied by a generator and, if given, the ODD's shift range."""
    lo, hi = generator.low, generator.high
    shift_lo = shift_hi = generator.shift
    if odd is not None:
        for dim in odd.dimensions:
            if dim.name == "shift" and not dim.categorical:
                shift_lo, shift_hi = dim.low, dim.high
    return ((lo + shift_lo, hi + shift_hi),) + ((lo, hi),) * (generator.n_features - 1)


SPEC_FIELDS = {
    "full_odd": {"generator", "n", "seed"},
    "semantic_slice": {"dim", "range", "values", "base"},
    "semantic_sweep": {"generator", "dim", "grid", "n", "seed"},
    "quantile_slice": {"score", "q_lo", "q_hi", "base"},
    "curated": {"path"},
    "shifted": {"base", "corruption", "severity"},
    "search": {"generator", "objective", "box", "restarts", "steps", "step", "shrink", "min_step", "seed"},
    "path": {"start", "stop", "points"},
}


def parse_spec(doc, generators, named=None, base_dir=".", odd=None, path="data"):
    """Build a DataSpec from its JSON form.

    ``doc`` is an inline object or the name of an entry in ``named``.
    Generators are referenced by name (or given inline).
    """
    named = named or {}
    if isinstance(doc, str):
        if doc not in named:
            raise ConfigurationError(f"unknown data spec {doc!r}", path)
        return parse_spec(named[doc], generators, named, base_dir, odd, f"data.{doc}")
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigurationError("data spec must be an object with a 'kind'", path)

    def gen(key="generator"):
        ref = doc.get(key)
        if isinstance(ref, dict):
            return Generator.from_dict(ref, f"{path}.{key}")
        if ref not in generators:
            raise ConfigurationError(f"unknown generator {ref!r}", f"{path}.{key}")
        return generators[ref]

    def sub(key="base"):
        return None if doc.get(key) is None else parse_spec(doc[key], generators, named, base_dir, odd,
                                                            f"{path}.{key}")

    kind = doc["kind"]
    if kind not in SPEC_FIELDS:
        raise ConfigurationError(f"unknown data spec kind {kind!r}", path)
    unknown = set(doc) - SPEC_FIELDS[kind] - {"kind"}
    if unknown:
        raise ConfigurationError(f"unknown fields {sorted(unknown)} for data spec kind {kind!r}", path)
    try:
        if kind == "full_odd":
            return FullOdd(gen(), int(doc["n"]), doc.get("seed"))
        if kind == "semantic_slice":
            rng_ = doc.get("range")
            values = doc.get("values")
            return SemanticSlice(doc["dim"], None if rng_ is None else float(rng_[0]),
                                 None if rng_ is None else float(rng_[1]),
                                 None if values is None else tuple(values), sub())
        if kind == "semantic_sweep":
            g = gen()
            with_parameter(g, doc["dim"], 0.0)
            return SemanticSweep(g, doc["dim"], tuple(doc["grid"]), int(doc["n"]), doc.get("seed"))
        if kind == "quantile_slice":
            return QuantileSlice(doc.get("score", "nll"), float(doc["q_lo"]), float(doc["q_hi"]), sub())
        if kind == "curated":
            file = Path(base_dir) / doc["path"]
            if not file.is_file():
                raise ConfigurationError(f"curated file not found: {file}", f"{path}.path")
            return CuratedSet(str(file))
        if kind == "shifted":
            return Shifted(sub(), doc["corruption"], float(doc["severity"]))
        if kind == "search":
            oracle = gen() if doc.get("generator") is not None else None
            box = doc.get("box")
            if box is None:
                if oracle is None:
                    raise ConfigurationError("search needs a box or a generator to derive one", path)
                box = odd_box(oracle, odd)
            cfg = SearchConfig(doc.get("objective", "nll"), tuple(map(tuple, box)),
                               int(doc.get("restarts", 10)), int(doc.get("steps", 200)),
                               float(doc.get("step", 0.25)), float(doc.get("shrink", 0.5)),
                               float(doc.get("min_step", 1e-9)), int(doc.get("seed", 0)))
            return SearchGenerated(cfg, oracle)
        if kind == "path":
            return Path1D(tuple(doc["start"]), tuple(doc["stop"]), int(doc["points"]))
    except KeyError as exc:
        raise ConfigurationError(f"missing field {exc.args[0]!r}", path) from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc), path) from None
    raise ConfigurationError(f"unknown data spec kind {kind!r}", path)


def with_base(spec, base_spec):
    """Attach ``base_spec`` to a refining spec that has none."""
    if hasattr(spec, "base") and spec.base is None:
        return replace(spec, base=base_spec)
    return spec
