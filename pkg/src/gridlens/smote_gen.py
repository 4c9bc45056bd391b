"""Mixed categorical/numerical SMOTE over the nine-variable job table.

The whole table is treated as a single class. A synthetic row picks a
training row uniformly, one of its k nearest neighbours uniformly and
``lam ~ U[0, 1]``; numerical features are interpolated on the segment between
the two rows, categorical features take the most frequent value among the
base row's k neighbours (ties go to the earliest-seen category).

Neighbours are exact under ``w_num * euclidean(numerical) + w_cat * hamming(categorical)``
with min-max normalized numerical features.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import SchemaMismatch, TooFewRows
from .trace_model import GEN_FIELDS, NUMERICAL_FIELDS, GenRecord

logger = logging.getLogger(__name__)

FORMAT_VERSION = "gridlens-smote/1"
DEFAULT_K = 5
DEFAULT_LOG_FEATURES = ("n_input_files", "input_file_bytes", "workload")
# above this many rows the grouped KD-tree search replaces the brute-force scan
BRUTE_FORCE_MAX_ROWS = 4096
_BRUTE_CHUNK = 256


class FeatureKind(enum.Enum):
    NUMERICAL = "numerical"
    CATEGORICAL = "categorical"


class Scaling(enum.Enum):
    MINMAX = "minmax"
    ZSCORE = "zscore"


@dataclass(frozen=True)
class FeatureMeta:
    name: str
    kind: FeatureKind
    min: Optional[float] = None
    max: Optional[float] = None
    vocabulary: tuple = ()
    integer: bool = False
    log_scale: bool = False
    # normalized = (transformed - center) / scale; scale == 0 marks a constant column
    center: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind is FeatureKind.NUMERICAL:
            if self.min is None or self.max is None or self.min > self.max:
                raise SchemaMismatch(f"feature {self.name}: bad range")
        elif not self.vocabulary or len(set(self.vocabulary)) != len(self.vocabulary):
            raise SchemaMismatch(f"feature {self.name}: vocabulary empty or duplicated")

    @property
    def constant(self) -> bool:
        return self.kind is FeatureKind.NUMERICAL and self.scale == 0

    def to_json(self) -> dict:
        d = {"name": self.name, "kind": self.kind.value}
        if self.kind is FeatureKind.NUMERICAL:
            d.update(min=self.min, max=self.max, integer=self.integer, log_scale=self.log_scale,
                     center=self.center, scale=self.scale)
        else:
            d["vocabulary"] = list(self.vocabulary)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "FeatureMeta":
        d = dict(d)
        d["kind"] = FeatureKind(d["kind"])
        if "vocabulary" in d:
            d["vocabulary"] = tuple(d["vocabulary"])
        return cls(**d)


class EncodedRow(NamedTuple):
    numeric: np.ndarray  # normalized numerical features
    codes: np.ndarray  # vocabulary indices of categorical features


class Provenance(NamedTuple):
    base: np.ndarray
    neighbor: np.ndarray
    lam: np.ndarray


@dataclass(frozen=True, eq=False)
class SmoteModel:
    features: tuple
    raw: np.ndarray  # (n, p) raw numerical values
    normalized: np.ndarray  # (n, p)
    codes: np.ndarray  # (n, m) categorical codes
    neighbors: np.ndarray  # (n, k) row indices sorted by (distance, index)
    votes: np.ndarray  # (n, m) majority category among each row's neighbours
    k: int
    distance_weights: tuple = (1.0, 1.0)
    seed: int = 0
    scaling: Scaling = Scaling.MINMAX

    @property
    def n_rows(self) -> int:
        return self.raw.shape[0]

    @property
    def numerical(self) -> tuple:
        return tuple(f for f in self.features if f.kind is FeatureKind.NUMERICAL)

    @property
    def categorical(self) -> tuple:
        return tuple(f for f in self.features if f.kind is FeatureKind.CATEGORICAL)

    @property
    def active(self) -> np.ndarray:
        """Mask of numerical features that take part in the distance."""
        return np.array([not f.constant for f in self.numerical], dtype=bool)

    def row(self, i: int) -> EncodedRow:
        return EncodedRow(self.normalized[i], self.codes[i])

    def encode(self, record: GenRecord) -> EncodedRow:
        num = np.array([getattr(record, f.name) for f in self.numerical], dtype=float)
        codes = []
        for f in self.categorical:
            value = getattr(record, f.name)
            try:
                codes.append(f.vocabulary.index(value))
            except ValueError:
                raise SchemaMismatch(f"{f.name}: category {value!r} not in vocabulary") from None
        return EncodedRow(_normalize(num[None, :], self.numerical)[0], np.array(codes, dtype=np.int64))


def _transform(values: np.ndarray, metas: Sequence[FeatureMeta]) -> np.ndarray:
    out = np.array(values, dtype=float, copy=True)
    for j, f in enumerate(metas):
        if f.log_scale:
            out[:, j] = np.log1p(out[:, j])
    return out


def _interpolate(a: np.ndarray, b: np.ndarray, lam: np.ndarray, metas: Sequence[FeatureMeta]) -> np.ndarray:
    """Points at fraction ``lam`` along each segment a -> b, in each feature's space.

    Log-space features are expanded around the nearer endpoint,
    ``x + (1 + x) * expm1(mu * (log1p(y) - log1p(x)))``, which equals
    ``expm1`` of the log-space blend but returns the endpoint exactly when
    ``lam`` is 0 or 1.
    """
    out = (1.0 - lam)[:, None] * a + lam[:, None] * b
    near_a = lam <= 0.5
    for j, f in enumerate(metas):
        if f.log_scale:
            x = np.where(near_a, a[:, j], b[:, j])
            y = np.where(near_a, b[:, j], a[:, j])
            mu = np.where(near_a, lam, 1.0 - lam)
            out[:, j] = x + (1.0 + x) * np.expm1(mu * (np.log1p(y) - np.log1p(x)))
    return out


def _normalize(raw: np.ndarray, metas: Sequence[FeatureMeta]) -> np.ndarray:
    t = _transform(raw, metas)
    out = np.zeros_like(t)
    for j, f in enumerate(metas):
        if f.scale:
            out[:, j] = (t[:, j] - f.center) / f.scale
    return out


def mixed_distance(a: EncodedRow, b: EncodedRow, model: SmoteModel) -> float:
    """Weighted Euclidean distance over normalized numerical features plus
    weighted Hamming count over categorical ones. Constant numerical features
    are ignored."""
    p, m = len(model.numerical), len(model.categorical)
    for row in (a, b):
        if np.shape(row.numeric) != (p,) or np.shape(row.codes) != (m,):
            raise SchemaMismatch(f"expected {p} numerical and {m} categorical values")
    w_num, w_cat = model.distance_weights
    active = model.active
    diff = np.asarray(a.numeric, dtype=float)[active] - np.asarray(b.numeric, dtype=float)[active]
    euclid = np.sqrt(np.sum(diff * diff))
    hamming = int(np.count_nonzero(np.asarray(a.codes) != np.asarray(b.codes)))
    return float(w_num * euclid + w_cat * hamming)


# -- exact k nearest neighbours ------------------------------------------------


def _knn_brute(Z: np.ndarray, codes: np.ndarray, k: int, w_num: float, w_cat: float) -> np.ndarray:
    """Exhaustive scan; ties resolved by ascending row index."""
    n = Z.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for s in range(0, n, _BRUTE_CHUNK):
        e = min(n, s + _BRUTE_CHUNK)
        diff = Z[s:e, None, :] - Z[None, :, :]
        d = w_num * np.sqrt(np.sum(diff * diff, axis=-1))
        d = d + w_cat * np.count_nonzero(codes[s:e, None, :] != codes[None, :, :], axis=-1)
        d[np.arange(e - s), np.arange(s, e)] = np.inf
        out[s:e] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def _knn_grouped(Z: np.ndarray, codes: np.ndarray, k: int, w_num: float, w_cat: float) -> np.ndarray:
    """Exact search that partitions rows by their categorical tuple.

    Rows sharing a tuple are searched with a KD-tree on the numerical part.
    Other groups are visited in order of Hamming distance and skipped once
    ``w_cat * hamming`` exceeds every query row's current k-th distance.
    """
    n = Z.shape[0]
    if Z.shape[1] == 0:
        Z = np.zeros((n, 1))
    Zs = w_num * Z
    groups, gid = np.unique(codes, axis=0, return_inverse=True)
    gid = gid.ravel()
    order = np.argsort(gid, kind="stable")
    bounds = np.searchsorted(gid[order], np.arange(len(groups) + 1))
    members = [order[bounds[g]:bounds[g + 1]] for g in range(len(groups))]
    trees = [cKDTree(Zs[m]) for m in members]
    logger.debug("grouped knn: %d rows in %d categorical groups", n, len(groups))

    best_d = np.full((n, k), np.inf)
    best_i = np.full((n, k), -1, dtype=np.int64)
    for g, q in enumerate(members):
        ham = np.count_nonzero(groups != groups[g], axis=1)
        for h in np.lexsort((np.arange(len(groups)), ham)):
            offset = w_cat * ham[h]
            live = best_d[q, k - 1] >= offset
            if not live.any():
                break
            qa = q[live]
            cand = members[h]
            kk = min(k + 1, len(cand))
            d, j = trees[h].query(Zs[qa], k=kk)
            d = np.asarray(d, dtype=float).reshape(len(qa), kk) + offset
            idx = cand[np.asarray(j).reshape(len(qa), kk)]
            d[idx == qa[:, None]] = np.inf
            all_d = np.hstack([best_d[qa], d])
            all_i = np.hstack([best_i[qa], idx])
            pick = np.lexsort((all_i, all_d), axis=-1)[:, :k]
            best_d[qa] = np.take_along_axis(all_d, pick, axis=1)
            best_i[qa] = np.take_along_axis(all_i, pick, axis=1)
    return best_i


def nearest_neighbors(Z, codes, k, weights=(1.0, 1.0), method="auto") -> np.ndarray:
    """Indices of each row's k nearest other rows, shape (n, k)."""
    w_num, w_cat = weights
    if method == "auto":
        method = "brute" if Z.shape[0] <= BRUTE_FORCE_MAX_ROWS else "grouped"
    if method == "brute":
        return _knn_brute(Z, codes, k, w_num, w_cat)
    if method == "grouped":
        return _knn_grouped(Z, codes, k, w_num, w_cat)
    raise ValueError(f"unknown knn method {method!r}")


def _majority(neighbor_codes: np.ndarray) -> np.ndarray:
    """Row-wise mode of an (n, k) code array; ties go to the smallest code."""
    counts = np.sum(neighbor_codes[:, :, None] == neighbor_codes[:, None, :], axis=2)
    score = counts.astype(np.int64) * (int(neighbor_codes.max(initial=0)) + 1) - neighbor_codes
    return np.take_along_axis(neighbor_codes, np.argmax(score, axis=1)[:, None], axis=1)[:, 0]


# -- fit / sample ----------------------------------------------------------------


def fit(
    records: Sequence[GenRecord],
    k: int = DEFAULT_K,
    seed: int = 0,
    *,
    weights: tuple = (1.0, 1.0),
    scaling: Scaling | str = Scaling.MINMAX,
    log_features: Sequence[str] = DEFAULT_LOG_FEATURES,
    knn: str = "auto",
) -> SmoteModel:
    """Fit the generator to ``records``.

    ``log_features`` are normalized and interpolated in log1p space; pass an
    empty tuple for plain raw-space SMOTE.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    n = len(records)
    if n < k + 1:
        raise TooFewRows(f"need at least k+1={k + 1} rows, got {n}")
    scaling = Scaling(scaling)
    unknown = set(log_features) - set(NUMERICAL_FIELDS)
    if unknown:
        raise SchemaMismatch(f"log_features must be numerical, got {sorted(unknown)}")

    columns = {name: [getattr(r, name) for r in records] for name in GEN_FIELDS}
    raw = np.array([columns[name] for name in NUMERICAL_FIELDS], dtype=float).T

    metas, num_metas = [], []
    for name in GEN_FIELDS:
        if name in NUMERICAL_FIELDS:
            col = raw[:, NUMERICAL_FIELDS.index(name)]
            log = name in log_features
            t = np.log1p(col) if log else col
            if scaling is Scaling.MINMAX:
                center, scale = float(t.min()), float(t.max() - t.min())
            else:
                center, scale = float(t.mean()), float(t.std())
            meta = FeatureMeta(
                name, FeatureKind.NUMERICAL, min=float(col.min()), max=float(col.max()),
                integer=bool(np.all(col == np.round(col))), log_scale=log,
                center=center, scale=scale,
            )
            num_metas.append(meta)
        else:
            vocab = tuple(dict.fromkeys(columns[name]))
            meta = FeatureMeta(name, FeatureKind.CATEGORICAL, vocabulary=vocab)
        metas.append(meta)

    normalized = _normalize(raw, num_metas)
    if scaling is Scaling.MINMAX:
        np.clip(normalized, 0.0, 1.0, out=normalized)
    cat_metas = [f for f in metas if f.kind is FeatureKind.CATEGORICAL]
    codes = np.empty((n, len(cat_metas)), dtype=np.int64)
    for j, f in enumerate(cat_metas):
        lookup = {v: i for i, v in enumerate(f.vocabulary)}
        codes[:, j] = [lookup[v] for v in columns[f.name]]

    active = np.array([not f.constant for f in num_metas], dtype=bool)
    neighbors = nearest_neighbors(normalized[:, active], codes, k, weights, knn)
    return _build(tuple(metas), raw, normalized, codes, neighbors, k, tuple(weights), seed, scaling)


def _build(features, raw, normalized, codes, neighbors, k, weights, seed, scaling) -> SmoteModel:
    votes = np.empty_like(codes)
    for j in range(codes.shape[1]):
        votes[:, j] = _majority(codes[:, j][neighbors])
    for arr in (raw, normalized, codes, neighbors, votes):
        arr.setflags(write=False)
    return SmoteModel(features, raw, normalized, codes, neighbors, votes, k, weights, seed, scaling)


def _rng(model: SmoteModel, call_index: int) -> np.random.Generator:
    return np.random.default_rng([model.seed, call_index])


def sample(
    model: SmoteModel,
    n: int,
    *,
    call_index: int = 0,
    force_lambda: Optional[float] = None,
    return_provenance: bool = False,
):
    """Draw ``n`` synthetic records, sorted by creation time.

    The random stream is derived from ``(model.seed, call_index)`` so repeated
    calls with the same arguments give identical output. ``force_lambda``
    pins the interpolation factor (test hook). With ``return_provenance`` the
    result is ``(records, Provenance)`` aligned with the sorted records.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = _rng(model, call_index)
    base = rng.integers(0, model.n_rows, n)
    neighbor = model.neighbors[base, rng.integers(0, model.k, n)]
    lam = rng.random(n) if force_lambda is None else np.full(n, float(force_lambda))

    metas = model.numerical
    values = _interpolate(model.raw[base], model.raw[neighbor], lam, metas)
    for j, f in enumerate(metas):
        if f.integer:
            values[:, j] = np.rint(values[:, j])
        # interpolation cannot leave the observed range; guard against expm1 round-off
        np.clip(values[:, j], f.min, f.max, out=values[:, j])
    cats = model.votes[base]

    i_time = [f.name for f in metas].index("creation_time")
    order = np.argsort(values[:, i_time], kind="stable")
    records = _to_records(model, values[order], cats[order])
    if return_provenance:
        return records, Provenance(base[order], neighbor[order], lam[order])
    return records


def _to_records(model: SmoteModel, values: np.ndarray, cats: np.ndarray) -> list:
    cols = {}
    for j, f in enumerate(model.numerical):
        col = values[:, j]
        cols[f.name] = col.astype(np.int64).tolist() if f.name == "creation_time" else col.tolist()
    for j, f in enumerate(model.categorical):
        vocab = np.array(f.vocabulary, dtype=object)
        cols[f.name] = vocab[cats[:, j]].tolist()
    return [GenRecord(*row) for row in zip(*(cols[name] for name in GEN_FIELDS))]


def synthesize_matching(model: SmoteModel, *, call_index: int = 0) -> list:
    """As many synthetic rows as the model was trained on."""
    return sample(model, model.n_rows, call_index=call_index)


# -- persistence -------------------------------------------------------------------


def save_model(model: SmoteModel, path) -> None:
    meta = {
        "format": FORMAT_VERSION,
        "features": [f.to_json() for f in model.features],
        "k": model.k,
        "distance_weights": list(model.distance_weights),
        "seed": model.seed,
        "scaling": model.scaling.value,
    }
    with open(path, "wb") as fh:
        np.savez(
            fh,
            meta=np.array(json.dumps(meta, sort_keys=True)),
            raw=model.raw,
            normalized=model.normalized,
            codes=model.codes,
            neighbors=model.neighbors,
        )


def load_model(path) -> SmoteModel:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != FORMAT_VERSION:
            raise SchemaMismatch(f"unsupported model format {meta.get('format')!r}")
        arrays = {name: np.array(data[name]) for name in ("raw", "normalized", "codes", "neighbors")}
    features = tuple(FeatureMeta.from_json(f) for f in meta["features"])
    return _build(
        features, arrays["raw"], arrays["normalized"], arrays["codes"], arrays["neighbors"],
        int(meta["k"]), tuple(meta["distance_weights"]), int(meta["seed"]), Scaling(meta["scaling"]),
    )
