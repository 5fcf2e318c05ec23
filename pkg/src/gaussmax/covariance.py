"""Covariance models ``Sigma = A A^T`` and the named generators.

A :class:`CovarianceSpec` is a small declarative record (what the JSON
configs contain); :func:`build` turns it into an immutable
:class:`CovarianceModel` carrying a factor ``A`` with ``p`` rows, one per
coordinate, so that ``Z = A g`` with ``g`` standard normal in ``R^s``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .numerics import DomainError

KINDS = (
    "identity",
    "scaled_identity",
    "spiked_diag",
    "unsigned_counterexample",
    "weak_decay",
    "equicorrelated",
    "brownian_boundary",
    "dense",
)

RANK_CUTOFF = 1e-12
PSD_TOLERANCE = 1e-8


class ModelError(ValueError):
    """Covariance payload that cannot be factored (e.g. not PSD)."""


@dataclass(frozen=True)
class CovarianceSpec:
    kind: str
    params: dict = field(default_factory=dict)
    label: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown covariance kind {self.kind!r}; expected one of {KINDS}")
        _validate(self.kind, self.params)

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        shown = {k: v for k, v in self.params.items() if k not in ("matrix", "times", "psi", "directions")}
        inner = ",".join(f"{k}={v}" for k, v in sorted(shown.items()))
        return f"{self.kind}({inner})"

    def to_dict(self) -> dict:
        doc = {"kind": self.kind, **_jsonable(self.params)}
        if self.label:
            doc["label"] = self.label
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "CovarianceSpec":
        if not isinstance(doc, dict):
            raise DomainError("covariance spec must be a JSON object")
        if "kind" not in doc:
            raise DomainError("covariance spec is missing field 'kind'")
        params = {k: v for k, v in doc.items() if k not in ("kind", "label", "params")}
        nested = doc.get("params", {})
        if not isinstance(nested, dict):
            raise DomainError("field 'params' must be a JSON object")
        params.update(nested)
        return cls(doc["kind"], params, doc.get("label"))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _require(params: dict, key: str, kind: str):
    if key not in params:
        raise DomainError(f"{kind}: missing parameter {key!r}")
    return params[key]


def _positive_int(value, key: str, kind: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise DomainError(f"{kind}: {key} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def _validate(kind: str, params: dict) -> None:
    if kind in ("identity", "scaled_identity", "spiked_diag", "equicorrelated"):
        _positive_int(_require(params, "p", kind), "p", kind)
    if kind == "scaled_identity":
        if not float(_require(params, "scale", kind)) > 0:
            raise DomainError("scaled_identity: scale must be > 0")
    elif kind == "spiked_diag":
        if not float(_require(params, "delta", kind)) > 0:
            raise DomainError("spiked_diag: delta must be > 0")
    elif kind == "unsigned_counterexample":
        _positive_int(_require(params, "p", kind), "p", kind, minimum=2)
    elif kind == "weak_decay":
        _positive_int(_require(params, "p", kind), "p", kind, minimum=2)
        if not float(_require(params, "alpha", kind)) > 0:
            raise DomainError("weak_decay: alpha must be > 0")
        if not float(params.get("t", 1.0)) > 0:
            raise DomainError("weak_decay: anchor t must be > 0")
    elif kind == "equicorrelated":
        rho = float(_require(params, "rho", kind))
        if not 0.0 <= rho < 1.0:
            raise DomainError(f"equicorrelated: rho must lie in [0, 1), got {rho}")
    elif kind == "brownian_boundary":
        for key in ("times", "psi", "directions"):
            _require(params, key, kind)
    elif kind == "dense":
        matrix = np.asarray(_require(params, "matrix", kind), dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DomainError(f"dense: matrix must be square, got shape {matrix.shape}")
        if matrix.shape[0] == 0:
            raise DomainError("dense: empty dimension")
        if not np.all(np.isfinite(matrix)):
            raise DomainError("dense: matrix has non-finite entries")


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Factored covariance.

    Diagonal models keep only their standard deviations; ``factor_rows``
    materializes the ``p x s`` factor on demand.
    """

    p: int
    s: int
    sigmas: np.ndarray
    label: str = ""
    diagonal: bool = False
    _factor: np.ndarray | None = None

    @property
    def sigma_max(self) -> float:
        return float(self.sigmas.max()) if self.p else 0.0

    @property
    def trivial(self) -> bool:
        return self.sigma_max == 0.0

    @property
    def is_iid(self) -> bool:
        """Diagonal with all standard deviations equal and positive."""
        return self.diagonal and not self.trivial and bool(np.all(self.sigmas == self.sigmas[0]))

    @property
    def factor_rows(self) -> np.ndarray:
        if self._factor is not None:
            return self._factor
        keep = np.flatnonzero(self.sigmas > 0)
        a = np.zeros((self.p, keep.size))
        a[keep, np.arange(keep.size)] = self.sigmas[keep]
        return a

    def covariance(self) -> np.ndarray:
        if self.diagonal:
            return np.diag(self.sigmas**2)
        return self._factor @ self._factor.T

    def summary(self) -> dict:
        return {
            "label": self.label,
            "p": self.p,
            "s": self.s,
            "sigma_max": self.sigma_max,
            "sigmas": self.sigmas.tolist(),
        }


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _diagonal_model(sigmas, label: str) -> CovarianceModel:
    sigmas = _frozen(np.asarray(sigmas, dtype=float))
    return CovarianceModel(
        p=sigmas.size, s=int(np.count_nonzero(sigmas)), sigmas=sigmas, label=label, diagonal=True
    )


def pivoted_cholesky(matrix: np.ndarray, tol: float) -> np.ndarray:
    """Greedy diagonal-pivoted Cholesky; stops once every residual
    diagonal entry is ``<= tol``. Returns the ``p x k`` factor in the
    original row order."""
    p = matrix.shape[0]
    resid = np.diag(matrix).astype(float).copy()
    cols: list[np.ndarray] = []
    chosen = np.zeros(p, dtype=bool)
    factor = np.zeros((p, 0))
    for _ in range(p):
        masked = np.where(chosen, -np.inf, resid)
        j = int(np.argmax(masked))
        if masked[j] <= tol:
            break
        col = matrix[:, j] - factor @ factor[j]
        col = col / math.sqrt(resid[j])
        col[chosen] = 0.0
        cols.append(col)
        factor = np.column_stack(cols)
        chosen[j] = True
        resid = resid - col**2
        resid[j] = 0.0
    return factor


def factorize(matrix) -> np.ndarray:
    """Factor a PSD matrix as ``A A^T`` with rank cutoff ``1e-12 * trace``.

    Pivoted Cholesky first; an eigendecomposition takes over if the
    Cholesky reconstruction is off by more than the PSD tolerance.
    """
    sigma = np.asarray(matrix, dtype=float)
    trace = float(np.trace(sigma))
    scale = max(trace, np.abs(sigma).max(initial=0.0))
    if scale == 0.0:
        return np.zeros((sigma.shape[0], 0))
    if np.abs(sigma - sigma.T).max() > 1e-10 * scale:
        raise ModelError("covariance matrix is not symmetric")
    sigma = 0.5 * (sigma + sigma.T)
    eigvals, eigvecs = np.linalg.eigh(sigma)
    if eigvals[0] < -PSD_TOLERANCE * scale:
        raise ModelError(
            f"covariance matrix is not positive semi-definite (smallest eigenvalue {eigvals[0]:.3e})"
        )
    cutoff = RANK_CUTOFF * scale
    factor = pivoted_cholesky(sigma, cutoff)
    if np.abs(factor @ factor.T - sigma).max() <= PSD_TOLERANCE * scale:
        return factor
    keep = eigvals > cutoff
    return eigvecs[:, keep] * np.sqrt(eigvals[keep])


def _dense_model(matrix, label: str) -> CovarianceModel:
    factor = _frozen(factorize(matrix))
    sigmas = _frozen(np.linalg.norm(factor, axis=1))
    return CovarianceModel(
        p=factor.shape[0], s=factor.shape[1], sigmas=sigmas, label=label, diagonal=False, _factor=factor
    )


def weak_decay_sigmas(p: int, alpha: float, t: float = 1.0) -> np.ndarray:
    """``sigma_k = t / sqrt(2 alpha log k)`` for ``k >= 2``, with ``sigma_1 = sigma_2``."""
    k = np.arange(1, p + 1, dtype=float)
    k[0] = 2.0
    return t / np.sqrt(2.0 * alpha * np.log(k))


def brownian_boundary_cov(times, psi, directions, tol: float = 1e-9) -> CovarianceSpec:
    """Dense covariance of ``psi(t) <a, B_t>`` over the grid ``times x directions``.

    ``psi`` is either a callable or a sequence of weights aligned with
    ``times``. Entries are ordered time-major.
    """
    times = np.asarray(times, dtype=float).ravel()
    if times.size == 0:
        raise DomainError("brownian_boundary: empty time grid")
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise DomainError("brownian_boundary: times must be positive and strictly increasing")
    weights = np.array([psi(t) for t in times], dtype=float) if callable(psi) else np.asarray(psi, dtype=float)
    if weights.shape != times.shape:
        raise DomainError("brownian_boundary: psi must provide one weight per time")
    if np.any(weights <= 0):
        raise DomainError("brownian_boundary: psi(t) must be > 0")
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise DomainError("brownian_boundary: directions must have unit norm")

    tt = np.repeat(times, dirs.shape[0])
    ww = np.repeat(weights, dirs.shape[0])
    aa = np.tile(dirs, (times.size, 1))
    matrix = np.outer(ww, ww) * np.minimum.outer(tt, tt) * (aa @ aa.T)
    return CovarianceSpec("dense", {"matrix": matrix.tolist()}, label=f"brownian_boundary(T={times.size},d={dirs.shape[1]},|A|={dirs.shape[0]})")


def equicorrelated_matrix(p: int, rho: float, scale: float = 1.0) -> np.ndarray:
    return scale**2 * ((1.0 - rho) * np.eye(p) + rho * np.ones((p, p)))


def build(spec: CovarianceSpec) -> CovarianceModel:
    """Construct the factored model for a spec. Deterministic."""
    kind, prm, label = spec.kind, spec.params, spec.name
    if kind == "identity":
        return _diagonal_model(np.ones(int(prm["p"])), label)
    if kind == "scaled_identity":
        return _diagonal_model(np.full(int(prm["p"]), float(prm["scale"])), label)
    if kind == "spiked_diag":
        sig = np.ones(int(prm["p"]))
        sig[0] = math.sqrt(float(prm["delta"]))
        return _diagonal_model(sig, label)
    if kind == "unsigned_counterexample":
        p = int(prm["p"])
        sig = np.full(p, 1.0 / math.sqrt(math.log(p)))
        sig[0] = 2.0
        return _diagonal_model(sig, label)
    if kind == "weak_decay":
        sig = weak_decay_sigmas(int(prm["p"]), float(prm["alpha"]), float(prm.get("t", 1.0)))
        return _diagonal_model(sig, label)
    if kind == "equicorrelated":
        return _dense_model(
            equicorrelated_matrix(int(prm["p"]), float(prm["rho"]), float(prm.get("scale", 1.0))), label
        )
    if kind == "brownian_boundary":
        dense = brownian_boundary_cov(prm["times"], prm["psi"], prm["directions"])
        return _dense_model(np.asarray(dense.params["matrix"]), label)
    if kind == "dense":
        return _dense_model(np.asarray(prm["matrix"], dtype=float), label)
    raise DomainError(f"unknown covariance kind {kind!r}")


def sigmas_sorted_desc(model: CovarianceModel) -> tuple[np.ndarray, np.ndarray]:
    """Standard deviations in nonincreasing order and the original indices."""
    order = np.argsort(-model.sigmas, kind="stable")
    return model.sigmas[order], order


def random_dense_spec(p: int, seed: int, label: str | None = None) -> CovarianceSpec:
    """A reproducible, deliberately degenerate dense covariance.

    Random rank, row scales spread over three decades and a few exactly
    duplicated rows; normalized so that ``sigma_max = 1``.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x5EED, p])))
    rank = int(rng.integers(2, p + 1))
    rows = rng.standard_normal((p, rank))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    n_dup = int(rng.integers(0, max(1, p // 5)))
    for _ in range(n_dup):
        i, j = rng.integers(0, p, size=2)
        rows[i] = rows[j]
    rows *= (10.0 ** rng.uniform(-3.0, 0.0, size=p))[:, None]
    rows /= np.linalg.norm(rows, axis=1).max()
    matrix = rows @ rows.T
    return CovarianceSpec("dense", {"matrix": matrix.tolist()}, label=label or f"random_dense(p={p},seed={seed})")


def load_spec(source: str | Path | dict) -> CovarianceSpec:
    """Read a spec from a dict, a JSON string or a JSON file path."""
    if isinstance(source, dict):
        return CovarianceSpec.from_dict(source)
    text = str(source)
    try:
        path = Path(source)
        if path.is_file():
            text = path.read_text(encoding="utf-8")
    except OSError:
        pass
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainError(f"malformed covariance JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return CovarianceSpec.from_dict(doc)
