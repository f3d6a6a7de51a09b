"""Two-layer ReLU network with frozen sign outputs, logistic risk, and derived quantities.

The network is f(x) = (1/sqrt(m)) * sum_s a_s * relu(<w_s, x>) with a_s fixed at
initialization and only the first-layer rows w_s trained.  All arithmetic is
64-bit; averages reduce in fixed index order so runs are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .util import ValidationError

UNIT_NORM_TOL = 1e-9


def _as_vector(x, d: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError(f"expected a vector, got shape {x.shape}")
    if d is not None and x.shape[0] != d:
        raise ValidationError(f"dimension mismatch: expected {d}, got {x.shape[0]}")
    return x


@dataclass(frozen=True)
class LabeledExample:
    """Unit-norm feature vector with a hard +/-1 label."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        x = _as_vector(self.x)
        if abs(np.linalg.norm(x) - 1.0) > UNIT_NORM_TOL:
            raise ValidationError(f"feature norm {np.linalg.norm(x)!r} is not 1 within {UNIT_NORM_TOL}")
        if self.y not in (-1, 1, -1.0, 1.0):
            raise ValidationError(f"label must be -1 or +1, got {self.y!r}")
        x = x.copy()
        x.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", float(self.y))


class Dataset:
    """Ordered collection of labeled unit-norm examples, stored as dense arrays.

    `X` has shape (n, d) and `y` shape (n,).  Rows keep insertion order.  An
    empty dataset (n=0) is representable but rejected by every operation that
    averages over examples.
    """

    def __init__(self, examples: Sequence[LabeledExample]):
        if len(examples) == 0:
            raise ValidationError("use Dataset.from_arrays for an empty dataset (needs explicit d)")
        X = np.stack([ex.x for ex in examples]).astype(np.float64)
        y = np.array([ex.y for ex in examples], dtype=np.float64)
        self._init_arrays(X, y, validate=False)

    @classmethod
    def from_arrays(cls, X: np.ndarray, y: np.ndarray) -> "Dataset":
        ds = cls.__new__(cls)
        ds._init_arrays(np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64), validate=True)
        return ds

    def _init_arrays(self, X: np.ndarray, y: np.ndarray, validate: bool):
        if X.ndim != 2:
            raise ValidationError(f"X must be 2-d, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValidationError(f"labels shape {y.shape} does not match {X.shape[0]} examples")
        if validate and X.shape[0] > 0:
            norms = np.linalg.norm(X, axis=1)
            if np.max(np.abs(norms - 1.0)) > UNIT_NORM_TOL:
                bad = int(np.argmax(np.abs(norms - 1.0)))
                raise ValidationError(f"example {bad} has norm {norms[bad]!r}, not 1 within {UNIT_NORM_TOL}")
            if not np.all(np.isin(y, (-1.0, 1.0))):
                raise ValidationError("labels must be exactly -1 or +1")
        X = X.copy()
        y = y.copy()
        X.flags.writeable = False
        y.flags.writeable = False
        self.X = X
        self.y = y

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def examples(self) -> list[LabeledExample]:
        return [LabeledExample(self.X[i], self.y[i]) for i in range(self.n)]

    def __len__(self) -> int:
        return self.n


@dataclass
class NetworkParams:
    """First-layer matrix W (rows w_s) plus the frozen sign vector a."""

    W: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        a = np.asarray(self.a, dtype=np.float64)
        if self.W.ndim != 2:
            raise ValidationError(f"W must be m x d, got shape {self.W.shape}")
        if a.shape != (self.W.shape[0],):
            raise ValidationError("a must have one sign per hidden unit")
        if not np.all(np.isin(a, (-1.0, 1.0))):
            raise ValidationError("a entries must be exactly -1 or +1")
        a = a.copy()
        a.flags.writeable = False  # a is fixed; only W trains
        self.a = a

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class InitSnapshot:
    """Frozen copy of the parameters at step 0."""

    W0: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        W0 = np.array(self.W0, dtype=np.float64)
        W0.flags.writeable = False
        object.__setattr__(self, "W0", W0)

    @classmethod
    def of(cls, params: NetworkParams) -> "InitSnapshot":
        return cls(W0=params.W, a=params.a)


def init_network(m: int, d: int, rng: np.random.Generator) -> NetworkParams:
    """Draw w_s ~ N(0, I_d) i.i.d. and a_s uniform on {-1,+1}, in that order."""
    if m < 1 or d < 1:
        raise ValidationError(f"need m >= 1 and d >= 1, got m={m}, d={d}")
    W = rng.standard_normal((m, d))
    a = rng.integers(0, 2, size=m).astype(np.float64) * 2.0 - 1.0
    return NetworkParams(W=W, a=a)


def forward_all(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    """Network outputs for every row of X, shape (n,)."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != params.d:
        raise ValidationError(f"input dimension {X.shape[1]} != network dimension {params.d}")
    Z = params.W @ X.T
    return (params.a / np.sqrt(params.m)) @ np.maximum(Z, 0.0)


def forward(params: NetworkParams, x: np.ndarray) -> float:
    """f(x) = (1/sqrt(m)) sum_s a_s relu(<w_s, x>)."""
    x = _as_vector(x, params.d)
    return float((params.a / np.sqrt(params.m)) @ np.maximum(params.W @ x, 0.0))


def feature_map(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Gradient of f in W: row s is (1/sqrt(m)) a_s 1[<w_s,x> > 0] x.

    The indicator is strict at zero pre-activation, so row s vanishes there.
    The Frobenius norm of the result is at most 1 for unit-norm x.
    """
    x = _as_vector(x, params.d)
    active = (params.W @ x > 0.0).astype(np.float64)
    return (params.a * active / np.sqrt(params.m))[:, None] * x[None, :]


def logistic_loss(z):
    """ln(1 + exp(-z)), evaluated on the overflow-free branch for either sign."""
    return np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))


def logistic_loss_slope(z):
    """Derivative -1/(1 + exp(z)); lies in (-1, 0) and never overflows."""
    z = np.asarray(z, dtype=np.float64)
    t = np.exp(-np.abs(z))
    return np.where(z >= 0, -t / (1.0 + t), -1.0 / (1.0 + t))


def _require_nonempty(dataset: Dataset):
    if dataset.n == 0:
        raise ValidationError("operation requires a nonempty dataset")


def label_margins(params: NetworkParams, dataset: Dataset) -> np.ndarray:
    """Per-example y_i * f(x_i), shape (n,)."""
    _require_nonempty(dataset)
    return dataset.y * forward_all(params, dataset.X)


def empirical_risk(params: NetworkParams, dataset: Dataset) -> float:
    """Average logistic loss over the dataset."""
    return float(np.mean(logistic_loss(label_margins(params, dataset))))


def risk_gradient(params: NetworkParams, dataset: Dataset) -> np.ndarray:
    """Gradient of the empirical risk in W; Frobenius norm is at most qhat."""
    _require_nonempty(dataset)
    X, y = dataset.X, dataset.y
    Z = params.W @ X.T
    f = (params.a / np.sqrt(params.m)) @ np.maximum(Z, 0.0)
    coef = logistic_loss_slope(y * f) * y / dataset.n
    scaled = (params.a / np.sqrt(params.m))[:, None] * (Z > 0.0) * coef[None, :]
    return scaled @ X


def qhat(params: NetworkParams, dataset: Dataset) -> float:
    """Average of -loss' over the data; satisfies 0 <= qhat <= min(1, risk)."""
    return float(np.mean(-logistic_loss_slope(label_margins(params, dataset))))


def linearized_risk(anchor: NetworkParams, candidate: np.ndarray, dataset: Dataset) -> float:
    """Risk of the linear model with features frozen at the anchor parameters.

    Prediction i is <grad f_i(anchor), candidate>; at candidate == anchor.W this
    equals the network risk by homogeneity of the ReLU.
    """
    _require_nonempty(dataset)
    candidate = np.asarray(candidate, dtype=np.float64)
    if candidate.shape != anchor.W.shape:
        raise ValidationError(f"candidate shape {candidate.shape} != {anchor.W.shape}")
    preds = linearized_outputs(anchor, candidate, dataset.X)
    return float(np.mean(logistic_loss(dataset.y * preds)))


def linearized_outputs(anchor: NetworkParams, candidate: np.ndarray, X: np.ndarray) -> np.ndarray:
    """<grad f_i(anchor), candidate> for each row x_i of X."""
    active = (anchor.W @ X.T > 0.0)
    P = candidate @ X.T
    return (anchor.a / np.sqrt(anchor.m)) @ (active * P)
