"""Linear kernel, first/second-layer infinite-width NTK evaluators, grams, and functional SGD.

Closed forms (unit-norm inputs, c = <x, x'>):
    k1(x,x') = c (pi - arccos c) / (2 pi)        first-layer NTK
    k2(x,x') = (sqrt(1-c^2) + (pi - arccos c) c) / (2 pi)   second-layer NTK
Both are Gaussian expectations over a random direction w; the Monte Carlo
estimators below average the defining integrand directly and are the oracles
the closed forms are validated against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .model import Dataset, logistic_loss_slope
from .util import OracleExhausted, ValidationError, fingerprint, fmt_g17

UNIT_TOL = 1e-8


def _check_unit(*xs: np.ndarray) -> None:
    for x in xs:
        if abs(np.linalg.norm(x) - 1.0) > UNIT_TOL:
            raise ValidationError(f"kernel input has norm {np.linalg.norm(x)!r}, expected 1")


def k1_from_cos(c):
    c = np.clip(np.asarray(c, dtype=np.float64), -1.0, 1.0)
    return c * (np.pi - np.arccos(c)) / (2.0 * np.pi)


def k2_from_cos(c):
    c = np.clip(np.asarray(c, dtype=np.float64), -1.0, 1.0)
    return (np.sqrt(np.maximum(1.0 - c * c, 0.0)) + (np.pi - np.arccos(c)) * c) / (2.0 * np.pi)


def k0(x: np.ndarray, xp: np.ndarray) -> float:
    """Plain inner product."""
    return float(np.dot(x, xp))


def k1(x: np.ndarray, xp: np.ndarray) -> float:
    """First-layer NTK; equals 1/2 at x'=x and 0 at antipodal or orthogonal pairs."""
    _check_unit(x, xp)
    return float(k1_from_cos(np.dot(x, xp)))


def k2(x: np.ndarray, xp: np.ndarray) -> float:
    """Second-layer NTK; equals 1/2 at x'=x and 1/(2 pi) at orthogonal pairs."""
    _check_unit(x, xp)
    return float(k2_from_cos(np.dot(x, xp)))


def _mc_estimate(values: np.ndarray) -> tuple[float, float]:
    est = float(np.mean(values))
    if len(values) > 1:
        stderr = float(np.std(values, ddof=1) / np.sqrt(len(values)))
    else:
        stderr = float("inf")
    return est, stderr


def k1_mc(x: np.ndarray, xp: np.ndarray, n_samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo estimate of the first-layer NTK expectation, with its stderr."""
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(xp, dtype=np.float64)
    W = rng.standard_normal((n_samples, len(x)))
    vals = np.dot(x, xp) * ((W @ x > 0) & (W @ xp > 0)).astype(np.float64)
    return _mc_estimate(vals)


def k2_mc(x: np.ndarray, xp: np.ndarray, n_samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo estimate of the second-layer NTK expectation, with its stderr."""
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(xp, dtype=np.float64)
    W = rng.standard_normal((n_samples, len(x)))
    vals = np.maximum(W @ x, 0.0) * np.maximum(W @ xp, 0.0)
    return _mc_estimate(vals)


class Kernel:
    """Batch kernel evaluator; subclasses fill in cross()."""

    name = "kernel"
    exact = True

    def cross(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gram_matrix(self, X: np.ndarray) -> np.ndarray:
        return self.cross(X, X)


class LinearKernel(Kernel):
    name = "k0"

    def cross(self, X, Z):
        return np.asarray(X) @ np.asarray(Z).T


class Ntk1Kernel(Kernel):
    name = "k1"

    def cross(self, X, Z):
        return k1_from_cos(np.asarray(X) @ np.asarray(Z).T)


class Ntk2Kernel(Kernel):
    name = "k2"

    def cross(self, X, Z):
        return k2_from_cos(np.asarray(X) @ np.asarray(Z).T)


class SumKernel(Kernel):
    def __init__(self, parts: Sequence[Kernel]):
        self.parts = list(parts)
        self.name = "+".join(p.name for p in self.parts)
        self.exact = all(p.exact for p in self.parts)

    def cross(self, X, Z):
        out = self.parts[0].cross(X, Z)
        for p in self.parts[1:]:
            out = out + p.cross(X, Z)
        return out


class MonteCarloKernel(Kernel):
    """MC approximation of k1 or k2 from one shared bank of Gaussian directions.

    Sharing the bank across all pairs makes grams exactly symmetric (and PSD,
    since the estimate is an explicit random-feature inner product).
    """

    exact = False

    def __init__(self, kind: str, d: int, n_samples: int, seed: int):
        if kind not in ("k1", "k2"):
            raise ValidationError(f"MonteCarloKernel kind must be 'k1' or 'k2', got {kind!r}")
        self.kind = kind
        self.n_samples = int(n_samples)
        self.seed = int(seed)
        self.name = f"{kind}_mc(N={n_samples},seed={seed})"
        self.bank = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed))).standard_normal(
            (self.n_samples, d))

    def cross(self, X, Z):
        X = np.asarray(X, dtype=np.float64)
        Z = np.asarray(Z, dtype=np.float64)
        GX = self.bank @ X.T
        GZ = GX if Z is X else self.bank @ Z.T
        if self.kind == "k1":
            ind_x = (GX > 0).astype(np.float64)
            ind_z = ind_x if Z is X else (GZ > 0).astype(np.float64)
            return (X @ Z.T) * (ind_x.T @ ind_z) / self.n_samples
        hx = np.maximum(GX, 0.0)
        hz = hx if Z is X else np.maximum(GZ, 0.0)
        return (hx.T @ hz) / self.n_samples


@dataclass(frozen=True)
class GramMatrix:
    """Cached n x n kernel matrix with provenance."""

    matrix: np.ndarray
    kernel_name: str
    dataset_fingerprint: str
    exact: bool = True

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValidationError(f"gram must be square, got {M.shape}")
        if np.max(np.abs(M - M.T), initial=0.0) > 1e-12:
            raise ValidationError("gram matrix is not symmetric within 1e-12")
        M = M.copy()
        M.flags.writeable = False
        object.__setattr__(self, "matrix", M)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def gram(kernel: Kernel, dataset: Dataset) -> GramMatrix:
    """Gram matrix of the kernel on the dataset features, exactly symmetrized."""
    if dataset.n == 0:
        raise ValidationError("gram of an empty dataset")
    M = kernel.gram_matrix(dataset.X)
    M = (M + M.T) / 2.0  # kill last-bit asymmetry from the batched evaluation
    return GramMatrix(matrix=M, kernel_name=kernel.name,
                      dataset_fingerprint=fingerprint(dataset.X, dataset.y), exact=kernel.exact)


def gram_to_csv(g: GramMatrix, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# kernel={g.kernel_name} fingerprint={g.dataset_fingerprint} n={g.n}\n")
        for i in range(g.n):
            fh.write(",".join(fmt_g17(v) for v in g.matrix[i]) + "\n")


@dataclass
class KernelSgdState:
    """Support points and coefficients of the functional-SGD iterate.

    The predictor is f(x) = sum_i coeffs[i] * k(support[i], x); one coefficient
    is appended per consumed stream example.
    """

    kernel: Kernel
    support: np.ndarray
    coeffs: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if len(self.coeffs) == 0:
            return np.zeros(X.shape[0])
        return self.coeffs @ self.kernel.cross(self.support, X)


def kernel_sgd(kernel: Kernel, stream: Iterator[tuple[np.ndarray, float]], eta: float, n_steps: int,
               eval_set: Dataset | None = None, eval_stride: int = 1,
               stop_below: float | None = None) -> tuple[KernelSgdState, list[dict]]:
    """Online functional gradient descent on the logistic loss in the kernel's RKHS.

    At step i the current predictor scores the fresh example and the coefficient
    -eta * loss'(y_i f(x_i)) * y_i is appended.  When eval_set is given, the
    held-out misclassification rate is recorded every eval_stride steps; with
    stop_below set, the run ends at the first recorded rate at or below it.
    """
    if eta <= 0:
        raise ValidationError(f"eta must be positive, got {eta}")
    if n_steps < 0:
        raise ValidationError("n_steps must be >= 0")
    first = None
    if n_steps > 0:
        try:
            first = next(stream)
        except StopIteration:
            raise OracleExhausted("oracle exhausted after 0 of %d steps" % n_steps) from None
    d = len(first[0]) if first is not None else 0
    support = np.zeros((n_steps, d))
    coeffs = np.zeros(n_steps)
    f_eval = np.zeros(eval_set.n) if eval_set is not None else None
    curve: list[dict] = []
    item = first
    for i in range(n_steps):
        if i > 0:
            try:
                item = next(stream)
            except StopIteration:
                raise OracleExhausted(f"oracle exhausted after {i} of {n_steps} steps") from None
        x, y = np.asarray(item[0], dtype=np.float64), float(item[1])
        fx = float(coeffs[:i] @ kernel.cross(support[:i], x[None, :])[:, 0]) if i > 0 else 0.0
        c_i = -eta * float(logistic_loss_slope(y * fx)) * y
        support[i] = x
        coeffs[i] = c_i
        if eval_set is not None:
            f_eval += c_i * kernel.cross(x[None, :], eval_set.X)[0]
            if (i + 1) % eval_stride == 0:
                err = float(np.mean(eval_set.y * f_eval <= 0))
                curve.append({"step": i + 1, "test_err": err})
                if stop_below is not None and err <= stop_below:
                    support = support[: i + 1]
                    coeffs = coeffs[: i + 1]
                    break
    state = KernelSgdState(kernel=kernel, support=support, coeffs=coeffs)
    return state, curve
