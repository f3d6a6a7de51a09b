"""Explicit separator maps z -> v(z), their finite-width image, and initialization checks.

A separator is any map from directions z to vectors v(z) with ||v(z)||_2 <= 1;
its population margin against an example (x, y) is the Gaussian expectation of
y <v(z), x> 1[<z, x> > 0].  Three constructions are provided: a constant linear
one, the piecewise-constant map tailored to noisy 2-XOR data, and the witness
recovered from the margin QP's optimal weights.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .margin import MarginResult
from .model import Dataset, InitSnapshot, LabeledExample, NetworkParams, forward_all
from .util import ValidationError, pmap, substream


class LinearSeparator:
    """Constant map z -> u for a fixed unit vector u."""

    def __init__(self, u: np.ndarray):
        u = np.asarray(u, dtype=np.float64)
        if abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise ValidationError("linear separator needs a unit vector")
        self.u = u
        self.d = len(u)

    def value(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.d,):
            raise ValidationError(f"expected dimension {self.d}, got {z.shape}")
        return self.u.copy()

    def batch(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        return np.broadcast_to(self.u, (Z.shape[0], self.d)).copy()


def xor_region(z1: float, z2: float) -> int:
    """Quadrant-like region of the plane used by the 2-XOR separator.

    1: z1 >= 0 and |z1| >= |z2| (the origin lands here)
    2: z2 > 0 and |z1| < |z2|
    3: z1 <= 0 and |z1| >= |z2|, excluding the origin
    4: z2 < 0 and |z1| < |z2|
    """
    if abs(z1) >= abs(z2):
        if z1 > 0:
            return 1
        if z1 < 0:
            return 3
        return 1  # z1 == 0 forces z2 == 0 here
    return 2 if z2 > 0 else 4


def xor_regions(z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    """Vectorized xor_region."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    wide = np.abs(z1) >= np.abs(z2)
    out = np.where(wide, np.where(z1 < 0, 3, 1), np.where(z2 > 0, 2, 4))
    out[wide & (z1 == 0)] = 1  # origin
    return out


# Region -> (coordinate index, sign) of the nonzero output entry.
_XOR_VALUE = {1: (0, 1.0), 2: (1, -1.0), 3: (0, -1.0), 4: (1, 1.0)}


class Xor2Separator:
    """Separator for noisy 2-XOR data; depends on z only through (z1, z2)."""

    def __init__(self, d: int):
        if d < 3:
            raise ValidationError("2-XOR separator needs d >= 3")
        self.d = d

    def value(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.d,):
            raise ValidationError(f"expected dimension {self.d}, got {z.shape}")
        idx, sign = _XOR_VALUE[xor_region(float(z[0]), float(z[1]))]
        out = np.zeros(self.d)
        out[idx] = sign
        return out

    def batch(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        regions = xor_regions(Z[:, 0], Z[:, 1])
        out = np.zeros((Z.shape[0], self.d))
        for r, (idx, sign) in _XOR_VALUE.items():
            out[regions == r, idx] = sign
        return out


class KernelWitnessSeparator:
    """Witness map recovered from the margin QP: z -> sum_j q_j y_j x_j 1[<z,x_j> > 0] / gamma.

    The pre-division map has norm at most 1 by the convex-weight triangle
    inequality, so the witness norm is certified at 1/gamma only.
    """

    def __init__(self, result: MarginResult, dataset: Dataset):
        if not result.converged:
            raise ValidationError("witness separator needs a converged margin result")
        if result.gamma <= 1e-6:
            raise ValidationError("margin too small to normalize a witness")
        self.weights = result.q_star.q * dataset.y
        self.X = dataset.X
        self.gamma = result.gamma
        self.d = dataset.d

    def value(self, z: np.ndarray) -> np.ndarray:
        return self.batch(np.asarray(z, dtype=np.float64)[None, :])[0]

    def batch(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        if Z.shape[1] != self.d:
            raise ValidationError(f"expected dimension {self.d}, got {Z.shape[1]}")
        active = (Z @ self.X.T > 0.0).astype(np.float64)
        return (active * self.weights[None, :]) @ self.X / self.gamma


def separator_value(sep, z: np.ndarray) -> np.ndarray:
    """v(z) for any separator object."""
    return sep.value(z)


def population_margin_mc(sep, example: LabeledExample, n_samples: int,
                         rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo estimate (and stderr) of the population margin of one example."""
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    Z = rng.standard_normal((n_samples, len(example.x)))
    V = sep.batch(Z)
    vals = example.y * (V @ example.x) * (Z @ example.x > 0.0)
    est = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else float("inf")
    return est, stderr


@dataclass(frozen=True)
class UBarMatrix:
    """Finite-width image of a separator: row s is a_s v(w_s(0)) / sqrt(m)."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.array(self.matrix, dtype=np.float64)
        m = M.shape[0]
        row_norms = np.linalg.norm(M, axis=1)
        if np.max(row_norms, initial=0.0) > 1.0 / np.sqrt(m) + 1e-12:
            raise ValidationError("a row of the finite-width separator exceeds 1/sqrt(m)")
        M.flags.writeable = False
        object.__setattr__(self, "matrix", M)

    @property
    def fro_norm(self) -> float:
        return float(np.linalg.norm(self.matrix))


def build_u_bar(init: InitSnapshot, sep) -> UBarMatrix:
    """Rows a_s v(w_s(0)) / sqrt(m); Frobenius norm is at most 1."""
    m = init.W0.shape[0]
    V = sep.batch(init.W0)
    return UBarMatrix(matrix=(init.a / np.sqrt(m))[:, None] * V)


def finite_margin(params: NetworkParams, u_bar: UBarMatrix, dataset: Dataset) -> tuple[float, np.ndarray]:
    """min_i y_i <grad f_i(W), U> and the per-example values."""
    if u_bar.matrix.shape != params.W.shape:
        raise ValidationError("separator image shape does not match the network")
    active = (params.W @ dataset.X.T > 0.0)
    P = u_bar.matrix @ dataset.X.T
    vals = dataset.y * ((params.a / np.sqrt(params.m)) @ (active * P))
    return float(np.min(vals)), vals


def near_activation_fraction(params: NetworkParams, x: np.ndarray, eps2: float) -> float:
    """Fraction of units with |<w_s, x>| <= eps2."""
    if eps2 < 0:
        raise ValidationError("eps2 must be >= 0")
    return float(np.mean(np.abs(params.W @ np.asarray(x, dtype=np.float64)) <= eps2))


@dataclass
class InitOutputReport:
    values: np.ndarray      # |f(x_i)| at the supplied parameters
    threshold: float        # sqrt(2 ln(4n/delta))
    violations: np.ndarray  # indices above the threshold

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0


def init_output_check(params: NetworkParams, dataset: Dataset, delta: float) -> InitOutputReport:
    """Compare each |f(x_i)| against the high-probability output envelope at init."""
    if not 0.0 < delta < 1.0:
        raise ValidationError("delta must lie in (0,1)")
    min_width = 25.0 * np.log(2.0 * dataset.n / delta)
    if params.m < min_width:
        warnings.warn(f"width m={params.m} is below 25 ln(2n/delta) ~ {min_width:.1f}; "
                      "the output envelope may not hold", stacklevel=2)
    vals = np.abs(forward_all(params, dataset.X))
    threshold = float(np.sqrt(2.0 * np.log(4.0 * dataset.n / delta)))
    return InitOutputReport(values=vals, threshold=threshold,
                            violations=np.flatnonzero(vals > threshold))


def xor4_shared_noise(d: int, rng: np.random.Generator) -> Dataset:
    """The four 2-XOR prototypes with one shared random noise pattern."""
    c = 1.0 / np.sqrt(d - 1)
    noise = (rng.integers(0, 2, size=d - 2).astype(np.float64) * 2.0 - 1.0) * c
    X = np.zeros((4, d))
    X[:, 2:] = noise
    X[0, 0], X[1, 1], X[2, 0], X[3, 1] = c, c, -c, -c
    y = np.array([1.0, -1.0, 1.0, -1.0])
    return Dataset.from_arrays(X, y)


def activation_pattern_collapsed(params: NetworkParams, dataset: Dataset) -> bool:
    """True when every hidden unit activates identically on all examples."""
    active = params.W @ dataset.X.T > 0.0
    return bool(np.all(active.all(axis=1) | (~active).all(axis=1)))


def gradient_feature_gram(params: NetworkParams, dataset: Dataset) -> np.ndarray:
    """Gram of the flattened parameter gradients grad f_i(W)."""
    active = (params.W @ dataset.X.T > 0.0).astype(np.float64)
    return (dataset.X @ dataset.X.T) * (active.T @ active) / params.m


@dataclass
class DegeneracyReport:
    frequency: float
    degenerate: np.ndarray  # bool per trial
    trials: int


def ntk_lb_simulation(d: int, m: int, trials: int, seed: int, threads: int | None = None) -> DegeneracyReport:
    """Frequency of the collapsed-activation event on 4 shared-noise XOR points.

    Per trial: draw an initialization and a shared noise pattern, and record
    whether all four activation indicators coincide for every unit.  When they
    do, the gradient features admit no positive-margin linear separator.
    """
    if d < 20:
        raise ValidationError(f"the degeneracy bound needs d >= 20, got {d}")
    if trials < 1:
        raise ValidationError("trials must be >= 1")

    def one(trial: int) -> bool:
        rng = substream(seed, "ntk-lb", trial)
        ds = xor4_shared_noise(d, rng)
        W0 = rng.standard_normal((m, d))
        active = W0 @ ds.X.T > 0.0
        return bool(np.all(active.all(axis=1) | (~active).all(axis=1)))

    flags = np.array(pmap(one, list(range(trials)), threads=threads), dtype=bool)
    return DegeneracyReport(frequency=float(np.mean(flags)), degenerate=flags, trials=trials)
