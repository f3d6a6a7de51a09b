"""Synthetic dataset generators: noisy 2-XOR, planted-margin linear, random relabeling."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .model import Dataset
from .util import ValidationError, fmt_g17

EXHAUSTIVE_CAP = 2 ** 16

_XOR_PROTOS = np.array([(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)])
_XOR_LABELS = np.array([1.0, -1.0, 1.0, -1.0])  # +1 iff the second coordinate is 0


def _xor_scale(d: int) -> float:
    return 1.0 / np.sqrt(d - 1)


def make_xor2(d: int, mode: str = "exhaustive", n: int | None = None,
              rng: np.random.Generator | None = None, cap: int = EXHAUSTIVE_CAP) -> Dataset:
    """Noisy 2-XOR data: one of four labeled prototypes in the first two
    coordinates, +/-1/sqrt(d-1) in the remaining d-2, all points unit norm.

    mode="exhaustive" enumerates all 2^d points (prototype-major, noise bits
    counting in binary); mode="iid" draws n uniform samples.
    """
    if d < 3:
        raise ValidationError(f"noisy 2-XOR needs d >= 3, got {d}")
    c = _xor_scale(d)
    if mode == "exhaustive":
        total = 4 * 2 ** (d - 2)
        if total > cap:
            raise ValidationError(f"exhaustive 2-XOR would emit {total} points, above the cap {cap}")
        pats = np.array(list(itertools.product((-1.0, 1.0), repeat=d - 2)))
        X = np.empty((total, d))
        y = np.empty(total)
        k = len(pats)
        for p in range(4):
            X[p * k:(p + 1) * k, :2] = c * _XOR_PROTOS[p]
            X[p * k:(p + 1) * k, 2:] = c * pats
            y[p * k:(p + 1) * k] = _XOR_LABELS[p]
        return Dataset.from_arrays(X, y)
    if mode == "iid":
        if n is None or n < 1:
            raise ValidationError("mode='iid' needs n >= 1")
        if rng is None:
            raise ValidationError("mode='iid' needs an rng")
        X, y = _xor2_draw(d, n, rng)
        return Dataset.from_arrays(X, y)
    raise ValidationError(f"unknown sampling mode {mode!r}")


def _xor2_draw(d: int, n: int, rng: np.random.Generator):
    c = _xor_scale(d)
    idx = rng.integers(0, 4, size=n)
    noise = rng.integers(0, 2, size=(n, d - 2)).astype(np.float64) * 2.0 - 1.0
    X = np.concatenate([c * _XOR_PROTOS[idx], c * noise], axis=1)
    return X, _XOR_LABELS[idx]


def make_linear(d: int, gamma0: float, n: int, rng: np.random.Generator,
                u: np.ndarray | None = None) -> tuple[Dataset, np.ndarray]:
    """Unit-norm samples with planted linear margin: y <u, x> >= gamma0 for all.

    Uniform sphere points are rejection-sampled to |<u,x>| >= gamma0 and labeled
    by the sign, which keeps the accepted distribution symmetric about u.
    Returns the dataset and the planted unit separator.
    """
    if not 0.0 < gamma0 < 1.0:
        raise ValidationError(f"gamma0 must lie in (0,1), got {gamma0}")
    if n < 1:
        raise ValidationError(f"need n >= 1, got {n}")
    if u is None:
        u = rng.standard_normal(d)
        u = u / np.linalg.norm(u)
    else:
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (d,) or abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise ValidationError("planted separator must be a unit vector of length d")
    # Pilot estimate of the acceptance rate; abort instead of looping forever.
    pilot = rng.standard_normal((200_000, d))
    pilot /= np.linalg.norm(pilot, axis=1, keepdims=True)
    hits = int(np.sum(np.abs(pilot @ u) >= gamma0))
    if hits < 20:
        raise ValidationError(
            f"acceptance rate for gamma0={gamma0} in d={d} is ~{hits / 200_000:.1e} (< 1e-4); "
            "lower gamma0 or raise d")
    X = np.empty((n, d))
    got = 0
    take0 = pilot[np.abs(pilot @ u) >= gamma0][:n]
    X[:len(take0)] = take0
    got = len(take0)
    while got < n:
        cand = rng.standard_normal((max(1024, 4 * (n - got)), d))
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        keep = cand[np.abs(cand @ u) >= gamma0][: n - got]
        X[got:got + len(keep)] = keep
        got += len(keep)
    y = np.sign(X @ u)
    return Dataset.from_arrays(X, y), u


def relabel_random(dataset: Dataset, rng: np.random.Generator) -> Dataset:
    """Same features, labels redrawn i.i.d. uniform on {-1,+1}."""
    if dataset.n == 0:
        return dataset
    y = rng.integers(0, 2, size=dataset.n).astype(np.float64) * 2.0 - 1.0
    return Dataset.from_arrays(dataset.X, y)


@dataclass
class DistributionSpec:
    """Configured data source: which family, its parameters, and how to sample.

    kind: "xor2" | "linear" | "finite" (finite loads a dataset CSV via `path`).
    mode: "exhaustive" | "iid" (xor2 only; linear is always iid).
    The planted linear separator u is drawn once per spec from the caller's rng
    and then shared by every dataset/stream produced from the spec.
    """

    kind: str = "linear"
    d: int = 20
    gamma0: float = 0.2
    n: int = 200
    mode: str = "iid"
    path: str | None = None
    u: np.ndarray | None = None

    def ensure_planted(self, rng: np.random.Generator) -> None:
        if self.kind == "linear" and self.u is None:
            u = rng.standard_normal(self.d)
            self.u = u / np.linalg.norm(u)

    def make(self, rng: np.random.Generator, n: int | None = None) -> Dataset:
        n = self.n if n is None else n
        if self.kind == "xor2":
            return make_xor2(self.d, mode=self.mode, n=n, rng=rng)
        if self.kind == "linear":
            self.ensure_planted(rng)
            ds, _ = make_linear(self.d, self.gamma0, n, rng, u=self.u)
            return ds
        if self.kind == "finite":
            if not self.path:
                raise ValidationError("kind='finite' needs a dataset CSV path")
            return dataset_from_csv(self.path)
        raise ValidationError(f"unknown distribution kind {self.kind!r}")

    def stream(self, rng: np.random.Generator, batch: int = 512) -> Iterator[tuple[np.ndarray, float]]:
        """Endless i.i.d. example stream (the online oracle)."""
        if self.kind == "finite":
            raise ValidationError("a finite dataset does not define an online oracle")
        if self.kind == "linear":
            self.ensure_planted(rng)
        while True:
            if self.kind == "xor2":
                X, y = _xor2_draw(self.d, batch, rng)
            else:
                ds, _ = make_linear(self.d, self.gamma0, batch, rng, u=self.u)
                X, y = ds.X, ds.y
            for i in range(batch):
                yield X[i], float(y[i])


def dataset_to_csv(dataset: Dataset, path: str | Path, generator: str = "explicit", seed: int | None = None) -> None:
    """Columns x_0..x_{d-1},y with a metadata comment line first."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = f"d={dataset.d} n={dataset.n} generator={generator} seed={'none' if seed is None else seed}"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {meta}\n")
        fh.write(",".join([f"x_{j}" for j in range(dataset.d)] + ["y"]) + "\n")
        for i in range(dataset.n):
            cells = [fmt_g17(v) for v in dataset.X[i]] + [str(int(dataset.y[i]))]
            fh.write(",".join(cells) + "\n")


def dataset_from_csv(path: str | Path) -> Dataset:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("x_0"):
                continue
            rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise ValidationError(f"no data rows in {path}")
    arr = np.array(rows)
    return Dataset.from_arrays(arr[:, :-1], arr[:, -1])
