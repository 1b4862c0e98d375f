"""Synthetic regression problems ``y = f(x) + noise`` with cosine-mixture targets.

A cosine mixture ``f(x) = sum_k c_k cos(omega_k . x + phi_k)`` has an atomic
Fourier magnitude measure, so its Barron constant over a box is exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .nets import DimensionMismatch


class UnsupportedDistribution(ValueError):
    """Raised when a quantity is undefined for the chosen input distribution."""


@dataclass(frozen=True)
class Atom:
    amplitude: float
    frequency: tuple
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "frequency", tuple(float(w) for w in self.frequency))


@dataclass(frozen=True)
class TargetSpec:
    atoms: tuple
    d: int
    name: str = "target"

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if self.d < 1:
            raise ValueError("d must be positive")
        for atom in atoms:
            if len(atom.frequency) != self.d:
                raise DimensionMismatch(
                    f"atom frequency has length {len(atom.frequency)}, expected d={self.d}")
        object.__setattr__(self, "atoms", atoms)

    @property
    def support(self) -> frozenset:
        """0-based coordinates on which the target depends."""
        return frozenset(i for atom in self.atoms for i, w in enumerate(atom.frequency) if w != 0)

    @property
    def k(self) -> int:
        return len(self.support)

    def with_dim(self, d: int) -> "TargetSpec":
        """Embed the same function in ``d`` inputs by padding frequencies with zeros."""
        if d < max(self.support, default=-1) + 1:
            raise ValueError(f"cannot embed support {sorted(self.support)} in d={d}")
        atoms = tuple(
            Atom(a.amplitude, (a.frequency + (0.0,) * d)[:d], a.phase) for a in self.atoms)
        return TargetSpec(atoms, d, self.name)


def cosine_target(d: int, k: int = 1, amplitude: float = 1.0, frequency: float = 1.0,
                  phase: float = 0.0) -> TargetSpec:
    """``amplitude * cos(frequency * (x_1 + ... + x_k) + phase)``."""
    omega = (frequency,) * k + (0.0,) * (d - k)
    coords = "+".join(f"x{i + 1}" for i in range(k))
    return TargetSpec((Atom(amplitude, omega, phase),), d, name=f"cos({coords})")


@dataclass(frozen=True)
class DataDistribution:
    kind: str = "uniform-box"
    d: int = 1
    M: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform-box", "standard-gaussian"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.d < 1:
            raise ValueError("d must be positive")
        if self.kind == "uniform-box" and not self.M > 0:
            raise ValueError("M must be positive")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # Filled column by column, so the first k columns do not depend on d.
        if self.kind == "uniform-box":
            return rng.uniform(-self.M, self.M, size=(self.d, n)).T
        return rng.standard_normal(size=(self.d, n)).T


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "gaussian"
    scale: float = 0.0
    tau: float = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "laplace", "none"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("noise scale must be nonnegative")
        if self.kind == "none" and self.scale != 0:
            object.__setattr__(self, "scale", 0.0)
        if self.tau is None:
            object.__setattr__(self, "tau", math.sqrt(self.variance))
        if self.tau < 0 or self.variance > self.tau ** 2 * (1 + 1e-12):
            raise ValueError(f"noise variance {self.variance} exceeds tau^2 = {self.tau ** 2}")

    @classmethod
    def gaussian(cls, sd: float, tau: float = None) -> "NoiseSpec":
        return cls("gaussian", sd, tau)

    @classmethod
    def laplace(cls, scale: float, tau: float = None) -> "NoiseSpec":
        return cls("laplace", scale, tau)

    @classmethod
    def none(cls) -> "NoiseSpec":
        return cls("none", 0.0, 0.0)

    @property
    def variance(self) -> float:
        if self.kind == "laplace":
            return 2.0 * self.scale ** 2
        return self.scale ** 2

    def mean_abs(self) -> float:
        """Exact ``E|eps|``."""
        if self.kind == "gaussian":
            return self.scale * math.sqrt(2.0 / math.pi)
        return self.scale

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.normal(0.0, self.scale, size=n)
        if self.kind == "laplace":
            return rng.laplace(0.0, self.scale, size=n)
        return np.zeros(n)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"X shape {X.shape} does not match y length {y.shape[0]}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def eval_target(target: TargetSpec, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != target.d:
        raise DimensionMismatch(f"input has dimension {X.shape[1]}, target expects {target.d}")
    out = np.zeros(X.shape[0])
    for atom in target.atoms:
        out += atom.amplitude * np.cos(X @ np.asarray(atom.frequency) + atom.phase)
    return float(out[0]) if single else out


def barron_constant(target: TargetSpec, dist: DataDistribution) -> float:
    """``sum_k |c_k| * M * ||omega_k||_1``, exact for an atomic Fourier measure on a box."""
    if dist.kind != "uniform-box":
        raise UnsupportedDistribution(
            f"Barron constant needs a bounded input box; got {dist.kind}")
    return float(sum(abs(a.amplitude) * dist.M * np.abs(a.frequency).sum() for a in target.atoms))


def min_admissible_V(target: TargetSpec, dist: DataDistribution) -> float:
    """Smallest output budget ``2C + f(0)`` for which the target is approximable."""
    return 2.0 * barron_constant(target, dist) + eval_target(target, np.zeros(target.d))


def sample_dataset(target: TargetSpec, dist: DataDistribution, noise: NoiseSpec, n: int,
                   seed: int) -> Dataset:
    """Draw ``n`` iid pairs.  Inputs and noise use independent child streams of ``seed``."""
    if n < 1:
        raise ValueError("n must be positive")
    if dist.d != target.d:
        raise DimensionMismatch(f"distribution d={dist.d} but target d={target.d}")
    x_seq, eps_seq = np.random.SeedSequence(seed).spawn(2)
    X = dist.sample(np.random.default_rng(x_seq), n)
    eps = noise.sample(np.random.default_rng(eps_seq), n)
    return Dataset(X, eval_target(target, X) + eps)


def derive_seed(master: int, *keys: int) -> int:
    """Deterministic 63-bit seed for a stream labelled by integer ``keys``."""
    seq = np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# --- CSV ------------------------------------------------------------------------

def write_dataset_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(data.d)] + ["y"])
        for row, y in zip(data.X, data.y):
            writer.writerow([format(v, ".17g") for v in row] + [format(y, ".17g")])


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        d = len(header) - 1
        if d < 1 or header != [f"x{i + 1}" for i in range(d)] + ["y"]:
            raise ValueError(f"{path}: bad header {header}")
        rows = []
        for lineno, row in enumerate(reader, 2):
            if len(row) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    arr = np.array(rows, dtype=float).reshape(-1, d + 1)
    return Dataset(arr[:, :d], arr[:, d])

