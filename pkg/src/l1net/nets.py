"""Two-layer sigmoid networks, their parameter norms and constraint classes.

A network computes ``a0 + sum_j a[j] * sigma(W[j] @ x + b[j])``.  The output
bias ``a0`` counts toward the output-layer L1 budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np


class DimensionMismatch(ValueError):
    """Input shape does not agree with the network or class dimensions."""


@dataclass(frozen=True)
class ActivationSpec:
    kind: str = "logistic"
    lipschitz: float = 0.25

    def __post_init__(self):
        if self.kind != "logistic":
            raise ValueError(f"unsupported activation {self.kind!r}")
        if not self.lipschitz > 0:
            raise ValueError("lipschitz must be positive")

    def __call__(self, z, out=None):
        # 1 / (1 + exp(-z)) in place; several times faster than scipy's expit.
        scalar = out is None and np.ndim(z) == 0
        out = np.negative(np.asarray(z, dtype=float), out=out)
        out = np.atleast_1d(out) if scalar else out
        with np.errstate(over="ignore"):
            np.exp(out, out=out)
        out += 1.0
        np.reciprocal(out, out=out)
        return out[0] if scalar else out

    def derivative(self, z):
        s = self(z)
        return s * (1.0 - s)


LOGISTIC = ActivationSpec()


@dataclass(frozen=True, eq=False)
class TwoLayerParams:
    """Immutable parameter set ``(a0, a, W, b)`` with ``W`` of shape (r, d)."""

    a0: float
    a: np.ndarray
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float).reshape(-1)
        W = np.array(self.W, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        if W.ndim != 2:
            raise DimensionMismatch(f"W must be 2-D, got shape {W.shape}")
        r = W.shape[0]
        if a.shape != (r,) or b.shape != (r,):
            raise DimensionMismatch(
                f"a, W rows and b must share length r: got {a.shape[0]}, {r}, {b.shape[0]}"
            )
        a0 = float(self.a0)
        if not (np.isfinite(a0) and np.isfinite(a).all() and np.isfinite(W).all()
                and np.isfinite(b).all()):
            raise ValueError("parameters must be finite")
        for arr in (a, W, b):
            arr.setflags(write=False)
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @classmethod
    def zeros(cls, r: int, d: int) -> "TwoLayerParams":
        return cls(0.0, np.zeros(r), np.zeros((r, d)), np.zeros(r))

    @property
    def r(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    def scale_output(self, c: float) -> "TwoLayerParams":
        return TwoLayerParams(c * self.a0, c * self.a, self.W, self.b)

    def __eq__(self, other):
        if not isinstance(other, TwoLayerParams):
            return NotImplemented
        return (self.a0 == other.a0 and np.array_equal(self.a, other.a)
                and np.array_equal(self.W, other.W) and np.array_equal(self.b, other.b))


# --- constraint regimes -------------------------------------------------------

@dataclass(frozen=True)
class OutputL1:
    name = "output_l1"


@dataclass(frozen=True)
class JointL1:
    """Each neuron satisfies ``||w_j||_1 + |b_j| <= eta``."""

    eta: float
    name = "joint_l1"

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")


@dataclass(frozen=True)
class InputL0:
    """Input weights restricted to a known coordinate set (0-based indices)."""

    support: tuple
    name = "input_l0"

    def __post_init__(self):
        s = tuple(sorted(int(i) for i in self.support))
        if len(set(s)) != len(s):
            raise ValueError("support indices must be distinct")
        if not s:
            raise ValueError("support must be nonempty (k >= 1)")
        object.__setattr__(self, "support", s)

    @property
    def k(self) -> int:
        return len(self.support)


Regime = Union[OutputL1, JointL1, InputL0]


@dataclass(frozen=True)
class FunctionClassSpec:
    V: float
    regime: Regime
    r: int
    d: int
    activation: ActivationSpec = field(default=LOGISTIC)

    def __post_init__(self):
        if not (np.isfinite(self.V) and self.V >= 0):
            raise ValueError(f"V must be a finite nonnegative number, got {self.V}")
        if self.r < 0:
            raise ValueError("r must be nonnegative")
        if self.d < 1:
            raise ValueError("d must be positive")
        if isinstance(self.regime, InputL0):
            if self.regime.k > self.d or min(self.regime.support) < 0 \
                    or max(self.regime.support) >= self.d:
                raise ValueError(f"support {self.regime.support} not inside 0..{self.d - 1}")

    def support_mask(self) -> np.ndarray:
        """Boolean mask of input columns W may use."""
        if isinstance(self.regime, InputL0):
            mask = np.zeros(self.d, dtype=bool)
            mask[list(self.regime.support)] = True
            return mask
        return np.ones(self.d, dtype=bool)


# --- evaluation and norms -------------------------------------------------------

def forward(params: TwoLayerParams, activation: ActivationSpec, x) -> Union[float, np.ndarray]:
    """Evaluate the network at one point (1-D ``x``) or at every row of ``x``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.ndim != 2 or X.shape[1] != params.d:
        raise DimensionMismatch(f"input has dimension {X.shape[-1]}, network expects {params.d}")
    out = params.a0 + activation(X @ params.W.T + params.b) @ params.a
    return float(out[0]) if single else out


def output_l1_norm(params: TwoLayerParams) -> float:
    return float(np.abs(np.concatenate(([params.a0], params.a))).sum())


def neuron_l1_norms(params: TwoLayerParams) -> np.ndarray:
    return np.abs(params.W).sum(axis=1) + np.abs(params.b)


def support_of(params: TwoLayerParams, tolerance: float = 0.0) -> frozenset:
    """0-based input coordinates carrying some weight strictly above ``tolerance``."""
    if tolerance < 0:
        raise ValueError("tolerance must be nonnegative")
    active = (np.abs(params.W) > tolerance).any(axis=0)
    return frozenset(int(i) for i in np.flatnonzero(active))


# --- text serialization ---------------------------------------------------------

def _fmt(values) -> str:
    return ",".join(format(float(v), ".17g") for v in np.ravel(values))


def _parse_floats(text: str) -> np.ndarray:
    text = text.strip()
    if not text:
        return np.zeros(0)
    return np.array([float(t) for t in text.split(",")])


def params_to_text(params: TwoLayerParams) -> str:
    lines = [
        f"r = {params.r}",
        f"d = {params.d}",
        f"a0 = {format(params.a0, '.17g')}",
        f"a = {_fmt(params.a)}",
        f"W = {_fmt(params.W)}",
        f"b = {_fmt(params.b)}",
    ]
    return "\n".join(lines) + "\n"


def params_from_text(text: str) -> TwoLayerParams:
    fields = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in {"r", "d", "a0", "a", "W", "b"}:
            raise ValueError(f"line {lineno}: cannot parse {line!r}")
        fields[key] = value.strip()
    missing = {"r", "d", "a0", "a", "W", "b"} - set(fields)
    if missing:
        raise ValueError(f"missing fields: {sorted(missing)}")
    r, d = int(fields["r"]), int(fields["d"])
    W = _parse_floats(fields["W"])
    if W.size != r * d:
        raise DimensionMismatch(f"W has {W.size} entries, expected r*d = {r * d}")
    return TwoLayerParams(float(fields["a0"]), _parse_floats(fields["a"]), W.reshape(r, d),
                          _parse_floats(fields["b"]))


def save_params(params: TwoLayerParams, path) -> None:
    Path(path).write_text(params_to_text(params))


def load_params(path) -> TwoLayerParams:
    return params_from_text(Path(path).read_text())
