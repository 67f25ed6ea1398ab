"""Simulated triple record systems.

Two families are provided: populations drawn from the copy-regime model with
per-individual logistic heterogeneity (presets ``p1`` .. ``p8``), and
misspecified generators (``s1`` .. ``s4``) with behavioural carry-over or
Rasch-type heterogeneity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterator, Mapping

import numpy as np
from scipy.special import expit

from .exceptions import ParseError
from .stochastics import make_rng, sample_gl1
from .table import TrsTable
from .thbm import DependenceAlpha

SCENARIOS = ("S1", "S2", "S3", "S4")
# pattern code 4*Z1 + 2*Z2 + Z3 -> position in canonical cell order (000 last)
_CODE_TO_CELL = np.array([7, 6, 5, 3, 4, 2, 1, 0])


@dataclass(frozen=True)
class Heterogeneity:
    """Distribution of the logit-scale capture effect for one list."""

    dist: str
    mu: float = 0.0
    sd: float = 1.0
    eta: float = 1.0
    value: float = 0.0

    def __post_init__(self):
        if self.dist not in ("normal", "gl1", "fixed"):
            raise ValueError(f"unknown heterogeneity distribution {self.dist!r}")
        if self.dist == "normal" and not self.sd > 0:
            raise ValueError("sd must be positive")
        if self.dist == "gl1" and not self.eta > 0:
            raise ValueError("eta must be positive")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.dist == "normal":
            return rng.normal(self.mu, self.sd, size)
        if self.dist == "gl1":
            return np.asarray(sample_gl1(self.eta, rng, size))
        return np.full(size, float(self.value))

    def to_dict(self) -> dict:
        if self.dist == "normal":
            return {"dist": "normal", "mu": self.mu, "sd": self.sd}
        if self.dist == "gl1":
            return {"dist": "gl1", "eta": self.eta}
        return {"dist": "fixed", "value": self.value}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Heterogeneity":
        d = dict(d)
        dist = d.pop("dist", None)
        allowed = {"normal": {"mu", "sd"}, "gl1": {"eta"}, "fixed": {"value"}}
        if dist not in allowed:
            raise ParseError(f"b.dist must be one of normal, gl1, fixed; got {dist!r}")
        extra = set(d) - allowed[dist]
        if extra:
            raise ParseError(f"unexpected field(s) for {dist}: {', '.join(sorted(extra))}")
        return cls(dist, **{k: float(v) for k, v in d.items()})


def normal(mu: float, sd: float) -> Heterogeneity:
    return Heterogeneity("normal", mu=mu, sd=sd)


def gl1(eta: float) -> Heterogeneity:
    return Heterogeneity("gl1", eta=eta)


def fixed(value: float) -> Heterogeneity:
    return Heterogeneity("fixed", value=value)


@dataclass(frozen=True)
class PopulationSpec:
    N: int
    alpha: DependenceAlpha = field(default_factory=DependenceAlpha)
    b: tuple[Heterogeneity, ...] = (fixed(0.0), fixed(0.0), fixed(0.0))
    scenario: str | None = None
    s_literal: bool = False
    multiplier: float = 1.2

    def __post_init__(self):
        if int(self.N) < 1:
            raise ValueError("N must be at least 1")
        if self.scenario is not None and self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.scenario is None and len(self.b) != 3:
            raise ValueError("need one heterogeneity spec per list")

    def with_size(self, N: int) -> "PopulationSpec":
        return replace(self, N=int(N))

    def to_dict(self) -> dict:
        if self.scenario is not None:
            d: dict = {"scenario": self.scenario, "N": int(self.N)}
            if self.s_literal:
                d["s_literal"] = True
            return d
        return {"N": int(self.N), "alpha": self.alpha.as_array().tolist(),
                "b": [h.to_dict() for h in self.b]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], N: int | None = None) -> "PopulationSpec":
        d = dict(d)
        size = N if N is not None else d.get("N")
        if size is None:
            raise ParseError("population spec needs N")
        if "scenario" in d:
            extra = set(d) - {"scenario", "N", "s_literal"}
            if extra:
                raise ParseError(f"unexpected field(s): {', '.join(sorted(extra))}")
            return cls(int(size), scenario=str(d["scenario"]).upper(),
                       s_literal=bool(d.get("s_literal", False)))
        extra = set(d) - {"N", "alpha", "b"}
        if extra:
            raise ParseError(f"unexpected field(s): {', '.join(sorted(extra))}")
        try:
            alpha = DependenceAlpha.from_sequence(d.get("alpha", (0, 0, 0, 0)))
            b = tuple(Heterogeneity.from_dict(h) for h in d["b"])
        except KeyError as e:
            raise ParseError(f"population spec missing {e}") from None
        except (TypeError, ValueError) as e:
            raise ParseError(str(e)) from None
        return cls(int(size), alpha, b)


_A = (0.30, 0.30, 0.15, 0.10)
_B = (0.25, 0.15, 0.35, 0.10)
_WIDE = (normal(1, 5), normal(0.5, 5), normal(0, 5))
_NARROW = (normal(0.5, 1), normal(0.4, 1), normal(0.3, 1))
_GL_UP = (gl1(1), gl1(1.4), gl1(1.8))
_GL_DOWN = (gl1(1.6), gl1(1.2), gl1(0.8))

_PRESETS: dict[str, tuple] = {
    "p1": (_A, _WIDE), "p2": (_A, _NARROW), "p3": (_B, _WIDE), "p4": (_B, _NARROW),
    "p5": (_A, _GL_UP), "p6": (_A, _GL_DOWN), "p7": (_B, _GL_UP), "p8": (_B, _GL_DOWN),
}
PRESETS = tuple(_PRESETS) + ("s1", "s2", "s3", "s4")


def preset(name: str, N: int = 1000, s_literal: bool = False) -> PopulationSpec:
    key = name.lower()
    if key in _PRESETS:
        a, b = _PRESETS[key]
        return PopulationSpec(int(N), DependenceAlpha.from_sequence(a), b)
    if key in ("s1", "s2", "s3", "s4"):
        return PopulationSpec(int(N), scenario=key.upper(), s_literal=s_literal)
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def load_population(source: str | Path, N: int | None = None, s_literal: bool = False) -> PopulationSpec:
    """A preset name or a JSON spec file."""
    if str(source).lower() in PRESETS:
        return preset(str(source), N if N is not None else 1000, s_literal)
    path = Path(source)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ParseError(f"{path}: no such preset or file") from None
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(data, Mapping):
        raise ParseError(f"{path}: population spec must be a JSON object")
    spec = PopulationSpec.from_dict(data, N)
    return replace(spec, s_literal=True) if s_literal and spec.scenario else spec


@dataclass
class SimResult:
    table: TrsTable
    truth: PopulationSpec
    x000: int
    regimes: np.ndarray | None = None
    patterns: np.ndarray | None = None

    @property
    def N(self) -> int:
        return self.truth.N


def _tabulate(Z: np.ndarray, label: str) -> tuple[TrsTable, int]:
    code = Z[:, 0] * 4 + Z[:, 1] * 2 + Z[:, 2]
    counts = np.zeros(8, dtype=np.int64)
    np.add.at(counts, _CODE_TO_CELL[code], 1)
    return TrsTable(*(int(c) for c in counts[:7]), label=label), int(counts[7])


def copy_regimes(X: np.ndarray, regime: np.ndarray) -> np.ndarray:
    """Observed capture statuses from latent draws; regimes are 1..4, 5 = independent."""
    X1, X2, X3 = X[:, 0], X[:, 1], X[:, 2]
    Z2 = np.where((regime == 1) | (regime == 4), X1, X2)
    Z3 = np.select([regime == 1, regime == 2, regime == 3, regime == 4], [X3, X2, X1, X1], X3)
    return np.column_stack([X1, Z2, Z3]).astype(np.int64)


def _draw_regimes(alpha: DependenceAlpha, N: int, rng: np.random.Generator) -> np.ndarray:
    probs = np.concatenate([alpha.as_array(), [max(1.0 - alpha.a0, 0.0)]])
    return rng.choice(5, size=N, p=probs / probs.sum()) + 1


def generate_thbm(spec: PopulationSpec, rng: np.random.Generator, instrument: bool = False,
                  label: str = "") -> SimResult:
    if spec.scenario is not None:
        raise ValueError("use generate_scenario for scenario specs")
    N = int(spec.N)
    b = np.column_stack([h.draw(rng, N) for h in spec.b])
    P = expit(b)
    X = (rng.random((N, 3)) < P).astype(np.int64)
    regime = _draw_regimes(spec.alpha, N, rng)
    Z = copy_regimes(X, regime)
    table, x000 = _tabulate(Z, label)
    return SimResult(table, spec, x000, regime if instrument else None, Z if instrument else None)


_RASCH_EFFECTS = {"S3": (-1.0, 0.0, 1.0), "S4": (1.0, 0.5, 0.1)}
_BEHAVIOUR_BETA = {"S1": (2.0, 2.0), "S2": (2.0, 4.0)}


def _carry_over(P: np.ndarray, captured: np.ndarray, literal: bool, multiplier: float) -> np.ndarray:
    bumped = np.full_like(P, multiplier) if literal else multiplier * P
    return np.where(captured == 1, np.minimum(bumped, 0.99), P)


def generate_scenario(tag: str, N: int, rng: np.random.Generator, literal: bool = False,
                      multiplier: float = 1.2, instrument: bool = False,
                      rasch_v: np.ndarray | None = None, label: str = "") -> SimResult:
    tag = tag.upper()
    spec = PopulationSpec(int(N), scenario=tag, s_literal=literal, multiplier=multiplier)
    N = int(N)
    regime = None
    if tag in _BEHAVIOUR_BETA:
        a, b = _BEHAVIOUR_BETA[tag]
        regime = _draw_regimes(DependenceAlpha(0.1, 0.1, 0.1, 0.1), N, rng)
        P = rng.beta(a, b, N)
        X1 = (rng.random(N) < P).astype(np.int64)
        Z1 = X1
        P = _carry_over(P, Z1, literal, multiplier)
        X2 = (rng.random(N) < P).astype(np.int64)
        Z2 = np.where((regime == 1) | (regime == 4), X1, X2)
        P = _carry_over(P, Z2, literal, multiplier)
        X3 = (rng.random(N) < P).astype(np.int64)
        Z = copy_regimes(np.column_stack([X1, X2, X3]), regime)
    elif tag in _RASCH_EFFECTS:
        s = np.asarray(_RASCH_EFFECTS[tag])
        v = rng.standard_normal(N) if rasch_v is None else np.broadcast_to(np.asarray(rasch_v, float), (N,))
        P = expit(v[:, None] + s[None, :])
        Z = (rng.random((N, 3)) < P).astype(np.int64)
    else:
        raise ValueError(f"unknown scenario {tag!r}")
    table, x000 = _tabulate(Z, label)
    return SimResult(table, spec, x000, regime if instrument else None, Z if instrument else None)


def generate(spec: PopulationSpec, rng: np.random.Generator, **kw) -> SimResult:
    if spec.scenario is not None:
        return generate_scenario(spec.scenario, spec.N, rng, literal=spec.s_literal,
                                 multiplier=spec.multiplier, **kw)
    return generate_thbm(spec, rng, **kw)


def generate_batch(spec: PopulationSpec | str, N: int | None = None, R: int = 1,
                   seed: int = 0) -> Iterator[SimResult]:
    """Replicate r draws from stream r of ``seed``."""
    if R < 1:
        raise ValueError("R must be at least 1")
    if isinstance(spec, str):
        spec = preset(spec, N if N is not None else 1000)
    elif N is not None:
        spec = spec.with_size(N)
    for r in range(R):
        yield generate(spec, make_rng(seed, r), label=f"rep{r:04d}")


def spec_json(spec: PopulationSpec) -> str:
    return json.dumps(spec.to_dict(), sort_keys=True)


__all__ = [
    "Heterogeneity", "PopulationSpec", "SimResult", "PRESETS", "SCENARIOS",
    "preset", "load_population", "generate_thbm", "generate_scenario", "generate",
    "generate_batch", "copy_regimes", "normal", "gl1", "fixed", "spec_json",
]
