"""TOML run configuration: model, regime schedule, seed and per-study settings.

Key names are documented in the README; unknown keys in the model sections
are rejected so typos fail loudly.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import (CoefficientFunction, CoefficientSet, ConfigError, HypothesisParams, Model,
                    RegimeEntry, RegimeSchedule)
from .spectral import CovarianceSpec, EigenSystem, build_eigensystem

MODEL_KEYS = {
    "domain": {"length", "boundary", "mass_shift"},
    "eigensystem": {"slow_modes", "fast_modes", "slow_alphas", "slow_sup_norms",
                    "fast_alphas", "fast_sup_norms"},
    "covariance1": {"lambdas", "coupling"},
    "covariance2": {"lambdas", "coupling"},
    "hypotheses": {"beta1", "rho1", "beta2", "rho2"},
    "regime": {"entries", "epsilons", "delta_scale", "delta_power", "Delta_scale",
               "Delta_power", "dt_fraction"},
    "rng": {"seed"},
    "initial": {"X0", "Y0"},
}
COEFFICIENTS = ("b1", "b2", "sigma1", "sigma2")


@dataclass
class RunConfig:
    model: Model
    seed: int = 0
    X0: np.ndarray | None = None
    Y0: np.ndarray | None = None
    hypotheses: HypothesisParams = field(default_factory=HypothesisParams)
    schedule: RegimeSchedule | None = None
    sections: dict = field(default_factory=dict)  # study settings ([run], [laplace], ...)
    source: str = ""

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))


def _length(v) -> float:
    if isinstance(v, str):
        s = v.replace(" ", "").lower()
        if s.endswith("pi"):
            head = s[:-2].rstrip("*")
            return (float(head) if head else 1.0) * math.pi
        raise ConfigError(f"domain length {v!r}: use a number or a multiple of 'pi'")
    return float(v)


def _check_keys(name: str, table: dict) -> None:
    extra = set(table) - MODEL_KEYS[name]
    if extra:
        raise ConfigError(f"[{name}]: unknown keys {sorted(extra)}")


def _vector(v, n: int, what: str) -> np.ndarray:
    if np.isscalar(v):
        return np.full(n, float(v))
    a = np.asarray(v, dtype=float)
    if a.ndim != 1 or a.size > n:
        raise ConfigError(f"{what}: expected a number or at most {n} values")
    out = np.zeros(n)
    out[: a.size] = a
    return out


def _system(dom: dict, eig: dict, which: str) -> EigenSystem:
    n = eig.get(f"{which}_modes")
    if n is None:
        raise ConfigError(f"[eigensystem] needs {which}_modes")
    base = build_eigensystem(dom.get("boundary", "dirichlet"), _length(dom.get("length", math.pi)),
                             int(n), dom.get("mass_shift"))
    alphas = eig.get(f"{which}_alphas")
    sups = eig.get(f"{which}_sup_norms")
    if alphas is None and sups is None:
        return base
    return EigenSystem(base.boundary_kind, base.domain_length, base.mode_count,
                       np.asarray(alphas if alphas is not None else base.alphas, dtype=float),
                       np.asarray(sups if sups is not None else base.sup_norms, dtype=float),
                       base.mass_shift, analytic=False)


def _coefficient(name: str, table: dict) -> CoefficientFunction:
    table = dict(table)
    kind = table.pop("kind", None)
    if kind is None:
        raise ConfigError(f"[coefficients.{name}] needs a kind")
    return CoefficientFunction.make(kind, **table)


def _schedule(reg: dict) -> RegimeSchedule:
    if "entries" in reg:
        return RegimeSchedule(tuple(RegimeEntry(float(e["epsilon"]), float(e["delta"]),
                                                float(e["Delta"]), float(e["dt"]))
                                    for e in reg["entries"]))
    if "epsilons" not in reg:
        raise ConfigError("[regime] needs either entries or epsilons")
    ds, dp = float(reg.get("delta_scale", 1.0)), float(reg.get("delta_power", 1.0))
    Ds, Dp = float(reg.get("Delta_scale", 1.0)), float(reg.get("Delta_power", 0.5))
    return RegimeSchedule.from_rule(
        [float(e) for e in reg["epsilons"]],
        lambda e: ds * e**dp,
        lambda d, e: Ds * e**Dp,
        float(reg.get("dt_fraction", 1.0)))


def parse_config(data: dict[str, Any], source: str = "") -> RunConfig:
    for name in MODEL_KEYS:
        if name in data:
            _check_keys(name, data[name])
    dom = data.get("domain", {})
    eig = data.get("eigensystem")
    if eig is None:
        raise ConfigError("missing [eigensystem] section")
    sys1 = _system(dom, eig, "slow")
    sys2 = _system(dom, eig, "fast")
    c1, c2 = data.get("covariance1", {}), data.get("covariance2", {})
    coupling = c1.get("coupling", c2.get("coupling", "independent"))
    if c2.get("coupling", coupling) != coupling:
        raise ConfigError("covariance1 and covariance2 must declare the same coupling")
    cov1 = CovarianceSpec(_vector(c1.get("lambdas", 1.0), sys1.mode_count, "covariance1.lambdas"),
                          coupling)
    cov2 = CovarianceSpec(_vector(c2.get("lambdas", 1.0), sys2.mode_count, "covariance2.lambdas"),
                          coupling)
    coeffs_tab = data.get("coefficients", {})
    missing = [n for n in COEFFICIENTS if n not in coeffs_tab]
    if missing:
        raise ConfigError(f"[coefficients] missing {missing}")
    extra = set(coeffs_tab) - set(COEFFICIENTS)
    if extra:
        raise ConfigError(f"[coefficients] unknown entries {sorted(extra)}")
    coeffs = CoefficientSet(*(_coefficient(n, coeffs_tab[n]) for n in COEFFICIENTS))
    model = Model(sys1, sys2, cov1, cov2, coeffs)
    init = data.get("initial", {})
    X0 = _vector(init["X0"], sys1.mode_count, "initial.X0") if "X0" in init else None
    Y0 = _vector(init["Y0"], sys2.mode_count, "initial.Y0") if "Y0" in init else None
    hp = HypothesisParams(**{k: float(v) for k, v in data.get("hypotheses", {}).items()})
    schedule = _schedule(data["regime"]) if "regime" in data else None
    seed = int(data.get("rng", {}).get("seed", 0))
    if not 0 <= seed < 2**64:
        raise ConfigError("rng.seed must be a 64-bit unsigned integer")
    sections = {k: v for k, v in data.items()
                if k not in MODEL_KEYS and k != "coefficients" and isinstance(v, dict)}
    return RunConfig(model, seed, X0, Y0, hp, schedule, sections, source)


def load_config(path: str | Path) -> RunConfig:
    """Read a TOML file; ``preset:<name>`` loads a bundled preset."""
    p = str(path)
    if p.startswith("preset:"):
        name = p.split(":", 1)[1]
        try:
            text = resources.files("slowfast_srde.presets").joinpath(f"{name}.toml").read_text()
        except FileNotFoundError:
            raise ConfigError(f"no bundled preset {name!r}; available: {preset_names()}") from None
        return parse_config(tomllib.loads(text), p)
    fp = Path(p)
    if not fp.is_file():
        raise ConfigError(f"config file {p} not found")
    try:
        data = tomllib.loads(fp.read_text())
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{p}: {e}") from None
    return parse_config(data, p)


def preset_names() -> list[str]:
    root = resources.files("slowfast_srde.presets")
    return sorted(f.name[:-5] for f in root.iterdir() if f.name.endswith(".toml"))
