"""Run configuration: one INI-style document with typed sections.

Sections: [market], [utility], [grid], [primal], [sim], and optionally
[random_horizon] / [illiquid] for the application pipelines.  Numbers are
in model units (time in years by convention).  Curves accept either a
constant ("0.3") or piecewise-linear knots ("0:0.3, 0.5:0.35, 1:0.4").
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .applications import ExponentialArrival, IlliquidParams
from .dual_solver import LogGrid
from .errors import ConfigParseError
from .model import (
    MarketModel,
    UtilityModel,
    get_registered_utility,
    piecewise_linear_curve,
    power_power_utility,
)
from .simulate import SimConfig

__all__ = ["RunConfig", "load_config"]


def _parse_curve(text: str):
    text = text.strip()
    if ":" not in text:
        return float(text)
    knots = [part.split(":") for part in text.split(",")]
    ts = [float(a) for a, _ in knots]
    vs = [float(b) for _, b in knots]
    return piecewise_linear_curve(ts, vs)


def _parse_pairs(text: str):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        a, b = part.split(":")
        out.append((float(a), float(b)))
    return out


@dataclass(frozen=True, eq=False)
class RunConfig:
    path: str
    text: str
    parser: configparser.ConfigParser

    @property
    def config_hash(self) -> str:
        # hash the canonicalized key/value content, not raw bytes
        items = []
        for section in sorted(self.parser.sections()):
            for key in sorted(self.parser[section]):
                items.append(f"{section}.{key}={self.parser[section][key].strip()}")
        return hashlib.sha256("\n".join(items).encode()).hexdigest()

    def _sec(self, name: str, required: bool = True):
        if not self.parser.has_section(name):
            if required:
                raise ConfigParseError(f"missing [{name}] section in {self.path}")
            return None
        return self.parser[name]

    def has(self, name: str) -> bool:
        return self.parser.has_section(name)

    def market(self) -> MarketModel:
        s = self._sec("market")
        try:
            return MarketModel(
                b=_parse_curve(s.get("b")),
                sigma=_parse_curve(s.get("sigma")),
                T=float(s.get("t", s.get("T", "1.0"))),
                holder_exponent=float(s.get("holder_exponent", "1.0")),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigParseError(f"bad [market] section: {exc}") from exc

    def utility(self) -> UtilityModel:
        s = self._sec("utility")
        family = s.get("family", "power_power").strip()
        try:
            p = float(s.get("p"))
        except (TypeError, ValueError) as exc:
            raise ConfigParseError("utility.p missing or not a number") from exc
        if family == "power_power":
            try:
                return power_power_utility(
                    p,
                    a_c=_parse_curve(s.get("a_c", "1.0")),
                    a_x=_parse_curve(s.get("a_x", "0.0")),
                    a_T=float(s.get("a_t", s.get("a_T", "0.0"))),
                )
            except (TypeError, ValueError) as exc:
                raise ConfigParseError(f"bad power_power parameters: {exc}") from exc
        if family == "custom":
            name = s.get("name")
            if not name:
                raise ConfigParseError("custom utility needs utility.name")
            factory = get_registered_utility(name)
            kwargs = {k: v for k, v in s.items() if k not in ("family", "name")}
            return factory(**kwargs)
        raise ConfigParseError(f"unknown utility family {family!r}")

    def grid(self, T: float) -> LogGrid:
        s = self._sec("grid", required=False)
        if s is None:
            return LogGrid(T=T)
        try:
            return LogGrid(
                y_min=float(s.get("y_min", "1e-3")),
                y_max=float(s.get("y_max", "1e3")),
                n_y=int(s.get("n_y", "200")),
                n_t=int(s.get("n_t", "400")),
                T=T,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigParseError(f"bad [grid] section: {exc}") from exc

    def n_x(self) -> int:
        s = self._sec("primal", required=False)
        return int(s.get("n_x", "400")) if s is not None else 400

    def sim(self, seed_override=None, threads=None, dump_paths=False) -> SimConfig:
        s = self._sec("sim", required=False)
        if s is None:
            s = {}
        try:
            return SimConfig(
                n_paths=int(s.get("n_paths", "10000")),
                dt_sim=float(s.get("dt_sim", "1e-3")),
                seed=int(seed_override if seed_override is not None else s.get("seed", "0")),
                antithetic=str(s.get("antithetic", "false")).lower() in ("1", "true", "yes"),
                n_workers=int(threads if threads is not None else s.get("n_workers", "1")),
                dump_paths=dump_paths,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigParseError(f"bad [sim] section: {exc}") from exc

    def sim_point(self) -> tuple[float, float]:
        s = self._sec("sim", required=False)
        if s is None:
            return 0.0, 1.0
        return float(s.get("t0", "0.0")), float(s.get("x0", "1.0"))

    def perturbations(self):
        s = self._sec("sim", required=False)
        if s is None or not s.get("perturbations"):
            return []
        return _parse_pairs(s.get("perturbations"))

    def random_horizon(self) -> dict:
        s = self._sec("random_horizon")
        dist = s.get("distribution", "exponential").strip()
        if dist != "exponential":
            raise ConfigParseError(f"unsupported horizon distribution {dist!r}")
        return {
            "rate": float(s.get("rate", "0.5")),
            "g1_coef": float(s.get("g1_coef", "1.0")),
            "g2_coef": float(s.get("g2_coef", "1.0")),
        }

    def illiquid(self) -> dict:
        s = self._sec("illiquid")
        try:
            params = IlliquidParams(
                b_L=float(s.get("b_l")),
                sigma_L=float(s.get("sigma_l")),
                b_I=float(s.get("b_i")),
                sigma_I=float(s.get("sigma_i")),
                rho=float(s.get("rho", "0.0")),
                p=float(s.get("p", self._sec("utility", required=False).get("p", "0.5")
                               if self.has("utility") else "0.5")),
                beta=float(s.get("beta")),
                arrival=ExponentialArrival(rate=float(s.get("arrival_rate", "1.0"))),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigParseError(f"bad [illiquid] section: {exc}") from exc
        extra = {
            "max_iter": int(s.get("max_iter", "40")),
            "tol": float(s.get("tol", "1e-4")),
            "n_y": int(s.get("n_y", "160")),
            "n_t_per_unit": int(s.get("n_t_per_unit", "400")),
            "quad_order": int(s.get("quad_order", "48")),
        }
        if s.get("force_alpha0"):
            extra["force_alpha0"] = float(s.get("force_alpha0"))
        if s.get("t_trunc"):
            extra["t_trunc"] = float(s.get("t_trunc"))
        return {"params": params, "options": extra}


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigParseError(f"config file not found: {path}")
    text = path.read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigParseError(f"cannot parse {path}: {exc}") from exc
    return RunConfig(path=str(path), text=text, parser=parser)
