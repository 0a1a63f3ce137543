"""Plain-text run configurations: INI sections, validated and resolvable.

The format is versioned through ``[run] schema_version``.  Parsing reports
the file line of the offending key where possible; the fully-resolved
configuration (all defaults applied) serializes back to canonical INI so a
report can reproduce its run exactly.
"""

from __future__ import annotations

import configparser
import io
import os

import numpy as np

from .errors import ConfigError
from .kernels import (AtomLaw, DegenerateLaw, FoldedLogNormalLaw, KernelQuadrature,
                      RectifiedLogNormalLaw, ShiftedLogNormalLaw)
from .values import CompactSetSpec

__all__ = ["RunConfig", "load_config", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1

_MODELS = ("growth", "lucas", "counterexample", "oracle", "custom")

_DEFAULTS = {
    ("run", "schema_version"): str(SCHEMA_VERSION),
    ("run", "seed"): "0",
    ("run", "threads"): "",
    ("run", "out_dir"): "out",
    ("tolerance", "value_tol"): "1e-8",
    ("tolerance", "max_iterations"): "2000",
    ("quadrature", "nodes"): "256",
    ("quadrature", "seed"): "0",
}


class RunConfig:
    """Parsed configuration with typed, line-anchored accessors."""

    def __init__(self, path: str, parser: configparser.ConfigParser, text: str):
        self.path = path
        self._parser = parser
        self._lines = text.splitlines()

    # -- locating keys for error messages -----------------------------------

    def _line_of(self, section: str, key: str) -> int | None:
        in_section = False
        for i, raw in enumerate(self._lines, start=1):
            line = raw.strip()
            if line.startswith("[") and line.endswith("]"):
                in_section = line[1:-1].strip() == section
            elif in_section and (line.startswith(key + " ") or line.startswith(key + "=")
                                 or line.split("=")[0].strip() == key):
                return i
        return None

    def _fail(self, section: str, key: str, msg: str):
        line = self._line_of(section, key)
        where = f"{self.path}:{line}: " if line else f"{self.path}: "
        raise ConfigError(f"{where}[{section}] {key}: {msg}")

    # -- raw access ----------------------------------------------------------

    def has(self, section: str, key: str) -> bool:
        return self._parser.has_option(section, key)

    def raw(self, section: str, key: str, default: str | None = None) -> str:
        if self._parser.has_option(section, key):
            return self._parser.get(section, key).strip()
        if default is None and (section, key) in _DEFAULTS:
            default = _DEFAULTS[(section, key)]
        if default is None:
            self._fail(section, key, "required key is missing")
        return default

    # -- typed access ---------------------------------------------------------

    def get_str(self, section, key, default=None, choices=None) -> str:
        val = self.raw(section, key, default)
        if choices is not None and val not in choices:
            self._fail(section, key, f"must be one of {sorted(choices)} (got {val!r})")
        return val

    def get_int(self, section, key, default=None, lo=None, hi=None) -> int:
        raw = self.raw(section, key, default)
        try:
            val = int(raw)
        except ValueError:
            self._fail(section, key, f"expected an integer (got {raw!r})")
        if (lo is not None and val < lo) or (hi is not None and val > hi):
            self._fail(section, key, f"out of range [{lo}, {hi}] (got {val})")
        return val

    def get_float(self, section, key, default=None, lo=None, hi=None,
                  lo_open=False, hi_open=False) -> float:
        raw = self.raw(section, key, default)
        try:
            val = float(raw)
        except ValueError:
            self._fail(section, key, f"expected a number (got {raw!r})")
        if lo is not None and (val <= lo if lo_open else val < lo):
            self._fail(section, key, f"must be {'>' if lo_open else '>='} {lo} (got {val})")
        if hi is not None and (val >= hi if hi_open else val > hi):
            self._fail(section, key, f"must be {'<' if hi_open else '<='} {hi} (got {val})")
        return val

    def get_floats(self, section, key, default=None) -> np.ndarray:
        raw = self.raw(section, key, default)
        try:
            return np.array([float(tok) for tok in raw.split()])
        except ValueError:
            self._fail(section, key, f"expected space-separated numbers (got {raw!r})")

    def get_matrix(self, section, key, default=None) -> np.ndarray:
        """Rows separated by ';', entries by whitespace."""
        raw = self.raw(section, key, default)
        try:
            rows = [[float(tok) for tok in row.split()] for row in raw.split(";")]
            return np.asarray(rows, dtype=float)
        except ValueError:
            self._fail(section, key, f"expected ';'-separated numeric rows (got {raw!r})")

    # -- composite blocks -----------------------------------------------------

    @property
    def model(self) -> str:
        return self.get_str("run", "model", choices=_MODELS)

    @property
    def seed(self) -> int:
        return self.get_int("run", "seed")

    @property
    def threads(self) -> int:
        raw = self.raw("run", "threads", "")
        if raw:
            try:
                return max(1, int(raw))
            except ValueError:
                self._fail("run", "threads", f"expected an integer (got {raw!r})")
        env = os.environ.get("STOCHDP_THREADS", "")
        return max(1, int(env)) if env.isdigit() else 1

    def innovation_law(self, section: str = "innovation"):
        kind = self.get_str(section, "kind",
                            choices={"atoms", "degenerate", "rectified_lognormal",
                                     "folded_lognormal", "shifted_lognormal"})
        if kind == "degenerate":
            return DegenerateLaw(tuple(self.get_floats(section, "value")))
        if kind == "atoms":
            values = self.get_matrix(section, "values")
            weights = self.get_floats(section, "weights")
            return AtomLaw(tuple(map(tuple, values)), tuple(weights))
        if kind == "rectified_lognormal":
            return RectifiedLogNormalLaw(self.get_float(section, "scale", lo=0, lo_open=True))
        if kind == "folded_lognormal":
            return FoldedLogNormalLaw(self.get_float(section, "scale", lo=0, lo_open=True))
        return ShiftedLogNormalLaw(self.get_float(section, "sigma_eps", lo=0, lo_open=True),
                                   self.get_float(section, "rho", "0.0", lo=0.0))

    def quadrature(self) -> KernelQuadrature:
        return KernelQuadrature(nodes=self.get_int("quadrature", "nodes", lo=1),
                                seed=self.get_int("quadrature", "seed"))

    def axis_grid(self, prefix: str) -> np.ndarray:
        lo = self.get_float("grid", f"{prefix}_min")
        hi = self.get_float("grid", f"{prefix}_max")
        n = self.get_int("grid", f"{prefix}_points", lo=1)
        spacing = self.get_str("grid", f"{prefix}_spacing", "log",
                               choices={"log", "linear"})
        if hi < lo:
            self._fail("grid", f"{prefix}_max", "must be >= the minimum")
        if n == 1 or hi == lo:
            return np.array([lo])
        if spacing == "log":
            if lo <= 0:
                self._fail("grid", f"{prefix}_min", "log spacing needs a positive minimum")
            return np.geomspace(lo, hi, n)
        return np.linspace(lo, hi, n)

    def monitored_sets(self, dim: int) -> list[CompactSetSpec]:
        if not self._parser.has_section("monitor"):
            return []
        out = []
        for key, raw in self._parser.items("monitor"):
            if key == "zs":
                continue
            toks = raw.split()
            if toks[0] == "hull":
                out.append(("hull", key, None, None))
            elif toks[0] == "box":
                try:
                    lo_hi = " ".join(toks[1:]).split(":")
                    lo = [float(t) for t in lo_hi[0].split()]
                    hi = [float(t) for t in lo_hi[1].split()]
                except (IndexError, ValueError):
                    self._fail("monitor", key, f"expected 'box lo.. : hi..' (got {raw!r})")
                if len(lo) != dim or len(hi) != dim:
                    self._fail("monitor", key, f"box must have {dim} coordinates per corner")
                out.append(("box", key, lo, hi))
            else:
                self._fail("monitor", key, f"unknown set kind {toks[0]!r}")
        return out

    def monitored_zs(self) -> np.ndarray | None:
        if self._parser.has_option("monitor", "zs"):
            return self.get_matrix("monitor", "zs")
        return None

    # -- canonical serialization ----------------------------------------------

    def resolved_text(self, overrides: dict | None = None) -> str:
        """Canonical INI text with defaults applied and overrides folded in."""
        data: dict[str, dict[str, str]] = {}
        for section in self._parser.sections():
            data[section] = dict(self._parser.items(section))
        for (section, key), val in _DEFAULTS.items():
            data.setdefault(section, {})
            data[section].setdefault(key, val)
        if not data.get("run", {}).get("threads"):
            data["run"]["threads"] = str(self.threads)
        for (section, key), val in (overrides or {}).items():
            data.setdefault(section, {})[key] = str(val)
        buf = io.StringIO()
        for section in sorted(data):
            buf.write(f"[{section}]\n")
            for key in sorted(data[section]):
                buf.write(f"{key} = {data[section][key]}\n")
            buf.write("\n")
        return buf.getvalue()


def load_config(path: str) -> RunConfig:
    """Parse and minimally validate a config file; errors carry line numbers."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config file ({exc})") from exc
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",),
                                       interpolation=None)
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = RunConfig(path, parser, text)
    if not parser.has_section("run"):
        raise ConfigError(f"{path}: missing required [run] section")
    version = cfg.get_int("run", "schema_version")
    if version != SCHEMA_VERSION:
        cfg._fail("run", "schema_version", f"unsupported version {version} "
                                           f"(this build reads {SCHEMA_VERSION})")
    cfg.model  # validates the model name
    return cfg
