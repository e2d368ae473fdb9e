"""
Experiment configuration: YAML defaults, command-line overrides and the
parsers for polynomial, angle, offset and horizon arguments.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Any

import yaml

from ar_persistence.errors import PreconditionError
from ar_persistence.polyalg import GeneratingPolynomial, ZeroSet, find_roots, from_zero_set

logger = logging.getLogger("ar_persistence")

# ----------------------    CONSTANTS    ----------------------
DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config" / "experiment.yaml"
HASH_EXCLUDED = ("threads", "out")
SECTIONS = ("polyalg", "regime", "persist", "cone")

ANGLE_PATTERN = re.compile(r"^\s*(?:(\d+)\s*\*\s*)?pi\s*(?:/\s*(\d+))?\s*$")
OFFSET_PATTERN = re.compile(r"^\s*([+-]?[0-9.]+(?:[eE][+-]?\d+)?)\s*(\*\s*sqrt\(?2\)?)?\s*$")


def default_threads() -> int:
    return min(32, (os.cpu_count() or 1) + 4)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Settings of one command run.

    At most one of `coeffs` and `zeros` is set; commands that need a
    polynomial call `polynomial()`, which requires exactly one.
    """

    coeffs: tuple[float, ...] | None = None
    zeros: tuple[tuple[float, float, int], ...] | None = None
    seed: int = 0
    threads: int | None = None
    out: str | None = None
    cluster_tol: float | None = None
    modulus_tol: float | None = None
    critical_band: float | None = None
    method: str = "splitting"
    n_grid: tuple[int, ...] = (64, 128, 256, 512, 1024)
    samples: int = 100_000
    particles: int = 2000
    replicates: int = 8
    chunk_size: int = 4096
    fit_window: int = 4
    model: str | None = None
    resolution: tuple[int, int] = (128, 256)
    boundary: str = "fraction"
    denominator_cap: int = 720
    rational_tol: float = 1e-8
    eigen_tol: float = 1e-8
    eigen_max_iter: int = 10_000
    bm_dt: float = 1e-3
    bm_paths: int = 4000
    bm_horizon: float = 16.0
    theta: str | None = None
    offsets: tuple[float, ...] = field(default=())
    N: int | None = None
    command: str | None = None

    def __post_init__(self):
        if self.coeffs is not None and self.zeros is not None:
            raise PreconditionError("Supply either coefficients or zeros, not both.")
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise PreconditionError(f"n_grid must hold positive horizons, got {self.n_grid}.")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise PreconditionError(f"n_grid must be strictly increasing, got {self.n_grid}.")
        if self.threads is not None and self.threads < 1:
            raise PreconditionError(f"threads must be >= 1, got {self.threads}.")
        for name in ("samples", "particles", "replicates", "chunk_size", "bm_paths"):
            if getattr(self, name) < 1:
                raise PreconditionError(f"{name} must be positive.")

    @property
    def worker_threads(self) -> int:
        return self.threads if self.threads is not None else default_threads()

    def polynomial(self) -> tuple[GeneratingPolynomial, ZeroSet]:
        """The generating polynomial and its zero set (exact when zeros were given)."""
        if (self.coeffs is None) == (self.zeros is None):
            raise PreconditionError("Exactly one of --coeffs and --zeros is required.")
        if self.coeffs is not None:
            poly = GeneratingPolynomial(self.coeffs)
            return poly, find_roots(poly, self.cluster_tol)
        zero_set = ZeroSet(tuple((complex(re_, im), mult) for re_, im, mult in self.zeros), exact=True)
        return from_zero_set(zero_set), zero_set

    def config_hash(self) -> str:
        """First 16 hex digits of the SHA-256 of the canonical JSON dump."""
        payload = {k: v for k, v in asdict(self).items() if k not in HASH_EXCLUDED}
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_sources(
        cls, path: str | Path | None = None, overrides: dict[str, Any] | None = None
    ) -> "ExperimentConfig":
        """Defaults from the YAML file, then non-None overrides."""
        values = load_defaults(path)
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise PreconditionError(f"Unknown configuration keys: {sorted(unknown)}")
        for key in ("n_grid", "resolution", "offsets", "coeffs"):
            if values.get(key) is not None:
                values[key] = tuple(values[key])
        if values.get("zeros") is not None:
            values["zeros"] = tuple(tuple(z) for z in values["zeros"])
        return cls(**values)


def load_defaults(path: str | Path | None = None) -> dict[str, Any]:
    """Flatten the YAML sections into one mapping of configuration keys."""
    path = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    try:
        with open(path, encoding="utf-8") as fd:
            raw = yaml.safe_load(fd) or {}
    except FileNotFoundError:
        raise PreconditionError(f"Configuration file not found: {path}")
    except yaml.YAMLError as e:
        raise PreconditionError(f"Configuration file {path} is not valid YAML: {e}")

    flat = {key: value for key, value in raw.items() if key not in SECTIONS}
    for section in SECTIONS:
        flat.update(raw.get(section) or {})
    logger.debug(f"Loaded configuration defaults from {path}")
    return flat


# -----------------------------------------------------------------------
# -----------------------        Parsers           ----------------------
# -----------------------------------------------------------------------
def parse_coeffs(text: str) -> tuple[float, ...]:
    """`a1,...,aL` as floats."""
    values = []
    for position, item in enumerate(text.split(","), start=1):
        try:
            values.append(float(item))
        except ValueError:
            raise PreconditionError(f"--coeffs: cannot parse '{item.strip()}' at position {position}.")
    return tuple(values)


def _parse_complex(text: str) -> complex:
    normalized = text.strip().replace(" ", "").replace("i", "j")
    normalized = re.sub(r"(^|[+-])j", r"\g<1>1j", normalized)
    return complex(normalized)


def parse_zeros(text: str) -> tuple[tuple[float, float, int], ...]:
    """
    `re+imi:mult` entries separated by commas; the multiplicity defaults to 1
    and missing conjugates are added.
    """
    pairs = []
    for position, item in enumerate(text.split(","), start=1):
        value, _, mult = item.partition(":")
        try:
            root = _parse_complex(value)
            multiplicity = int(mult) if mult else 1
        except ValueError:
            raise PreconditionError(f"--zeros: cannot parse '{item.strip()}' at position {position}.")
        pairs.append((root, multiplicity))
    zero_set = ZeroSet.from_pairs(pairs)
    return tuple((root.real, root.imag, mult) for root, mult in zero_set.entries)


def parse_angle(text: str) -> tuple[float, Fraction | None]:
    """
    Angle in radians; `pi/q` and `p*pi/q` forms also return theta / 2 pi as
    an exact fraction.
    """
    match = ANGLE_PATTERN.match(text)
    if match:
        p = int(match.group(1) or 1)
        q = int(match.group(2) or 1)
        if q == 0:
            raise PreconditionError(f"--theta: zero denominator in '{text}'.")
        return p * math.pi / q, Fraction(p, 2 * q)
    try:
        return float(text), None
    except ValueError:
        raise PreconditionError(f"--theta: cannot parse '{text}'; use radians, pi/q or p*pi/q.")


def parse_offsets(text: str) -> tuple[float, ...]:
    """Comma-separated offsets, each optionally multiplied by `sqrt2`."""
    offsets = []
    for position, item in enumerate(text.split(","), start=1):
        match = OFFSET_PATTERN.match(item)
        if not match:
            raise PreconditionError(f"--offsets: cannot parse '{item.strip()}' at position {position}.")
        value = float(match.group(1))
        offsets.append(value * math.sqrt(2.0) if match.group(2) else value)
    return tuple(offsets)


def parse_n_grid(text: str) -> tuple[int, ...]:
    """
    Horizons as `n1,n2,...`, `start:stop:step` (arithmetic) or
    `start:stop:xk` (geometric, factor k), stop included.
    """
    try:
        if ":" not in text:
            grid = [int(item) for item in text.split(",")]
        else:
            start, stop, step = text.split(":")
            start, stop = int(start), int(stop)
            grid = []
            if step.startswith("x"):
                factor = int(step[1:])
                if factor < 2:
                    raise ValueError("geometric factor must be >= 2")
                value = start
                while value <= stop:
                    grid.append(value)
                    value *= factor
            else:
                grid = list(range(start, stop + 1, int(step)))
    except ValueError as e:
        raise PreconditionError(f"--N-grid: cannot parse '{text}': {e}")
    if not grid or any(n < 1 for n in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise PreconditionError(f"--N-grid must be strictly increasing positive integers, got {grid}.")
    return tuple(grid)


def parse_resolution(text: str) -> tuple[int, int]:
    """`n_polar x n_azimuth`, e.g. 128x256."""
    try:
        n_polar, n_azimuth = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise PreconditionError(f"--resolution: expected NxM, got '{text}'.")
    return n_polar, n_azimuth
