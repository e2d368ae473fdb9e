from functools import lru_cache
from pathlib import Path

import pandas as pd
import pandera as pa
from pandera.typing import Series

from ar_persistence.errors import PreconditionError


BASE_SCHEMA_NAME = "BaseSchema"
DEFAULT_PANDAS_TYPE = "object"
PANDAS_TYPES = ("int64", "Int64", "float64", "bool", "boolean", "str", "string")
METHODS = ["naive", "splitting", "oracle", "exact"]


def _map_pandera_to_pandas_type(pandera_datatype) -> str:
    """
    Map Pandera column types to pandas data types.

    Args:
        pandera_datatype: The Pandera data type to map.

    Returns:
        str: The corresponding pandas data type as a string.
    """
    name = str(pandera_datatype)
    if name in PANDAS_TYPES:
        return name

    mapping = {
        pa.dtypes.String: "str",
        pa.dtypes.Int: "int64",
        pa.dtypes.Float: "float64",
        pa.dtypes.Bool: "bool",
    }

    # Find the base type from the type hierarchy
    for base_type, pandas_type in mapping.items():
        if isinstance(pandera_datatype, base_type):
            return pandas_type

    return DEFAULT_PANDAS_TYPE  # fallback


# -----------------------------------------------------------------------
# -----------------     Pandera DataFrame Models      -------------------
# -----------------------------------------------------------------------
class BasePanderaModel(pa.DataFrameModel):
    """Base class for Pandera DataFrame Models with common functionality."""

    @classmethod
    @lru_cache(maxsize=None)
    def _return_pandas_dtypes(cls):
        """Returns a dictionary mapping Pandera types to Pandas dtypes."""
        dtypes = {
            col: _map_pandera_to_pandas_type(value.dtype)
            for col, value in cls.to_schema().columns.items()
        }
        if None in dtypes.values():
            raise ValueError("Unsupported Pandera data type found.")
        return dtypes

    class Config:
        strict = True
        coerce = False  # Frames are built with the exact dtypes; mismatches are bugs.


class PathModel(BasePanderaModel):
    """Simulated path X_0..X_(N-1); saturated values are +/-inf."""

    __slots__ = ()

    n: Series[int] = pa.Field(ge=0, nullable=False)
    value: Series[float] = pa.Field(nullable=False)


class ImpulseModel(BasePanderaModel):
    """Impulse response h_0..h_N."""

    __slots__ = ()

    n: Series[int] = pa.Field(ge=0, nullable=False)
    value: Series[float] = pa.Field(nullable=False)


class EstimateModel(BasePanderaModel):
    """Persistence estimates, one row per horizon."""

    __slots__ = ()

    N: Series[int] = pa.Field(ge=1, nullable=False)
    p_hat: Series[float] = pa.Field(ge=0.0, le=1.0, nullable=False)
    log_p_hat: Series[float] = pa.Field(le=0.0, nullable=False)
    stderr_log: Series[float] = pa.Field(ge=0.0, nullable=False)
    method: Series[str] = pa.Field(isin=METHODS, nullable=False)
    seed: Series[pd.Int64Dtype] = pa.Field(nullable=True)
    flag: Series[str] = pa.Field(nullable=True)


class MaskModel(BasePanderaModel):
    """Inclusion mask of a spherical domain."""

    __slots__ = ()

    polar_index: Series[int] = pa.Field(ge=0, nullable=False)
    azimuth_index: Series[int] = pa.Field(ge=0, nullable=False)
    inside: Series[bool] = pa.Field(nullable=False)


class SweepModel(BasePanderaModel):
    """Exponents at a rational angle and its perturbations."""

    __slots__ = ()

    theta: Series[float] = pa.Field(gt=0.0, nullable=False)
    offset: Series[float] = pa.Field(nullable=False)
    rational: Series[bool] = pa.Field(nullable=False)
    beta: Series[float] = pa.Field(gt=0.0, nullable=False)
    persistence_exponent: Series[float] = pa.Field(nullable=False)
    gap: Series[float] = pa.Field(nullable=False)


# -----------------------------------------------------------------------
# -----------------------        CSV access        ----------------------
# -----------------------------------------------------------------------
def header_comment(config_hash: str, seed, command: str) -> str:
    return f"# config_hash={config_hash} seed={seed} command={command}\n"


def render_table(frame: pd.DataFrame, schema_model: type[BasePanderaModel], header: str) -> str:
    """Validate `frame` and render it as CSV text preceded by the header comment."""
    schema_model.validate(frame)
    return header + frame.to_csv(index=False, lineterminator="\n")


def write_table(
    frame: pd.DataFrame,
    schema_model: type[BasePanderaModel],
    path: str | Path,
    header: str,
    truncated: bool = False,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = render_table(frame, schema_model, header)
    if truncated:
        text += "# truncated\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fd:
        fd.write(text)
    return path


def read_table(path: str | Path, schema_model: type[BasePanderaModel]) -> pd.DataFrame:
    """Load a CSV written by write_table; comment lines are skipped."""
    try:
        frame = pd.read_csv(path, comment="#", dtype=schema_model._return_pandas_dtypes())
    except FileNotFoundError:
        raise PreconditionError(f"File not found: {path}")
    except (ValueError, pd.errors.ParserError) as e:
        raise PreconditionError(f"Cannot read {path}: {e}")

    try:
        schema_model.validate(frame)
    except (pa.errors.SchemaError, pa.errors.SchemaErrors) as e:
        raise PreconditionError(f"{path} does not match {schema_model.__name__}: {e}")
    return frame
