from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import pandas as pd

from intercept_resend import IRPoint
from keyrate import KeyRatePoint

logger = logging.getLogger(__name__)

IR_COLUMNS = ["protocol", "p", "Q", "I_AB_bits", "I_AE_bits", "delta_bits"]
KEYRATE_COLUMNS = ["protocol", "Q", "preprocessing_enabled", "q_star", "rate_bits", "rate_normalized"]

PathLike = Union[str, Path]


# exactly the featured columns, in order
def reorder_columns(data: pd.DataFrame, featured_columns: Sequence[str]) -> pd.DataFrame:
    missing = [c for c in featured_columns if c not in data.columns]
    if missing:
        raise KeyError(f"missing columns: {', '.join(missing)}")
    return data[list(featured_columns)]


def ir_frame(points: Iterable[IRPoint]) -> pd.DataFrame:
    rows = [
        {
            "protocol": pt.protocol,
            "p": pt.p,
            "Q": pt.error_rate,
            "I_AB_bits": pt.i_ab,
            "I_AE_bits": pt.i_ae,
            "delta_bits": pt.delta,
        }
        for pt in points
    ]
    df = pd.DataFrame(rows, columns=IR_COLUMNS)
    return reorder_columns(df.sort_values("p", kind="stable"), IR_COLUMNS)


def keyrate_frame(points: Iterable[KeyRatePoint]) -> pd.DataFrame:
    rows = [
        {
            "protocol": pt.protocol,
            "Q": pt.error_rate,
            "preprocessing_enabled": pt.preprocessing,
            "q_star": pt.q,
            "rate_bits": pt.rate,
            "rate_normalized": pt.rate_normalized,
        }
        for pt in points
    ]
    return reorder_columns(pd.DataFrame(rows, columns=KEYRATE_COLUMNS), KEYRATE_COLUMNS)


def csv_text(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format="%.12g", lineterminator="\n")


def write_text(text: str, out: Optional[PathLike]) -> str:
    """Write to `out` when given; the text is returned either way."""
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        logger.info("wrote %s", path)
    return text


def frame_json(df: pd.DataFrame) -> list:
    return json.loads(df.to_json(orient="records", double_precision=15))
