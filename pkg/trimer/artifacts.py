import json
import os
import tempfile
from pathlib import Path
from typing import Any

import pandas as pd
import structlog
from pydantic import BaseModel

log = structlog.get_logger(__name__)

FLOAT_FORMAT = "%.15e"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_jsonable(obj: Any) -> Any:
    if isinstance(obj, BaseModel):
        return obj.model_dump(mode="json")
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}  # type: ignore[union-attr]
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]  # type: ignore[union-attr]
    return obj


def render_table(frame: pd.DataFrame, config: dict[str, Any]) -> str:
    header = "# config: " + json.dumps(config, sort_keys=True, separators=(",", ":")) + "\n"
    return header + frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_table(frame: pd.DataFrame, path: Path, config: dict[str, Any]) -> None:
    _atomic_write(path, render_table(frame, config))
    log.info("wrote table", path=str(path), rows=len(frame), columns=len(frame.columns))


def read_table(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def render_json(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(obj: Any, path: Path) -> None:
    _atomic_write(path, render_json(obj))
    log.info("wrote report", path=str(path))
