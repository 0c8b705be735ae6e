import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List

import pandas as pd

from util.logger import get_logger

logger = get_logger(__name__)

TABLE_FILES = {
    "metrics": "metrics.csv",
    "importance": "importance.csv",
    "similarity": "similarity.csv",
    "tests": "tests.csv",
    "group_summaries": "group_summaries.csv",
    "curves": "curves.csv",
}
INDEXED_TABLES = ("importance", "similarity")


def _clean(value):
    """JSON-safe copy: NaN and infinities become null, numpy scalars become Python ones."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _frame_to_records(frame: pd.DataFrame, indexed: bool) -> Dict[str, Any]:
    if indexed:
        return {"index": [str(i) for i in frame.index], "columns": [str(c) for c in frame.columns],
                "data": _clean(frame.to_numpy().tolist())}
    return {"columns": [str(c) for c in frame.columns], "rows": _clean(frame.to_numpy().tolist())}


def _frame_from_records(payload: Dict[str, Any], indexed: bool) -> pd.DataFrame:
    if indexed:
        frame = pd.DataFrame(payload["data"], index=payload["index"], columns=payload["columns"], dtype=float)
        frame.index.name = "model"
        return frame
    return pd.DataFrame(payload["rows"], columns=payload["columns"])


@dataclass
class ComparisonReport:
    """
        Everything one benchmark run produces: the metric table, absolute
        importances, their similarity matrix, the testing battery, subgroup
        summaries and curves, and the gammas that were used.
    """
    metrics: pd.DataFrame
    importance: pd.DataFrame
    similarity: pd.DataFrame
    tests: pd.DataFrame
    group_summaries: pd.DataFrame
    curves: pd.DataFrame
    top_importances: List[Dict[str, Any]] = field(default_factory=list)
    significant_tests: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    chosen_gammas: Dict[str, float] = field(default_factory=dict)
    cross_validation: Dict[str, Any] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)

    def metric(self, model: str, metric: str) -> float:
        rows = self.metrics[(self.metrics["model"] == model) & (self.metrics["metric"] == metric)]
        return float(rows["score"].iloc[0]) if len(rows) else float("nan")

    def to_dict(self) -> Dict[str, Any]:
        document = {name: _frame_to_records(getattr(self, name), name in INDEXED_TABLES) for name in TABLE_FILES}
        document.update({
            "top_importances": _clean(self.top_importances),
            "significant_tests": _clean(self.significant_tests),
            "chosen_gammas": _clean(self.chosen_gammas),
            "cross_validation": _clean(self.cross_validation),
            "summary": _clean(self.summary),
        })
        return document

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "ComparisonReport":
        tables = {name: _frame_from_records(document[name], name in INDEXED_TABLES) for name in TABLE_FILES}
        return cls(
            **tables,
            top_importances=document.get("top_importances", []),
            significant_tests=document.get("significant_tests", {}),
            chosen_gammas=document.get("chosen_gammas", {}),
            cross_validation=document.get("cross_validation", {}),
            summary=document.get("summary", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)

    def write_tables(self, directory: str) -> List[str]:
        os.makedirs(directory, exist_ok=True)
        written = []
        for name, filename in TABLE_FILES.items():
            path = os.path.join(directory, filename)
            frame = getattr(self, name)
            frame.to_csv(path, index=name in INDEXED_TABLES, float_format="%.10g", lineterminator="\n")
            written.append(path)
        logger.debug(f"Wrote {len(written)} tables to {directory}")
        return written

    def write(self, directory: str) -> List[str]:
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, "report.json")
        with open(path, "w", newline="\n") as handle:
            handle.write(self.to_json())
            handle.write("\n")
        return [path] + self.write_tables(directory)
