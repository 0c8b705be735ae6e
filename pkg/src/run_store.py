import hashlib
import json
import os
from dataclasses import asdict, dataclass
from typing import List, Optional

from src.report import ComparisonReport
from util.errors import DataError
from util.logger import get_logger

logger = get_logger(__name__)

METADATA_FILE = "run_metadata.json"


@dataclass
class RunMetadata:
    run_id: str
    stored_files: List[str]
    models: List[str]


def compute_run_id(config_bytes: bytes, *data_bytes: bytes) -> str:
    """Digest of the run config and every input file, so equal inputs share one id."""
    digest = hashlib.md5(config_bytes)
    for chunk in data_bytes:
        digest.update(hashlib.md5(chunk).digest())
    return digest.hexdigest()


class RunStore:
    """
        Saved benchmark runs, one directory per run id under `root`. A run that
        already exists can be reloaded instead of recomputed.
    """
    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)

    def run_dir(self, run_id: str) -> str:
        return os.path.join(self.root, run_id)

    def find_run(self, run_id: str) -> Optional[str]:
        metadata_path = os.path.join(self.run_dir(run_id), METADATA_FILE)
        if os.path.exists(metadata_path):
            logger.info(f"Found stored run {run_id}")
            return self.run_dir(run_id)
        return None

    def store_run(self, run_id: str, report: ComparisonReport, models: List[str]) -> str:
        directory = self.run_dir(run_id)
        written = report.write(directory)
        metadata = RunMetadata(run_id, sorted(os.path.basename(p) for p in written), list(models))
        with open(os.path.join(directory, METADATA_FILE), "w", newline="\n") as handle:
            json.dump(asdict(metadata), handle, indent=2, sort_keys=True)
            handle.write("\n")
        logger.info(f"Stored run {run_id} in {directory}")
        return directory

    @staticmethod
    def retrieve_run(directory: str) -> ComparisonReport:
        """Reloads the report saved in a run directory."""
        metadata_path = os.path.join(directory, METADATA_FILE)
        try:
            with open(metadata_path) as handle:
                metadata = RunMetadata(**json.load(handle))
            with open(os.path.join(directory, "report.json")) as handle:
                report = ComparisonReport.from_dict(json.load(handle))
        except (OSError, json.JSONDecodeError, TypeError, KeyError) as e:
            raise DataError(f"cannot reload the run stored in '{directory}': {e}") from e
        logger.info(f"Retrieved run {metadata.run_id}")
        return report
