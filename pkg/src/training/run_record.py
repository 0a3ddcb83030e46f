"""
Журнал прогона обучения: строки эпох (JSON Lines) и сводка run.json.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from typing_extensions import Literal

RunStatus = Literal["running", "completed", "early_stopped", "diverged"]
EPOCHS_FILE = "epochs.jsonl"
RUN_FILE = "run.json"


def _finite_or_str(value: float) -> Any:
    return value if math.isfinite(value) else str(value)


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    lr: float
    losses: Dict[str, float]
    val_l1: float
    val_psnr: float
    improved: bool = False
    checkpoint: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["losses"] = {k: _finite_or_str(v) for k, v in self.losses.items()}
        data["val_l1"] = _finite_or_str(self.val_l1)
        data["val_psnr"] = _finite_or_str(self.val_psnr)
        return data


@dataclass
class TrainRunRecord:
    phase: str
    method: str
    seed: int
    epochs: List[EpochRecord] = field(default_factory=list)
    status: RunStatus = "running"
    initial_val_l1: Optional[float] = None
    initial_val_psnr: Optional[float] = None
    best_epoch: Optional[int] = None
    best_val_psnr: Optional[float] = None
    checkpoints: List[str] = field(default_factory=list)
    error: Optional[str] = None
    config_hash: Optional[str] = None

    def add_epoch(self, entry: EpochRecord) -> None:
        expected = len(self.epochs)
        if entry.epoch != expected:
            raise ValueError(f"Ожидалась эпоха {expected}, получена {entry.epoch}")
        self.epochs.append(entry)

    def summary(self) -> Dict[str, Any]:
        data = {k: v for k, v in asdict(self).items() if k != "epochs"}
        data["n_epochs"] = len(self.epochs)
        for key in ("initial_val_l1", "initial_val_psnr", "best_val_psnr"):
            if data[key] is not None:
                data[key] = _finite_or_str(data[key])
        return data

    def write(self, out_dir: str) -> None:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        with open(path / EPOCHS_FILE, "w", encoding="utf-8") as f:
            for entry in self.epochs:
                f.write(json.dumps(entry.to_dict(), sort_keys=True, allow_nan=False) + "\n")
        with open(path / RUN_FILE, "w", encoding="utf-8") as f:
            json.dump(self.summary(), f, indent=2, sort_keys=True, allow_nan=False)


def read_epochs(out_dir: str) -> List[Dict[str, Any]]:
    with open(Path(out_dir) / EPOCHS_FILE, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
