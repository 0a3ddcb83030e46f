"""
Набор пар фрагментов для torch: чтение по манифесту или из памяти.
"""

from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import torch
from torch.utils.data import Dataset

from src.dataset.dataset_forge import DatasetManifest
from src.errors import DatasetError
from src.raster.raster_core import Raster
from src.raster.raster_io import read_srras


class PatchPairDataset(Dataset):
    """Пары (LR, HR) как тензоры float32 формы (3, h, w) и (3, 2h, 2w)."""

    def __init__(self, pairs: Sequence[Tuple[Raster, Raster]], item_ids: Optional[Sequence[str]] = None):
        self.lr_rasters: List[Raster] = [lr for lr, _ in pairs]
        self.hr_rasters: List[Raster] = [hr for _, hr in pairs]
        self.item_ids = list(item_ids) if item_ids is not None else [f"item{i:05d}" for i in range(len(pairs))]
        if len(self.item_ids) != len(self.lr_rasters):
            raise DatasetError("Число идентификаторов не совпадает с числом пар")
        self._lr = [torch.from_numpy(r.data.astype("float32")) for r in self.lr_rasters]
        self._hr = [torch.from_numpy(r.data.astype("float32")) for r in self.hr_rasters]

    @classmethod
    def from_manifest(cls, path: str) -> "PatchPairDataset":
        """Загружает фрагменты манифеста, проверяя контрольные суммы."""
        manifest = DatasetManifest.load(path)
        base = Path(path).parent
        pairs = []
        for item in manifest.items:
            lr, _, lr_sum = read_srras(str(base / item.lr_path))
            hr, _, hr_sum = read_srras(str(base / item.hr_path))
            for expected, actual, what in ((item.lr_checksum, lr_sum, "LR"), (item.hr_checksum, hr_sum, "HR")):
                if expected is not None and expected != actual:
                    raise DatasetError(f"{item.pair_id}: контрольная сумма {what} не совпадает с манифестом")
            pairs.append((lr, hr))
        return cls(pairs, manifest.pair_ids)

    def __len__(self) -> int:
        return len(self._lr)

    def __getitem__(self, index: int) -> Tuple[torch.Tensor, torch.Tensor]:
        return self._lr[index], self._hr[index]
