from __future__ import annotations

import hashlib
import json
import zlib
from pathlib import Path
from typing import Any, Union

import numpy as np

SeedKey = Union[str, int]


def derive_seed(master: int, *keys: SeedKey) -> int:
    """Turunkan seed 32-bit yang independen dari master seed + kunci substream.

    Kunci string di-hash (crc32) supaya stabil lintas proses; kunci int dipakai
    apa adanya. Hasilnya sama untuk input yang sama, di mesin mana pun.
    """
    entropy = [int(master) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            entropy.append(zlib.crc32(key.encode("utf-8")))
        else:
            entropy.append(int(key) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def make_rng(master: int, *keys: SeedKey) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *keys))


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def artifact_header(config_hash: str, seed: int) -> str:
    # Baris komentar pertama di setiap CSV output
    return f"# config_hash={config_hash} seed={seed}\n"


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path
