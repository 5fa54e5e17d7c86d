from __future__ import annotations

from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
GOLDEN = Path(__file__).resolve().parent / "golden"
DFT4_PATH = ROOT / "programs" / "dft4_cooley_tukey.fft"


@pytest.fixture(scope="session")
def dft4_source() -> str:
    return DFT4_PATH.read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def golden():
    def read(name: str) -> str:
        return (GOLDEN / name).read_text(encoding="utf-8")
    return read
