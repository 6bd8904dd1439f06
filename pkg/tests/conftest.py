from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

DATA_DIR = Path(__file__).parent / "data"
MALFORMED_DIR = DATA_DIR / "malformed"
GOOD_CLOUD = DATA_DIR / "good_plane.csv"

sys.path.insert(0, str(Path(__file__).parent))


def malformed_invocation(path: Path) -> list[str]:
    """CLI arguments that feed one malformed file to the parser it targets."""
    name = path.name
    if name.startswith("holes_"):
        return ["metrics", "--input", str(GOOD_CLOUD), "--holes-json", str(path)]
    if name.startswith("config_"):
        return ["mlop", "--config", str(path), "--output", str(path.with_suffix(".never"))]
    if name.startswith("args_"):
        return path.read_text().replace("{good}", str(GOOD_CLOUD)).split()
    return ["metrics", "--input", str(path)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if not lines:
        return
    order = sorted(lines, key=lambda s: (s.startswith("SUPP"), s))
    terminalreporter.section("acceptance criteria")
    for line in order:
        terminalreporter.write_line(line)
