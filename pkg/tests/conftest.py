import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent / "oracles"))

from tdcd.config import SimConfig  # noqa: E402


def make_config(**overrides) -> SimConfig:
    """Small least-squares config; dotted keys reach into sections."""
    base = SimConfig.from_dict(
        dict(
            n_silos=2, clients=2, local_steps=3, lr=0.05, batch_size=8, rounds=4,
            seeds=dict(data=0, init=1, batch=2),
            dataset=dict(n_samples=32, n_features=6, noise=0.1),
        )
    )
    return base.replace(**overrides) if overrides else base


@pytest.fixture
def small_config():
    return make_config()


# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
