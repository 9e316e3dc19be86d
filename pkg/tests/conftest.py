from pathlib import Path

import pytest

from dagflow.harness.config import parse_config
from dagflow.harness.runner import run_pretrain

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def configs_dir() -> Path:
    return CONFIGS


@pytest.fixture(scope="session")
def ring_pretrained(tmp_path_factory):
    """The ring task pretrained once per session (2000 denoising steps, seed 7)."""
    root = tmp_path_factory.mktemp("ring")
    cfg = parse_config(CONFIGS / "ring.ini").with_seed(7).with_out(str(root / "pretrain"))
    ckpt = run_pretrain(cfg, root / "pretrain")
    return cfg, ckpt, root


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def record_criterion(request):
    """Print one PASS/FAIL line for an acceptance criterion and keep it for the summary."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config.acceptance_lines.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = sorted(getattr(config, "acceptance_lines", []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
