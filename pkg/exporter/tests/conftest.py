import json
import subprocess
import sys
from pathlib import Path

import pytest

DATA = Path(__file__).resolve().parent / "data"
LLAVA_CONFIG_PATH = DATA / "llava15_7b_config.json"


def run_memfold(*args):
    """Invoke the predictor CLI as an external tool."""
    return subprocess.run(
        [sys.executable, "-m", "memfold", *args], capture_output=True, text=True
    )


@pytest.fixture(scope="session")
def llava_config():
    return json.loads(LLAVA_CONFIG_PATH.read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def plain_tcfg(tmp_path_factory):
    """An fp32/sgd config whose m_param is exactly 4 bytes per element."""
    path = tmp_path_factory.mktemp("cfg") / "probe.tcfg.json"
    path.write_text(json.dumps({
        "micro_batch_size": 1,
        "text_token_count": 1,
        "image_patch_token_count": 1,
        "precision": "fp32",
        "optimizer": "sgd",
        "zero_stage": 0,
        "dp_degree": 1,
    }))
    return path
