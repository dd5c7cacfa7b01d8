import re

import numpy as np
import pytest
import yaml

from njtvreg.nifti import save_nifti
from njtvreg.se3 import exp_se3


def strip_ansi_codes(text: str) -> str:
    """Remove ANSI escape sequences from text."""
    ansi_escape = re.compile(r"\x1B(?:[@-Z\\-_]|\[[0-?]*[ -/]*[@-~])")
    return ansi_escape.sub("", text)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("NJTV_SEED", "NJTV_THREADS", "NJTV_CONFIG_DIR", "NJTV_GLOBAL_EVAL_LIMIT"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def fast_config(tmp_path):
    """Config with a single coarse pyramid level and few Powell cycles."""
    path = tmp_path / "fast.yaml"
    path.write_text(yaml.dump({"registration": {"pyramid": [4], "max_cycles": 3}}))
    return path


@pytest.fixture
def volume_files(tmp_path, phantom32):
    """Two phantom channels on disk, the second with a small header offset."""
    q = np.array([2.0, -1.0, 1.5, 0.02, 0.0, -0.01])
    moving = phantom32[1].with_world(np.linalg.inv(exp_se3(q)) @ phantom32[1].world)
    paths = [tmp_path / "inputs" / "t1.nii.gz", tmp_path / "inputs" / "t2.nii"]
    paths[0].parent.mkdir()
    save_nifti(phantom32[0], paths[0])
    save_nifti(moving, paths[1])
    return paths
