import numpy as np
from typer.testing import CliRunner

from njtvreg.nifti import load_nifti
from njtvreg.run.phantom import app
from njtvreg.simulation.phantom import make_phantom

runner = CliRunner()


def test_writes_one_file_per_channel(tmp_path):
    out = tmp_path / "phantom"
    result = runner.invoke(app, ["--dims", "32,40,32", "--channels", "2", "--seed", "4", "-o", str(out)])
    assert result.exit_code == 0, result.output

    assert sorted(p.name for p in out.iterdir()) == ["channel_0.nii.gz", "channel_1.nii.gz"]
    expected = make_phantom((32, 40, 32), 2, seed=4)
    for c, v in enumerate(expected):
        loaded = load_nifti(out / f"channel_{c}.nii.gz")
        assert loaded.dims == (32, 40, 32)
        assert np.allclose(loaded.world, v.world)
        assert np.allclose(loaded.data, v.data, rtol=1e-6, atol=1e-4)


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("NJTV_SEED", "7")
    result = runner.invoke(app, ["--dims", "32,32,32", "--channels", "2", "-o", str(tmp_path)])
    assert result.exit_code == 0, result.output

    expected = make_phantom((32, 32, 32), 2, seed=7)[1]
    assert np.allclose(load_nifti(tmp_path / "channel_1.nii.gz").data, expected.data, rtol=1e-6, atol=1e-4)


def test_too_small_is_usage_error(tmp_path):
    result = runner.invoke(app, ["--dims", "16,16,16", "-o", str(tmp_path / "p")])
    assert result.exit_code == 2
    assert not (tmp_path / "p").exists()


def test_one_channel_is_usage_error(tmp_path):
    result = runner.invoke(app, ["--dims", "32,32,32", "--channels", "1", "-o", str(tmp_path / "p")])
    assert result.exit_code == 2


def test_malformed_dims_is_usage_error(tmp_path):
    result = runner.invoke(app, ["--dims", "32,big,32", "-o", str(tmp_path / "p")])
    assert result.exit_code == 2
