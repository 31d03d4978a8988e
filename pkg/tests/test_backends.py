"""Backend selection contract: env flag, runtime override, fallback parity.

Kernel-level numba/numpy parity lives with each module's tests; this file
covers the dispatch machinery itself.
"""

import os
import subprocess
import sys

import pytest

import stimkit
from stimkit.backend import HAVE_NUMBA
from stimkit.errors import ConfigError


def _backend_in_subprocess(env_value):
    env = dict(os.environ)
    if env_value is None:
        env.pop("STIMKIT_BACKEND", None)
    else:
        env["STIMKIT_BACKEND"] = env_value
    out = subprocess.run(
        [sys.executable, "-c", "import stimkit; print(stimkit.active_backend())"],
        capture_output=True,
        text=True,
        env=env,
    )
    return out.returncode, out.stdout.strip(), out.stderr


class TestEnvFlag:
    def test_auto_prefers_numba_when_available(self):
        code, backend, _ = _backend_in_subprocess(None)
        assert code == 0
        assert backend == ("numba" if HAVE_NUMBA else "numpy")

    def test_numpy_forced(self):
        code, backend, _ = _backend_in_subprocess("numpy")
        assert code == 0 and backend == "numpy"

    @pytest.mark.skipif(not HAVE_NUMBA, reason="numba backend unavailable")
    def test_numba_forced(self):
        code, backend, _ = _backend_in_subprocess("numba")
        assert code == 0 and backend == "numba"

    def test_nonsense_value_fails_loudly(self):
        code, _, err = _backend_in_subprocess("cuda")
        assert code != 0
        assert "STIMKIT_BACKEND" in err


class TestRuntimeOverride:
    def test_set_backend_switches_dispatch(self):
        original = stimkit.active_backend()
        try:
            stimkit.set_backend("numpy")
            assert stimkit.active_backend() == "numpy"
            assert not stimkit.using_numba()
        finally:
            stimkit.set_backend(original)

    def test_invalid_name_rejected(self):
        with pytest.raises(ConfigError):
            stimkit.set_backend("gpu")


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba backend unavailable")
class TestThreadCap:
    def test_stimkit_threads_caps_numba_pool(self):
        env = dict(os.environ)
        env["STIMKIT_THREADS"] = "1"
        out = subprocess.run(
            [sys.executable, "-c", "import stimkit, numba; print(numba.get_num_threads())"],
            capture_output=True,
            text=True,
            env=env,
        )
        assert out.returncode == 0
        assert out.stdout.strip() == "1"
