"""Shared fixtures: an isolated config, a local-provider lifecycle and job directories."""

from typing import Dict, Optional

import pytest

from rbc_lifecycle.config import Config
from rbc_lifecycle.job_model import validate_job_dir
from rbc_lifecycle.lifecycle import Lifecycle
from rbc_lifecycle.local_provider import LocalSandboxProvider
from rbc_lifecycle.models import JobDirectory

# Scripts are plain shell run through "sh {script}", so no R installation is needed.
WRITE_TWO_FILES = (
    'printf "alpha\\n" > Results/a.txt\n'
    'printf "beta %s\\n" "$RBC_RUN_NAME" > Results/b.txt\n'
)


@pytest.fixture(autouse=True)
def _isolated_environment(monkeypatch, tmp_path):
    for name in ("RBC_CONFIG", "RBC_STATE", "RBC_PROVIDER_WORKDIR", "RBC_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("RBC_CONFIG", str(tmp_path / "no-such-config"))


@pytest.fixture
def config(tmp_path) -> Config:
    return Config(
        state_path=tmp_path / "state" / "state.json",
        provider_workdir=tmp_path / "sandbox",
        runtime_command="sh {script}",
        default_instance_type="m1.small",
    )


@pytest.fixture
def lifecycle(config) -> Lifecycle:
    return Lifecycle(config)


@pytest.fixture
def provider(tmp_path) -> LocalSandboxProvider:
    return LocalSandboxProvider(tmp_path / "provider")


@pytest.fixture
def make_job(tmp_path):
    """Factory for job directories under tmp_path/jobs/<name>."""

    def factory(name: str = "BSGenome", scripts: Optional[Dict[str, str]] = None,
                data: Optional[Dict[str, str]] = None) -> JobDirectory:
        root = tmp_path / "jobs" / name
        (root / "Results").mkdir(parents=True)
        (root / "RunResults").mkdir()
        for script, body in (scripts if scripts is not None else {"search.R": WRITE_TWO_FILES}).items():
            (root / script).write_text(body)
        for relative, content in (data or {}).items():
            path = root / relative
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(content)
        return validate_job_dir(root)

    return factory


@pytest.fixture
def cli_config(tmp_path, monkeypatch, config) -> Config:
    """Point the CLI at the same isolated state and sandbox through RBC_CONFIG."""
    config_file = tmp_path / "rbc.conf"
    config_file.write_text(
        "# test configuration\n"
        f"state_path = {config.state_path}\n"
        f"provider_workdir = {config.provider_workdir}\n"
        'runtime_command = "sh {script}"\n'
        "default_instance_type = m1.small\n"
    )
    monkeypatch.setenv("RBC_CONFIG", str(config_file))
    return config
