"""Shared fixtures: a one-call multi-service stack over ephemeral ports."""

import shutil
from dataclasses import dataclass, field
from pathlib import Path

import pytest
from hypothesis import settings

from i3.broker import Registry, RegistryHandle, ServiceProxy, bind, serve_registry
from i3.dept import DeptConfig, DeptHandle, run_department
from i3.emis import EmisConfig, EmisHandle, run_emis

settings.register_profile("suite", deadline=None, max_examples=60)
settings.load_profile("suite")

REPO_ROOT = Path(__file__).resolve().parents[1]
SEED_DIR = REPO_ROOT / "fixtures" / "seed"
WSDD_PATH = REPO_ROOT / "fixtures" / "i3.wsdd"
UNDEPLOY_PATH = REPO_ROOT / "fixtures" / "i3-undeploy.wsdd"


@pytest.fixture
def seed_dir() -> Path:
    return SEED_DIR


@dataclass
class Stack:
    base: Path
    registry: RegistryHandle
    depts: dict[str, DeptHandle] = field(default_factory=dict)
    emis: EmisHandle | None = None

    @property
    def registry_url(self) -> str:
        return self.registry.url

    def bind(self, service_name: str) -> ServiceProxy:
        return bind(self.registry_url, service_name)

    def stop(self) -> None:
        if self.emis is not None:
            self.emis.stop()
            self.emis = None
        for handle in self.depts.values():
            handle.stop()
        self.depts.clear()
        self.registry.stop()


@pytest.fixture
def make_stack(tmp_path):
    """Factory for a seeded registry + departments (+ optional emis) stack."""
    stacks: list[Stack] = []

    def build(
        depts=("amis", "lmis", "hmis", "campus"),
        formats: dict[str, str] | None = None,
        emis: bool = False,
        seed: bool = True,
        base: Path | None = None,
    ) -> Stack:
        root = base or (tmp_path / f"stack{len(stacks)}")
        seed_from = SEED_DIR if seed else None
        registry = serve_registry(Registry(root / "registry.jsonl"))
        stack = Stack(base=root, registry=registry)
        stacks.append(stack)
        for dept in depts:
            config = DeptConfig(
                dept=dept, data_dir=root / dept, registry_url=registry.url,
                storage_format=(formats or {}).get(dept, ""))
            stack.depts[dept] = run_department(config, seed_dir=seed_from)
        if emis:
            stack.emis = run_emis(
                EmisConfig(data_dir=root / "emis", registry_url=registry.url),
                seed_dir=seed_from)
        return stack

    yield build
    for stack in stacks:
        stack.stop()
