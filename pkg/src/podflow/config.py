"""Layered configuration: one file configures cluster, engines, and injector.

The file is JSON or TOML with optional sections `cluster`, `engine`, `batch`,
`argo`, and `injector`; anything omitted keeps its default. Unknown sections
or keys are errors so typos fail loudly. CLI flags override file values.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

from .baselines import ArgoLikeConfig, BatchJobConfig
from .cluster import SimConfig
from .engine import EngineConfig
from .errors import MissingFile

_SECTIONS = ("cluster", "engine", "batch", "argo", "injector")


@dataclass
class InjectorSettings:
    endpoint: str | None = None       # host:port for the socket transport
    repeat: int = 1
    workflow_path: str | None = None


@dataclass
class AppConfig:
    sim: SimConfig
    engine: EngineConfig
    batch: BatchJobConfig
    argo: ArgoLikeConfig
    injector: InjectorSettings


def _build(cls, data: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(
            f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    return cls(**data)


def _read_document(path: str) -> dict:
    if not os.path.exists(path):
        raise MissingFile(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(raw.decode("utf-8"))
    return json.loads(raw.decode("utf-8"))


def load_app_config(path: str | None = None) -> AppConfig:
    doc: dict = {}
    if path is not None:
        doc = _read_document(path)
        if not isinstance(doc, dict):
            raise ValueError("config root must be a table/object")
        unknown = set(doc) - set(_SECTIONS)
        if unknown:
            raise ValueError(
                f"unknown config section(s): {', '.join(sorted(unknown))}")
    return AppConfig(
        sim=SimConfig.from_dict(doc.get("cluster", {})),
        engine=_build(EngineConfig, doc.get("engine", {}), "engine"),
        batch=_build(BatchJobConfig, doc.get("batch", {}), "batch"),
        argo=_build(ArgoLikeConfig, doc.get("argo", {}), "argo"),
        injector=_build(InjectorSettings, doc.get("injector", {}), "injector"),
    )
