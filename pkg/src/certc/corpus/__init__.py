"""Bundled certifier specifications."""

from __future__ import annotations

import os
from typing import Dict, List

_HERE = os.path.dirname(__file__)

PROGRAMS = ["ibp", "crownibp", "deepz", "deeppoly", "reusecert", "polyzono",
            "zid", "skippoly"]


def program_names() -> List[str]:
    return list(PROGRAMS)


def program_path(name: str) -> str:
    path = os.path.join(_HERE, name + ".cf")
    if not os.path.exists(path):
        raise KeyError("no bundled certifier named %r" % name)
    return path


def load_source(name: str) -> str:
    with open(program_path(name), "r") as fh:
        return fh.read()


def load_all() -> Dict[str, str]:
    return {name: load_source(name) for name in PROGRAMS}
