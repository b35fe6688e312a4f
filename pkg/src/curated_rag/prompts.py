"""Prompt templates bundled with the package, each with a recorded hash."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .utils import sha256_hex


@dataclass(frozen=True)
class Template:
    name: str
    text: str
    sha256: str

    def render(self, **fields: str) -> str:
        return self.text.format(**fields)


@lru_cache(maxsize=None)
def load_template(name: str) -> Template:
    text = resources.files("curated_rag").joinpath("templates", f"{name}.txt").read_text("utf-8")
    return Template(name=name, text=text, sha256=sha256_hex(text))
