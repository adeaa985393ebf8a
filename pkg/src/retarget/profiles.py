"""Declarative target capability profiles (``.profile.json``)."""

from __future__ import annotations

import difflib
import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import ProfileError
from .ir.graph import OP_VOCABULARY, Node, is_custom_op

PROFILE_SUFFIX = ".profile.json"
PROFILE_PATH_ENV = "RETARGET_PROFILE_PATH"
BUILTIN_PROFILES = ("full", "mobile-strict", "tnn")

_FIELDS = ("name", "description", "hardware_targets", "supported_ops",
           "single_output_only", "max_input_pixels")


@dataclass(frozen=True)
class CapabilityProfile:
    name: str
    description: str
    hardware_targets: frozenset
    supported_ops: frozenset
    single_output_only: bool = False
    max_input_pixels: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "hardware_targets", frozenset(self.hardware_targets))
        object.__setattr__(self, "supported_ops", frozenset(self.supported_ops))
        if not self.supported_ops:
            raise ProfileError(f"profile {self.name!r}: supported_ops must not be empty")
        for op in sorted(self.supported_ops):
            if op not in OP_VOCABULARY and not is_custom_op(op):
                near = difflib.get_close_matches(op, OP_VOCABULARY, n=1)
                hint = f"; did you mean {near[0]!r}?" if near else ""
                raise ProfileError(f"profile {self.name!r}: unknown op {op!r}{hint}")
        if self.max_input_pixels is not None and (
                isinstance(self.max_input_pixels, bool) or not isinstance(self.max_input_pixels, int)
                or self.max_input_pixels < 1):
            raise ProfileError(f"profile {self.name!r}: max_input_pixels must be a positive int")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "hardware_targets": sorted(self.hardware_targets),
            "supported_ops": sorted(self.supported_ops),
            "single_output_only": self.single_output_only,
            "max_input_pixels": self.max_input_pixels,
        }


def supports(p: CapabilityProfile, n: Node) -> bool:
    return n.op_type in p.supported_ops


def load_profile(text) -> CapabilityProfile:
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileError(f"malformed profile: {exc}") from None
    if not isinstance(obj, dict):
        raise ProfileError("profile must be an object")
    missing = [f for f in _FIELDS if f not in obj]
    if missing:
        raise ProfileError(f"profile is missing field(s) {missing}")
    unknown = sorted(set(obj) - set(_FIELDS))
    if unknown:
        raise ProfileError(f"profile has unknown field(s) {unknown}")
    for key in ("hardware_targets", "supported_ops"):
        if not isinstance(obj[key], list) or not all(isinstance(v, str) for v in obj[key]):
            raise ProfileError(f"profile field {key!r} must be an array of strings")
    if not isinstance(obj["name"], str) or not obj["name"]:
        raise ProfileError("profile name must be a non-empty string")
    if not isinstance(obj["single_output_only"], bool):
        raise ProfileError("single_output_only must be a boolean")
    return CapabilityProfile(
        name=obj["name"],
        description=str(obj["description"]),
        hardware_targets=obj["hardware_targets"],
        supported_ops=obj["supported_ops"],
        single_output_only=obj["single_output_only"],
        max_input_pixels=obj["max_input_pixels"],
    )


def builtin_profile(name: str) -> CapabilityProfile:
    if name not in BUILTIN_PROFILES:
        raise ProfileError(f"no built-in profile {name!r}")
    ref = resources.files("retarget") / "data" / "profiles" / f"{name}{PROFILE_SUFFIX}"
    return load_profile(ref.read_text(encoding="utf-8"))


def _search_dirs() -> list:
    raw = os.environ.get(PROFILE_PATH_ENV, "")
    return [Path(p) for p in raw.split(os.pathsep) if p]


def available_profiles() -> list:
    names = set(BUILTIN_PROFILES)
    for d in _search_dirs():
        if d.is_dir():
            names.update(p.name[:-len(PROFILE_SUFFIX)] for p in d.glob(f"*{PROFILE_SUFFIX}"))
    return sorted(names)


def find_profile(name_or_path: str) -> CapabilityProfile:
    """Resolve a built-in name, then ``$RETARGET_PROFILE_PATH`` entries, then a file path."""
    if name_or_path in BUILTIN_PROFILES:
        return builtin_profile(name_or_path)
    for d in _search_dirs():
        candidate = d / f"{name_or_path}{PROFILE_SUFFIX}"
        if candidate.is_file():
            return load_profile(candidate.read_bytes())
    path = Path(name_or_path)
    if path.is_file():
        return load_profile(path.read_bytes())
    raise ProfileError(f"unknown profile {name_or_path!r} (known: {', '.join(available_profiles())})")
