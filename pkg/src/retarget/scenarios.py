from enum import Enum


class Scenario(str, Enum):
    """The four ways an unsupported node can be made deployable."""

    S1 = "S1_substitute"
    S2 = "S2_retrain_rewrite"
    S3 = "S3_tail_split"
    S4 = "S4_custom_op"

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        for s in cls:
            if text in (s.name, s.value) or text.upper() == s.name:
                return s
        raise ValueError(f"unknown scenario {text!r}; use one of {[s.name for s in cls]}")
