"""Exception hierarchy shared across the toolkit."""


class RetargetError(Exception):
    """Base class for every error raised by this package."""


class ModelSyntaxError(RetargetError, ValueError):
    """Serialized model text could not be decoded."""


class GraphValidationError(RetargetError, ValueError):
    """A graph breaks one of its structural invariants."""

    def __init__(self, reason, node_id=None):
        self.reason = reason
        self.node_id = node_id
        where = f"node {node_id!r}: " if node_id is not None else ""
        super().__init__(f"{where}{reason}")


class ShapeInferenceError(GraphValidationError):
    """Static shapes of a node's operands are inconsistent."""


class InterpreterError(RetargetError):
    """Bad inputs to, or an unexecutable node in, the reference interpreter."""


class ProfileError(RetargetError, ValueError):
    """A capability profile is malformed or cannot be found."""


class RewriteError(RetargetError):
    """A rewrite rule could not be applied."""


class RuleMismatchError(RewriteError):
    """The rule's matcher rejected the requested node."""


class PreconditionError(RewriteError, ValueError):
    """A transformation was requested with parameters it cannot honour."""


class SplitError(RetargetError):
    """Tail split requested on an impossible seed set."""


class DefuseError(RetargetError, ValueError):
    """A fused tensor does not fit its fusion manifest."""


class SignatureMismatchError(RetargetError, ValueError):
    """Two graphs compared for equivalence have different interfaces."""


class InputMismatchError(InterpreterError, ValueError):
    """Run-time inputs do not match the graph's declared inputs."""
