"""Exception hierarchy shared by every stage of the harness."""

from __future__ import annotations

from typing import Any


class BfpipError(Exception):
    """Base class. ``context`` collects instance/config info as errors propagate."""

    def __init__(self, message: str = "", **context: Any) -> None:
        super().__init__(message)
        self.context: dict[str, Any] = dict(context)

    def with_context(self, **context: Any) -> "BfpipError":
        self.context.update(context)
        return self

    def summary(self) -> dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": str(self),
            "context": {k: str(v) for k, v in sorted(self.context.items())},
        }


# dataset ingest


class MissingFile(BfpipError, FileNotFoundError):
    def __init__(self, path: Any) -> None:
        super().__init__(f"file not found: {path}")
        self.path = str(path)


class SchemaViolation(BfpipError, ValueError):
    """Carries every violated invariant as ``(field, reason, location)`` triples."""

    def __init__(self, violations: list[tuple[str, str, str]]) -> None:
        self.violations = list(violations)
        listing = "; ".join(f"{loc}{' ' if loc else ''}{f}: {r}" for f, r, loc in self.violations)
        super().__init__(listing)

    @property
    def field(self) -> str:
        return self.violations[0][0]

    @property
    def reason(self) -> str:
        return self.violations[0][1]


class DuplicateInstanceId(BfpipError, ValueError):
    def __init__(self, instance_id: str) -> None:
        super().__init__(f"duplicate instance_id {instance_id!r}")
        self.instance_id = instance_id


class MissingAnnotationField(BfpipError, ValueError):
    def __init__(self, name: str, where: str = "") -> None:
        super().__init__(f"missing annotation field {name!r}" + (f" in {where}" if where else ""))
        self.name = name


class UnknownSplitVideo(BfpipError, ValueError):
    def __init__(self, video_id: str) -> None:
        super().__init__(f"split listing names video {video_id!r} with no annotation file")
        self.video_id = video_id


class NoEvaluableInstances(BfpipError, ValueError):
    pass


# clipper


class InsufficientHistory(BfpipError, ValueError):
    def __init__(self, event_frame: int) -> None:
        super().__init__(f"event_frame {event_frame} leaves no room for a full observation window")
        self.event_frame = event_frame


class MissingFrame(BfpipError, LookupError):
    def __init__(self, index: int) -> None:
        super().__init__(f"frame {index} not found in source")
        self.index = index


class DecoderFailure(BfpipError, RuntimeError):
    def __init__(self, diagnostic: str) -> None:
        super().__init__(diagnostic)
        self.diagnostic = diagnostic


class EncoderFailure(BfpipError, RuntimeError):
    def __init__(self, diagnostic: str) -> None:
        super().__init__(diagnostic)
        self.diagnostic = diagnostic


class BoxOutOfBounds(BfpipError, ValueError):
    def __init__(self, frame_index: int) -> None:
        super().__init__(f"bounding box on frame {frame_index} exceeds raster bounds")
        self.frame_index = frame_index


# promptkit


class MissingAnnotation(BfpipError, LookupError):
    def __init__(self, frame_index: int, what: str = "annotation") -> None:
        super().__init__(f"frame {frame_index} lacks required {what}")
        self.frame_index = frame_index


class TemplateVariableUnbound(BfpipError, KeyError):
    def __init__(self, name: str) -> None:
        super().__init__(f"template placeholder {{{name}}} has no binding")
        self.name = name

    def __str__(self) -> str:
        return self.args[0]


class TemplateError(BfpipError, ValueError):
    pass


# backends


class RateLimitExhausted(BfpipError, RuntimeError):
    def __init__(self, attempt_count: int) -> None:
        super().__init__(f"rate limited on all {attempt_count} attempts")
        self.attempt_count = attempt_count


class TransportFailure(BfpipError, RuntimeError):
    def __init__(self, message: str, attempt_count: int = 1) -> None:
        super().__init__(message)
        self.attempt_count = attempt_count


class VendorRejection(BfpipError, RuntimeError):
    def __init__(self, status: int, body: str) -> None:
        excerpt = body[:200]
        super().__init__(f"vendor rejected request with HTTP {status}: {excerpt}")
        self.status = status
        self.body = excerpt


class NetworkDisabled(BfpipError, RuntimeError):
    pass


class ScriptEntryMissing(BfpipError, LookupError):
    pass


# protocol


class MalformedResponse(BfpipError, ValueError):
    def __init__(self, raw: str) -> None:
        excerpt = raw if len(raw) <= 80 else raw[:77] + "..."
        super().__init__(f"no unique label in response: {excerpt!r}")
        self.excerpt = excerpt


class TieWithEvenVotes(BfpipError, ValueError):
    pass


class EvaluationFailed(BfpipError, RuntimeError):
    pass


# metrics / reports / cli


class EmptyRecordSet(BfpipError, ValueError):
    pass


class LengthMismatch(BfpipError, ValueError):
    pass


class UnsupportedFormat(BfpipError, ValueError):
    pass


class UnknownKey(BfpipError, KeyError):
    def __init__(self, name: str) -> None:
        super().__init__(f"unknown configuration key {name!r}")
        self.name = name

    def __str__(self) -> str:
        return self.args[0]


class InvalidValue(BfpipError, ValueError):
    def __init__(self, key: str, reason: str) -> None:
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason
