"""Uniform predictor over remote, scripted and heuristic backends.

Every call goes through the response cache first. The cache key covers the
repeat index, so the five repeats of one prompt are stored separately and
cross-call variance of a remote model stays observable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass
from typing import Callable

from ..clipper import compute_window
from ..dataset import PedestrianInstance
from ..errors import (
    InvalidValue,
    NetworkDisabled,
    RateLimitExhausted,
    TransportFailure,
)
from ..promptkit import PromptPackage
from .cache import RawResponse, ResponseCache
from .heuristic import heuristic_predict
from .remote import DecodeParams, GenerateContentAdapter, RateLimited, TransientError, VendorAdapter
from .scripted import ScriptedBackend

__all__ = [
    "Predictor",
    "PredictorSpec",
    "RawResponse",
    "ResponseCache",
    "ScriptedBackend",
    "cache_key",
    "heuristic_predict",
]

logger = logging.getLogger(__name__)

KINDS = ("remote", "scripted", "heuristic")


@dataclass(frozen=True)
class PredictorSpec:
    kind: str = "remote"
    model_id: str = "gemini-2.5-pro"
    temperature: float = 0.0
    seed: int = 0
    endpoint: str | None = None
    timeout: float = 60.0
    script: str | None = None
    heuristic_threshold: float = 20.0
    max_attempts: int = 5
    backoff_base: float = 1.0
    allow_protocol_override: bool = False
    offline: bool = False

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InvalidValue("backend.kind", f"must be one of {', '.join(KINDS)}")
        if not self.allow_protocol_override:
            if self.temperature != 0:
                raise InvalidValue("backend.temperature", "must be 0 unless allow_protocol_override is set")
            if self.seed != 0:
                raise InvalidValue("backend.seed", "must be 0 unless allow_protocol_override is set")
        if self.max_attempts < 1:
            raise InvalidValue("backend.max_attempts", "must be >= 1")
        if self.kind == "scripted" and not self.script:
            raise InvalidValue("backend.script", "scripted backend needs a script file")

    @property
    def deviations(self) -> list[str]:
        out = []
        if self.temperature != 0:
            out.append(f"temperature={self.temperature} (protocol: 0)")
        if self.seed != 0:
            out.append(f"seed={self.seed} (protocol: 0)")
        return out

    def public_dict(self) -> dict:
        return {
            "kind": self.kind,
            "model_id": self.model_id,
            "temperature": self.temperature,
            "seed": self.seed,
            "endpoint": self.endpoint,
            "heuristic_threshold": self.heuristic_threshold if self.kind == "heuristic" else None,
            "max_attempts": self.max_attempts,
        }


def cache_key(spec: PredictorSpec, prompt: PromptPackage, repeat_index: int) -> str:
    payload = json.dumps(
        [
            spec.model_id,
            prompt.prompt_digest,
            prompt.media.content_digest,
            float(spec.temperature),
            int(spec.seed),
            int(repeat_index),
        ],
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("ascii")).hexdigest()


class Predictor:
    """Cache-fronted dispatcher with bounded retries for the remote kind.

    ``sleep`` is injectable so the backoff schedule can be checked without
    waiting for it.
    """

    def __init__(
        self,
        spec: PredictorSpec,
        cache: ResponseCache | None = None,
        adapter: VendorAdapter | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.spec = spec
        self.cache = cache
        self.sleep = sleep
        self.network_calls = 0
        self._lock = threading.Lock()
        self._adapter = adapter
        self._script: ScriptedBackend | None = None
        if spec.kind == "scripted":
            self._script = ScriptedBackend.load(spec.script)
        elif spec.kind == "remote" and adapter is None:
            self._adapter = GenerateContentAdapter(endpoint=spec.endpoint)

    def predict(
        self, prompt: PromptPackage, repeat_index: int, instance: PedestrianInstance | None = None
    ) -> RawResponse:
        if repeat_index < 0:
            raise ValueError("repeat_index must be non-negative")
        # Only remote responses are cached. Local kinds are cheap, and a
        # scripted answer depends on the instance id, which content-addressed
        # keys cannot see (pedestrians sharing one UV clip have equal prompts).
        if self.cache is None or self.spec.kind != "remote":
            return self._dispatch(prompt, repeat_index, instance)
        key = cache_key(self.spec, prompt, repeat_index)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        resp = self._dispatch(prompt, repeat_index, instance)
        if resp.transport_status == "ok":
            self.cache.put(key, resp)
        return resp

    def _dispatch(
        self, prompt: PromptPackage, repeat_index: int, instance: PedestrianInstance | None
    ) -> RawResponse:
        if self.spec.kind == "scripted":
            text = self._script.respond(prompt.instance_id, prompt.config.label, repeat_index)
            return RawResponse(text, 0.0, "ok" if text else "model_error", 1)
        if self.spec.kind == "heuristic":
            if instance is None:
                raise ValueError("heuristic backend needs the pedestrian instance")
            return heuristic_predict(instance, compute_window(instance.event_frame), self.spec.heuristic_threshold)
        return self._remote(prompt)

    def _remote(self, prompt: PromptPackage) -> RawResponse:
        if self.spec.offline:
            raise NetworkDisabled(f"cache miss for {prompt.instance_id} {prompt.config.label} in offline mode")
        params = DecodeParams(self.spec.model_id, self.spec.temperature, self.spec.seed, self.spec.timeout)
        before, after = prompt.text_parts()
        last_rate_limited = False
        last_error = ""
        for attempt in range(1, self.spec.max_attempts + 1):
            with self._lock:
                self.network_calls += 1
            t0 = time.perf_counter()
            try:
                text = self._adapter.send(before, prompt.media, after, params)
            except RateLimited as exc:
                last_rate_limited, last_error = True, str(exc)
            except TransientError as exc:
                last_rate_limited, last_error = False, str(exc)
            else:
                latency = round((time.perf_counter() - t0) * 1000.0, 3)
                status = "ok" if text else "model_error"
                return RawResponse(text, latency, status, attempt)
            logger.warning("attempt %d/%d failed: %s", attempt, self.spec.max_attempts, last_error)
            if attempt < self.spec.max_attempts:
                self.sleep(self.spec.backoff_base * 2 ** (attempt - 1))
        if last_rate_limited:
            raise RateLimitExhausted(self.spec.max_attempts)
        raise TransportFailure(last_error, self.spec.max_attempts)
