"""Vendor adapters for remote multimodal endpoints.

An adapter turns ordered prompt parts into one HTTP request and the reply
back into text. It signals retryable conditions with :class:`RateLimited`
and :class:`TransientError`; everything else surfaces as
:class:`~bfpip.errors.VendorRejection` and is never retried.
"""

from __future__ import annotations

import base64
import os
from dataclasses import dataclass
from typing import Protocol

import httpx

from ..clipper import ClipBundle
from ..errors import TransportFailure, VendorRejection

API_KEY_ENV = "BFPIP_API_KEY"
API_URL_ENV = "BFPIP_API_URL"


class RateLimited(Exception):
    pass


class TransientError(Exception):
    pass


@dataclass(frozen=True)
class DecodeParams:
    model_id: str
    temperature: float = 0.0
    seed: int = 0
    timeout: float = 60.0


class VendorAdapter(Protocol):
    def send(self, before: list[str], media: ClipBundle, after: list[str], params: DecodeParams) -> str: ...


class GenerateContentAdapter:
    """JSON ``generateContent``-style wire format with inline base64 media.

    Request: ``POST {endpoint}/models/{model}:generateContent`` with a single
    user turn whose parts are text, inline media, text. The key travels in
    the ``x-goog-api-key`` header.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        client: httpx.Client | None = None,
    ) -> None:
        self.endpoint = endpoint or os.environ.get(API_URL_ENV, "")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self._client = client

    def build_request(self, before: list[str], media: ClipBundle, after: list[str], params: DecodeParams) -> dict:
        parts: list[dict] = [{"text": t} for t in before]
        parts.append(
            {
                "inline_data": {
                    "mime_type": media.mime_type,
                    "data": base64.b64encode(media.read_bytes()).decode("ascii"),
                }
            }
        )
        parts.extend({"text": t} for t in after)
        return {
            "contents": [{"role": "user", "parts": parts}],
            "generationConfig": {
                "temperature": params.temperature,
                "seed": params.seed,
                "candidateCount": 1,
                "responseMimeType": "application/json",
            },
        }

    def send(self, before: list[str], media: ClipBundle, after: list[str], params: DecodeParams) -> str:
        if not self.endpoint:
            raise TransportFailure(f"no endpoint configured (set {API_URL_ENV})", 0)
        url = f"{self.endpoint.rstrip('/')}/models/{params.model_id}:generateContent"
        body = self.build_request(before, media, after, params)
        headers = {"x-goog-api-key": self.api_key} if self.api_key else {}
        client = self._client or httpx.Client()
        try:
            resp = client.post(url, json=body, headers=headers, timeout=params.timeout)
        except httpx.HTTPError as exc:
            raise TransientError(f"{type(exc).__name__}: {exc}") from None
        finally:
            if self._client is None:
                client.close()
        if resp.status_code == 429:
            raise RateLimited(resp.text[:200])
        if resp.status_code >= 500:
            raise TransientError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise VendorRejection(resp.status_code, resp.text)
        try:
            doc = resp.json()
            parts = doc["candidates"][0]["content"]["parts"]
            return "".join(p.get("text", "") for p in parts)
        except (ValueError, KeyError, IndexError, TypeError):
            return ""
