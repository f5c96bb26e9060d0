"""Chat-completion gateway: live HTTP backend, deterministic scripted
backend, structured-choice parsing, and usage metering.

Structured decisions are requested as a fenced ``json`` block in plain
chat (no provider function-calling), parsed leniently, and repaired with
bounded retries when a reply violates its schema.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    AuthenticationError,
    BackendError,
    ScriptExhaustedError,
    StructuredDecisionError,
)

logger = logging.getLogger(__name__)

API_KEY_ENV = "USE_ENGINE_API_KEY"
MAX_ATTEMPTS = 3
_FENCE_RE = re.compile(r"```[a-zA-Z]*\s*\n(.*?)```", re.DOTALL)


@dataclass
class ChatMessage:
    role: str  # system | user | assistant
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise BackendError(f"bad message role {self.role!r}")
        if not self.content:
            raise BackendError("message content must be nonempty")


@dataclass
class DecodeParams:
    temperature: float = 0.0
    max_output_tokens: int = 4096


@dataclass
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0


def _estimate_tokens(text: str) -> int:
    return max(len(text) // 4, 1)


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


class ScriptedBackend:
    """Replays an ordered script of completions; the hermetic test backend.

    Script entries are either a plain string (the completion) or an object
    ``{"text": ..., "usage": {"prompt_tokens": n, "completion_tokens": m}}``.
    Token counts default to a deterministic length-based estimate.
    """

    model = "scripted"

    def __init__(self, entries: list):
        self._entries = list(entries)
        self._cursor = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text())
        if not isinstance(data, list):
            raise BackendError(f"script file must hold a JSON array: {path}")
        return cls(data)

    @property
    def remaining(self) -> int:
        return len(self._entries) - self._cursor

    def chat(self, messages: list[ChatMessage], params: DecodeParams) -> tuple[str, Usage]:
        with self._lock:
            if self._cursor >= len(self._entries):
                raise ScriptExhaustedError(f"script exhausted after {self._cursor} replies")
            entry = self._entries[self._cursor]
            self._cursor += 1
        if isinstance(entry, str):
            text, usage_spec = entry, {}
        else:
            text = entry.get("text", "")
            usage_spec = entry.get("usage", {})
        prompt_chars = sum(len(m.content) for m in messages)
        usage = Usage(
            prompt_tokens=int(usage_spec.get("prompt_tokens", _estimate_tokens("x" * prompt_chars))),
            completion_tokens=int(usage_spec.get("completion_tokens", _estimate_tokens(text))),
        )
        return text, usage


class HttpChatBackend:
    """OpenAI-style chat-completions endpoint over HTTP."""

    def __init__(self, base_url: str, model: str, api_key: str | None = None, timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.timeout = timeout

    def chat(self, messages: list[ChatMessage], params: DecodeParams) -> tuple[str, Usage]:
        import httpx

        payload = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last_error: Exception | None = None
        for attempt in range(MAX_ATTEMPTS):
            if attempt:
                time.sleep(0.5 * 2 ** (attempt - 1))
            try:
                response = httpx.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout,
                )
            except httpx.HTTPError as exc:
                last_error = exc
                logger.warning("transport failure (attempt %d): %s", attempt + 1, exc)
                continue
            if response.status_code in (401, 403):
                raise AuthenticationError(f"backend rejected credentials ({response.status_code})")
            if response.status_code >= 500 or response.status_code == 429:
                last_error = BackendError(f"backend status {response.status_code}")
                continue
            if response.status_code != 200:
                raise BackendError(f"backend status {response.status_code}: {response.text[:300]}")
            body = response.json()
            text = body["choices"][0]["message"]["content"]
            usage_body = body.get("usage", {})
            usage = Usage(
                prompt_tokens=int(usage_body.get("prompt_tokens", 0)),
                completion_tokens=int(usage_body.get("completion_tokens", 0)),
            )
            return text, usage
        raise BackendError(f"retries exhausted: {last_error}")


# ---------------------------------------------------------------------------
# Usage ledger
# ---------------------------------------------------------------------------


@dataclass
class UsageRecord:
    label: str
    model: str
    prompt_tokens: int
    completion_tokens: int
    cost: float | None
    wall_time: float


def _default_price_table() -> dict:
    path = Path(__file__).with_name("price_table.json")
    return json.loads(path.read_text())


class UsageLedger:
    """Per-call usage records with per-label aggregation.

    Prices are USD per million tokens, keyed by model id; calls against an
    unknown model are kept with their cost marked unknown.
    """

    def __init__(self, price_table: dict | None = None):
        self.price_table = price_table if price_table is not None else _default_price_table()
        self.records: list[UsageRecord] = []
        self._lock = threading.Lock()

    def compute_cost(self, model: str, usage: Usage) -> float | None:
        prices = self.price_table.get(model)
        if prices is None:
            return None
        return (
            usage.prompt_tokens * prices["input_per_mtok"] / 1_000_000
            + usage.completion_tokens * prices["output_per_mtok"] / 1_000_000
        )

    def meter(self, label: str, usage: Usage, model: str, wall_time: float = 0.0) -> dict:
        if not label:
            raise BackendError("ledger label must be nonempty")
        record = UsageRecord(
            label=label,
            model=model,
            prompt_tokens=usage.prompt_tokens,
            completion_tokens=usage.completion_tokens,
            cost=self.compute_cost(model, usage),
            wall_time=wall_time,
        )
        with self._lock:
            self.records.append(record)
        return self.totals()

    def totals(self) -> dict:
        with self._lock:
            return {
                "calls": len(self.records),
                "prompt_tokens": sum(r.prompt_tokens for r in self.records),
                "completion_tokens": sum(r.completion_tokens for r in self.records),
                "cost": sum(r.cost for r in self.records if r.cost is not None),
                "wall_time": sum(r.wall_time for r in self.records),
            }

    def by_label(self) -> dict[str, dict]:
        out: dict[str, dict] = {}
        with self._lock:
            for r in self.records:
                agg = out.setdefault(
                    r.label,
                    {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0, "cost": 0.0},
                )
                agg["calls"] += 1
                agg["prompt_tokens"] += r.prompt_tokens
                agg["completion_tokens"] += r.completion_tokens
                if r.cost is not None:
                    agg["cost"] += r.cost
        return out

    def to_records(self) -> list[dict]:
        """Deterministic per-call rows (wall time intentionally excluded)."""
        with self._lock:
            return [
                {
                    "label": r.label,
                    "model": r.model,
                    "prompt_tokens": r.prompt_tokens,
                    "completion_tokens": r.completion_tokens,
                    "cost": r.cost,
                }
                for r in self.records
            ]

    def wall_times(self) -> list[float]:
        with self._lock:
            return [r.wall_time for r in self.records]


# ---------------------------------------------------------------------------
# Gateway calls
# ---------------------------------------------------------------------------


def chat(
    backend,
    messages: list[ChatMessage],
    params: DecodeParams | None = None,
    ledger: UsageLedger | None = None,
    label: str = "chat",
) -> tuple[str, Usage]:
    """One completion; meters the call when a ledger is supplied."""
    if not messages:
        raise BackendError("messages must be nonempty")
    params = params or DecodeParams()
    start = time.monotonic()
    text, usage = backend.chat(messages, params)
    if ledger is not None:
        ledger.meter(label, usage, getattr(backend, "model", "unknown"), time.monotonic() - start)
    return text, usage


@dataclass
class FieldSpec:
    kind: str = "string"  # string | string_list | enum | object | any
    choices: tuple[str, ...] = ()
    required: bool = True
    default: object = None

    def validate(self, value) -> str | None:
        if self.kind == "string" and not isinstance(value, str):
            return f"expected a string, got {type(value).__name__}"
        if self.kind == "string_list":
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                return "expected a list of strings"
        if self.kind == "enum" and value not in self.choices:
            return f"expected one of {list(self.choices)}, got {value!r}"
        if self.kind == "object" and not isinstance(value, dict):
            return f"expected an object, got {type(value).__name__}"
        return None


def parse_json_reply(text: str) -> dict | None:
    """Pull a JSON object out of a completion, tolerating surrounding prose."""
    candidates = [m.strip() for m in _FENCE_RE.findall(text)]
    stripped = text.strip()
    if stripped.startswith("{"):
        candidates.append(stripped)
    first, last = text.find("{"), text.rfind("}")
    if first != -1 and last > first:
        candidates.append(text[first : last + 1])
    for candidate in reversed(candidates):
        try:
            value = json.loads(candidate)
        except (json.JSONDecodeError, ValueError):
            continue
        if isinstance(value, dict):
            return value
    return None


def schema_instruction(schema: dict[str, FieldSpec]) -> str:
    """Human-readable description of the expected fenced JSON block."""
    rows = []
    for name, spec in schema.items():
        kind = spec.kind
        if spec.kind == "enum":
            kind = " | ".join(spec.choices)
        rows.append(f'  "{name}": {kind}' + ("" if spec.required else " (optional)"))
    return "Reply with a single fenced ```json block holding an object with fields:\n{\n" + ",\n".join(rows) + "\n}"


def select_structured(
    backend,
    messages: list[ChatMessage],
    schema: dict[str, FieldSpec],
    params: DecodeParams | None = None,
    ledger: UsageLedger | None = None,
    label: str = "structured",
) -> dict:
    """Chat until the reply satisfies the schema (≤ MAX_ATTEMPTS tries).

    Violations are quoted back as a repair message. The returned dict has
    defaults filled for optional fields; it never violates the schema.
    """
    convo = list(messages)
    transcripts: list[str] = []
    for _ in range(MAX_ATTEMPTS):
        text, _usage = chat(backend, convo, params, ledger, label)
        transcripts.append(text)
        parsed = parse_json_reply(text)
        violation = None
        if parsed is None:
            violation = "no JSON object found in the reply"
        else:
            for name, spec in schema.items():
                if name not in parsed:
                    if spec.required:
                        violation = f"missing required field {name!r}"
                        break
                    parsed[name] = spec.default
                    continue
                problem = spec.validate(parsed[name])
                if problem:
                    violation = f"field {name!r}: {problem}"
                    break
        if violation is None:
            assert parsed is not None
            return parsed
        convo.append(ChatMessage("assistant", text))
        convo.append(
            ChatMessage(
                "user",
                f"Your reply could not be used: {violation}.\n{schema_instruction(schema)}",
            )
        )
    raise StructuredDecisionError(
        f"no schema-valid reply after {MAX_ATTEMPTS} attempts", transcripts=transcripts
    )


def extract_fenced_block(text: str) -> str | None:
    """Last fenced code block in a completion, or the whole reply when the
    completion is bare code."""
    blocks = _FENCE_RE.findall(text)
    if blocks:
        return blocks[-1]
    return None
