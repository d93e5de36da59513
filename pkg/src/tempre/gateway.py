"""Uniform chat interface over live, replayed and simulated providers.

The gateway owns the transcript of every session, the content-addressed reply
cache and the transcript store. Providers only turn a message history into a
reply.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
INTENT_KINDS = ("relation_multiclass", "relation_yesno", "same_event", "event_ranking")

API_KEY_ENV = "TEMPRE_API_KEY"
ENDPOINT_ENV = "TEMPRE_ENDPOINT"


class GatewayError(RuntimeError):
    """Provider unreachable or failing after all retries."""


class EmptyReplyError(GatewayError):
    pass


class ReplayMissError(GatewayError):
    pass


class TransientError(GatewayError):
    """Retryable transport problem (timeouts, 429, 5xx)."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role != "system" and not self.content:
            raise ValueError(f"{self.role} message must be non-empty")


@dataclass(frozen=True)
class QueryIntent:
    """What a prompt asks, in structured form, so simulated providers never read prose.

    ``probe`` is ``"counterpart"`` for the audit's inverse queries and ``target``
    then names the event whose presence is being checked.
    """

    kind: str
    doc_id: str
    e1: str | None = None
    e2: str | None = None
    anchor: str | None = None
    relation: str | None = None
    candidates: tuple[str, ...] = ()
    probe: str = "primary"
    target: str | None = None

    def __post_init__(self):
        if self.kind not in INTENT_KINDS:
            raise ValueError(f"unknown intent kind {self.kind!r}")
        if self.kind == "event_ranking":
            if self.anchor is None or self.relation is None:
                raise ValueError("event_ranking intent needs anchor and relation")
        elif self.e1 is None or self.e2 is None:
            raise ValueError(f"{self.kind} intent needs e1 and e2")
        if self.kind == "relation_yesno" and self.relation is None:
            raise ValueError("relation_yesno intent needs a relation")

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if v not in (None, ())}
        if "candidates" in d:
            d["candidates"] = list(d["candidates"])
        return d


@dataclass
class ChatTranscript:
    messages: list[ChatMessage] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    intents: list[dict] = field(default_factory=list)
    closed: bool = False

    def history(self) -> list[tuple[str, str]]:
        return [(m.role, m.content) for m in self.messages]

    def identity(self) -> dict:
        """The part of a transcript that determines its content hash (no timestamps)."""
        keep = ("provider", "model", "strategy", "doc_id", "pair", "anchor", "relation", "purpose")
        return {
            "meta": {k: self.metadata[k] for k in keep if k in self.metadata},
            "messages": [[m.role, m.content] for m in self.messages],
        }

    def ref(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "ref": self.ref(),
            "metadata": self.metadata,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "intents": self.intents,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChatTranscript":
        return cls([ChatMessage(m["role"], m["content"]) for m in d["messages"]],
                   dict(d.get("metadata", {})), list(d.get("intents", [])), True)


def check_alternation(messages: Sequence[ChatMessage]) -> None:
    body = list(messages)
    if body and body[0].role == "system":
        body = body[1:]
    for i, m in enumerate(body):
        expected = "user" if i % 2 == 0 else "assistant"
        if m.role != expected:
            raise ValueError(f"message {i} has role {m.role}, expected {expected}")


def cache_key(provider_id: str, model_id: str, history: Sequence[tuple[str, str]], message: str) -> str:
    payload = {
        "provider": provider_id,
        "model": model_id,
        "history": [list(h) for h in history],
        "message": message,
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ReplyCache:
    """``<root>/<key>.json`` files holding ``{"reply": ...}``."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> str | None:
        p = self.path(key)
        try:
            return json.loads(p.read_text("utf-8"))["reply"]
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, KeyError):
            log.warning("ignoring corrupt cache entry %s", p)
            return None

    def put(self, key: str, reply: str) -> None:
        atomic_write_text(self.path(key), json.dumps({"reply": reply}, ensure_ascii=False))

    def keys(self) -> list[str]:
        if not self.root.exists():
            return []
        return sorted(p.stem for p in self.root.glob("*.json"))

    def stats(self) -> dict:
        files = list(self.root.glob("*.json")) if self.root.exists() else []
        return {"entries": len(files), "bytes": sum(f.stat().st_size for f in files)}


class TranscriptStore:
    """``<run_dir>/transcripts/<ref>.json``, one file per closed session."""

    def __init__(self, run_dir: str | Path):
        self.root = Path(run_dir) / "transcripts"

    def save(self, transcript: ChatTranscript) -> str:
        ref = transcript.ref()
        atomic_write_text(self.root / f"{ref}.json",
                          json.dumps(transcript.to_dict(), indent=1, ensure_ascii=False, sort_keys=True))
        return ref

    def load(self, ref: str) -> ChatTranscript:
        return ChatTranscript.from_dict(json.loads((self.root / f"{ref}.json").read_text("utf-8")))

    def exists(self, ref: str) -> bool:
        return (self.root / f"{ref}.json").exists()

    def refs(self) -> list[str]:
        if not self.root.exists():
            return []
        return sorted(p.stem for p in self.root.glob("*.json"))

    def __iter__(self):
        for ref in self.refs():
            yield self.load(ref)


class Provider(Protocol):
    provider_id: str
    model: str

    def complete(self, messages: Sequence[ChatMessage], intent: QueryIntent) -> str: ...


class HTTPChatProvider:
    """Chat-completions style JSON endpoint with bounded exponential-backoff retries."""

    provider_id = "http"

    def __init__(self, endpoint: str | None = None, model: str = "gpt-3.5-turbo", api_key: str | None = None,
                 temperature: float | None = None, timeout: float = 60.0, max_retries: int = 5,
                 backoff: float = 1.0, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV, "https://api.openai.com/v1/chat/completions")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, os.environ.get("OPENAI_API_KEY"))
        self.temperature = temperature
        self.max_retries = max_retries
        self.backoff = backoff
        self.client = client or httpx.Client(timeout=timeout)
        self.sleep = sleep
        self.calls = 0

    def _request(self, payload: dict) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self.client.post(self.endpoint, json=payload, headers=headers)
        except (httpx.TransportError, httpx.TimeoutException) as exc:
            raise TransientError(f"transport failure: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise GatewayError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"unexpected response body: {resp.text[:200]}") from exc

    def complete(self, messages, intent) -> str:
        payload = {"model": self.model, "messages": [{"role": m.role, "content": m.content} for m in messages]}
        if self.temperature is not None:
            payload["temperature"] = self.temperature
        attempt = 0
        while True:
            self.calls += 1
            try:
                return self._request(payload)
            except TransientError as exc:
                if attempt >= self.max_retries:
                    raise GatewayError(f"giving up after {attempt + 1} attempts: {exc}") from exc
                delay = self.backoff * (2 ** attempt)
                log.warning("transient provider failure (%s); retry %d in %.1fs", exc, attempt + 1, delay)
                self.sleep(delay)
                attempt += 1


class ReplayProvider:
    """Serves replies recorded in transcript files; never reaches a live service."""

    def __init__(self, transcripts, provider_id: str, model: str):
        self.provider_id = provider_id
        self.model = model
        self.calls = 0
        self._replies: dict[str, str] = {}
        for t in transcripts:
            msgs = t.messages
            for i, m in enumerate(msgs):
                if m.role != "assistant" or i == 0:
                    continue
                history = [(x.role, x.content) for x in msgs[: i - 1]]
                self._replies[cache_key(provider_id, model, history, msgs[i - 1].content)] = m.content

    @classmethod
    def from_run(cls, run_dir: str | Path) -> "ReplayProvider":
        manifest = json.loads((Path(run_dir) / "manifest.json").read_text("utf-8"))
        return cls(TranscriptStore(run_dir), manifest["provider"], manifest["model"])

    def __len__(self):
        return len(self._replies)

    def lookup(self, history, message) -> str:
        key = cache_key(self.provider_id, self.model, history, message)
        try:
            return self._replies[key]
        except KeyError:
            raise ReplayMissError(f"no recorded reply for key {key[:12]}") from None

    def complete(self, messages, intent) -> str:
        self.calls += 1
        history = [(m.role, m.content) for m in messages[:-1]]
        return self.lookup(history, messages[-1].content)


class Gateway:
    """Session bookkeeping, caching and transcript persistence around one provider."""

    def __init__(self, provider: Provider, cache: ReplyCache | None = None,
                 store: TranscriptStore | None = None, system_prompt: str | None = None):
        self.provider = provider
        self.cache = cache
        self.store = store
        self.system_prompt = system_prompt
        self.provider_calls = 0
        self.cache_hits = 0
        self._lock = threading.Lock()

    @property
    def provider_id(self) -> str:
        return self.provider.provider_id

    @property
    def model(self) -> str:
        return self.provider.model

    def open(self, **metadata) -> ChatTranscript:
        meta = {"provider": self.provider_id, "model": self.model, **metadata,
                "served_by": type(self.provider).__name__,
                "opened": datetime.now(timezone.utc).isoformat()}
        t = ChatTranscript(metadata=meta)
        if self.system_prompt:
            t.messages.append(ChatMessage("system", self.system_prompt))
        return t

    def send(self, session: ChatTranscript, message: str, intent: QueryIntent) -> str:
        if session.closed:
            raise GatewayError("session is closed")
        if not message:
            raise ValueError("message must be non-empty")
        history = session.history()
        key = cache_key(self.provider_id, self.model, history, message)
        reply = self.cache.get(key) if self.cache is not None else None
        if reply is not None:
            with self._lock:
                self.cache_hits += 1
        else:
            with self._lock:
                self.provider_calls += 1
            msgs = session.messages + [ChatMessage("user", message)]
            try:
                reply = self.provider.complete(msgs, intent)
            except GatewayError:
                raise
            except Exception as exc:  # provider bugs surface as gateway failures
                raise GatewayError(f"{type(exc).__name__}: {exc}") from exc
            if not reply or not reply.strip():
                raise EmptyReplyError("provider returned an empty reply")
            if self.cache is not None:
                self.cache.put(key, reply)
        session.messages.append(ChatMessage("user", message))
        session.messages.append(ChatMessage("assistant", reply))
        session.intents.append(intent.to_dict())
        return reply

    def close(self, session: ChatTranscript) -> str:
        session.closed = True
        session.metadata["closed"] = datetime.now(timezone.utc).isoformat()
        if self.store is not None:
            return self.store.save(session)
        return session.ref()
