"""Project documentation memory: ingestion, chunked retrieval, and
inference of project-specific test commands.

The default scorer is lexical so the hermetic suite needs no embedding
service; an HTTP embedding scorer can be plugged in per run.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .llm import ChatMessage, DecodeParams, UsageLedger, chat, extract_fenced_block
from .workspace import Workspace

logger = logging.getLogger(__name__)

CHUNK_SIZE = 1000
CHUNK_OVERLAP = 200

DEFAULT_DOC_GLOBS = [
    "README*",
    "readme*",
    "CONTRIBUTING*",
    "HACKING*",
    "docs/**",
    "doc/**",
    "*.md",
    "*.rst",
    "Makefile",
    "tox.ini",
    "pytest.ini",
    "setup.cfg",
    "pyproject.toml",
    ".github/workflows/*",
]

FRAMEWORK_RUNNERS = {
    "pytest": "python -m pytest -q {files}",
    "unittest": "python -m unittest {files}",
}
DEFAULT_RUNNER = FRAMEWORK_RUNNERS["pytest"]

_TOKEN_RE = re.compile(r"[a-zA-Z0-9_]+")


@dataclass
class DocChunk:
    source: str
    start: int  # char offset, inclusive
    end: int  # char offset, exclusive
    text: str


@dataclass
class DocStore:
    chunks: list[DocChunk] = field(default_factory=list)
    scorer: object = None  # callable(query, chunks) -> list[float]

    def __post_init__(self):
        if self.scorer is None:
            self.scorer = lexical_scorer


def _tokens(text: str) -> list[str]:
    return [t.lower() for t in _TOKEN_RE.findall(text)]


def lexical_scorer(query: str, chunks: list[DocChunk]) -> list[float]:
    """Term-frequency scoring of query tokens against each chunk."""
    query_tokens = set(_tokens(query))
    scores = []
    for chunk in chunks:
        counts = 0
        for token in _tokens(chunk.text):
            if token in query_tokens:
                counts += 1
        scores.append(float(counts))
    return scores


class EmbeddingScorer:
    """Optional scorer speaking a configurable HTTP embedding endpoint."""

    def __init__(self, base_url: str, model: str, api_key: str = ""):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key

    def _embed(self, texts: list[str]) -> list[list[float]]:
        import httpx

        response = httpx.post(
            f"{self.base_url}/embeddings",
            json={"model": self.model, "input": texts},
            headers={"Authorization": f"Bearer {self.api_key}"},
            timeout=60.0,
        )
        response.raise_for_status()
        return [row["embedding"] for row in response.json()["data"]]

    def __call__(self, query: str, chunks: list[DocChunk]) -> list[float]:
        vectors = self._embed([query] + [c.text for c in chunks])
        q = vectors[0]
        scores = []
        for v in vectors[1:]:
            dot = sum(a * b for a, b in zip(q, v))
            nq = sum(a * a for a in q) ** 0.5 or 1.0
            nv = sum(a * a for a in v) ** 0.5 or 1.0
            scores.append(dot / (nq * nv))
        return scores


def _glob_match(path: str, pattern: str) -> bool:
    import fnmatch

    if pattern.endswith("/**"):
        return path.startswith(pattern[:-3] + "/")
    return fnmatch.fnmatch(path, pattern)


def chunk_text(text: str) -> list[tuple[int, int]]:
    """Contiguous (start, end) char spans with the configured overlap."""
    if not text:
        return []
    spans = []
    step = CHUNK_SIZE - CHUNK_OVERLAP
    start = 0
    while True:
        end = min(start + CHUNK_SIZE, len(text))
        spans.append((start, end))
        if end >= len(text):
            break
        start += step
    return spans


def ingest_docs(ws: Workspace, globs: list[str] | None = None, scorer=None) -> DocStore:
    """Chunk README-like files, doc trees, and test/CI configuration."""
    globs = globs if globs is not None else DEFAULT_DOC_GLOBS
    store = DocStore(scorer=scorer)
    tree = ws.read_tree()
    for path in sorted(tree):
        if not any(_glob_match(path, g) for g in globs):
            continue
        content = tree[path]
        for start, end in chunk_text(content):
            store.chunks.append(DocChunk(path, start, end, content[start:end]))
    return store


def retrieve(store: DocStore, query: str, k: int) -> list[DocChunk]:
    """Top-k chunks by scorer; deterministic tie-break by (file, span)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not store.chunks:
        return []
    scores = store.scorer(query, store.chunks)
    ranked = sorted(
        zip(store.chunks, scores),
        key=lambda pair: (-pair[1], pair[0].source, pair[0].start),
    )
    return [chunk for chunk, score in ranked[:k] if score > 0][:k]


@dataclass
class TestCommand:
    """Shell command template; {files} marks where test files are passed."""

    template: str
    source: str  # docs | fallback
    framework: str = "pytest"

    def render(self, files: list[str]) -> str:
        if "{files}" in self.template:
            return self.template.replace("{files}", " ".join(files)).strip()
        return self.template


def fallback_command(framework_hint: str | None) -> TestCommand:
    framework = framework_hint if framework_hint in FRAMEWORK_RUNNERS else "pytest"
    return TestCommand(FRAMEWORK_RUNNERS[framework], "fallback", framework)


def infer_test_command(
    store: DocStore,
    backend,
    description: str = "",
    framework_hint: str | None = None,
    params: DecodeParams | None = None,
    ledger: UsageLedger | None = None,
) -> TestCommand:
    """Ask the backend for the project's test command given retrieved docs.

    Falls back to the detected framework's default runner when the docs are
    silent or the reply is unusable; always returns a nonempty command.
    """
    chunks = retrieve(store, "run tests test suite command " + description, k=3)
    if not chunks:
        return fallback_command(framework_hint)
    doc_blob = "\n---\n".join(f"[{c.source}:{c.start}-{c.end}]\n{c.text}" for c in chunks)
    prompt = (
        "These are excerpts from the project's documentation:\n\n"
        f"{doc_blob}\n\n"
        "Reply with exactly one fenced code block holding the single shell "
        "command that runs the project's tests. If specific test files can "
        "be passed as arguments, mark their position with {files}."
    )
    try:
        text, _ = chat(
            backend,
            [ChatMessage("user", prompt)],
            params or DecodeParams(),
            ledger,
            label="InferTestCommand",
        )
    except Exception as exc:
        logger.warning("test-command inference failed (%s); using fallback", exc)
        return fallback_command(framework_hint)
    block = extract_fenced_block(text)
    command = (block or "").strip()
    if not command or "\n" in command.strip():
        logger.warning("test-command reply malformed; using fallback")
        return fallback_command(framework_hint)
    framework = framework_hint or ("pytest" if "pytest" in command else "generic")
    return TestCommand(command, "docs", framework)
