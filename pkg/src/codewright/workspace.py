"""Sandboxed project workspaces: pristine baseline, commands, diffs, reset.

Two drivers sit behind one interface: a local-directory sandbox used for
fixtures and tests, and a container driver that shells out to the local
container runtime for benchmark images. A workspace always knows its
pristine baseline and can be reset to it; diff application is atomic
(all hunks apply, or the tree is rolled back).
"""

from __future__ import annotations

import hashlib
import logging
import os
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import difftools
from .errors import HunkApplyError, PathEscapeError, WorkspaceError

logger = logging.getLogger(__name__)

STREAM_CAP = 10_000
TRUNCATION_MARKER = "…[output truncated]"
KILL_EXIT_STATUS = -9
WORKSPACE_PLACEHOLDER = "<workspace>"

# Junk that never counts as project content (fingerprints, snapshots).
JUNK_DIR_NAMES = {"__pycache__", ".git", ".pytest_cache", ".hypothesis", "node_modules"}
JUNK_FILE_NAMES = {"coverage.json", ".coverage", "_linecov_runner.py"}
JUNK_SUFFIXES = (".pyc", ".pyo", ".orig", ".rej")


@dataclass
class WorkspaceSpec:
    """Where a project lives and how to prepare it."""

    source_dir: str | None = None
    image: str | None = None
    image_root: str | None = None
    setup_commands: list[str] = field(default_factory=list)
    env: dict[str, str] = field(default_factory=dict)
    default_timeout: float = 120.0

    def __post_init__(self):
        has_dir = self.source_dir is not None
        has_image = self.image is not None
        if has_dir == has_image:
            raise WorkspaceError("exactly one of source_dir / image must be set")
        if has_image and not self.image_root:
            raise WorkspaceError("container source needs image_root")
        if self.default_timeout <= 0:
            raise WorkspaceError("default_timeout must be positive")

    def to_dict(self) -> dict:
        return {
            "source_dir": self.source_dir,
            "image": self.image,
            "image_root": self.image_root,
            "setup_commands": list(self.setup_commands),
            "env": dict(self.env),
            "default_timeout": self.default_timeout,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WorkspaceSpec":
        return cls(
            source_dir=data.get("source_dir"),
            image=data.get("image"),
            image_root=data.get("image_root"),
            setup_commands=list(data.get("setup_commands", [])),
            env=dict(data.get("env", {})),
            default_timeout=float(data.get("default_timeout", 120.0)),
        )


@dataclass
class CommandResult:
    """Captured outcome of one shell command."""

    exit_code: int
    stdout: str
    stderr: str
    duration: float
    timed_out: bool = False

    def to_dict(self) -> dict:
        return {
            "exit_code": self.exit_code,
            "stdout": self.stdout,
            "stderr": self.stderr,
            "duration": self.duration,
            "timed_out": self.timed_out,
        }


@dataclass
class FailedHunk:
    file: str
    hunk_header: str
    reason: str = ""


@dataclass
class ApplyReport:
    """Result of applying a composite diff to the pristine tree."""

    applied: bool
    failed_hunks: list[FailedHunk] = field(default_factory=list)
    resulting_fingerprint: str = ""


def _is_junk(rel_parts: tuple[str, ...]) -> bool:
    if any(p in JUNK_DIR_NAMES for p in rel_parts[:-1]):
        return True
    name = rel_parts[-1]
    if name in JUNK_FILE_NAMES or name in JUNK_DIR_NAMES:
        return True
    return name.endswith(JUNK_SUFFIXES)


def _cap_stream(text: str) -> str:
    if len(text) <= STREAM_CAP:
        return text
    return text[:STREAM_CAP] + TRUNCATION_MARKER


class Workspace:
    """Driver-independent surface; see LocalWorkspace / ContainerWorkspace."""

    spec: WorkspaceSpec
    baseline_fingerprint: str

    def run_command(self, command: str, timeout: float | None = None) -> CommandResult:
        raise NotImplementedError

    def read_tree(self) -> dict[str, str]:
        raise NotImplementedError

    def write_file(self, path: str, content: str):
        raise NotImplementedError

    def read_file(self, path: str, line_range: tuple[int, int] | None = None) -> str:
        raise NotImplementedError

    def delete_file(self, path: str):
        raise NotImplementedError

    def reset(self):
        raise NotImplementedError

    def close(self):
        raise NotImplementedError

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    # -- shared behavior ------------------------------------------------------

    def fingerprint(self) -> str:
        """Content hash over tracked files; identity of a tree state."""
        digest = hashlib.sha256()
        tree = self.read_tree()
        for path in sorted(tree):
            digest.update(path.encode())
            digest.update(b"\0")
            digest.update(hashlib.sha256(tree[path].encode()).digest())
        return digest.hexdigest()

    def snapshot_diff(self) -> str:
        """Unified diff of the current tree against the pristine baseline."""
        return difftools.diff_trees(self._baseline_tree(), self.read_tree())

    def _baseline_tree(self) -> dict[str, str]:
        raise NotImplementedError

    def apply_diffs(self, composite: str) -> ApplyReport:
        """Reset to pristine, then apply the composite diff atomically.

        On any hunk failure the tree is rolled back to pristine and the
        report lists the failed hunks.
        """
        self.reset()
        if not composite.strip():
            return ApplyReport(applied=True, resulting_fingerprint=self.baseline_fingerprint)
        try:
            file_diffs = difftools.parse_patch(composite)
        except Exception as exc:
            return ApplyReport(False, [FailedHunk("", "(parse)", str(exc))])
        tree = self._baseline_tree()
        failed: list[FailedHunk] = []
        new_tree = dict(tree)
        for fd in file_diffs:
            try:
                result = difftools.apply_filediff(new_tree.get(fd.path), fd)
            except HunkApplyError as exc:
                failed.append(FailedHunk(fd.path, exc.hunk_header, str(exc)))
                continue
            if result is None:
                new_tree.pop(fd.path, None)
            else:
                new_tree[fd.path] = result
        if failed:
            self.reset()
            return ApplyReport(False, failed, self.baseline_fingerprint)
        for path, content in new_tree.items():
            if tree.get(path) != content:
                self.write_file(path, content)
        for path in tree:
            if path not in new_tree:
                self.delete_file(path)
        return ApplyReport(True, [], self.fingerprint())


class LocalWorkspace(Workspace):
    """Directory-backed sandbox: the source is copied to a working tree and
    a second pristine copy backs resets."""

    def __init__(self, spec: WorkspaceSpec):
        if spec.source_dir is None:
            raise WorkspaceError("LocalWorkspace needs a directory source")
        source = Path(spec.source_dir)
        if not source.is_dir():
            raise WorkspaceError(f"missing source directory: {spec.source_dir}")
        self.spec = spec
        self._tmp = Path(tempfile.mkdtemp(prefix="cw-ws-"))
        self.root = self._tmp / "work"
        self._pristine = self._tmp / "pristine"
        shutil.copytree(source, self.root)
        self._shim_dir = self._tmp / "bin"
        self._shim_dir.mkdir()
        (self._shim_dir / "python").symlink_to(sys.executable)
        for command in spec.setup_commands:
            result = self.run_command(command)
            if result.exit_code != 0:
                detail = result.stderr or result.stdout
                shutil.rmtree(self._tmp, ignore_errors=True)
                raise WorkspaceError(
                    f"setup command failed ({result.exit_code}): {command!r}: {detail[:500]}"
                )
        shutil.copytree(self.root, self._pristine)
        self.baseline_fingerprint = self.fingerprint()

    def close(self):
        shutil.rmtree(self._tmp, ignore_errors=True)

    def _env(self) -> dict[str, str]:
        env = dict(os.environ)
        env["PATH"] = f"{self._shim_dir}{os.pathsep}" + env.get("PATH", "")
        env["PYTHONDONTWRITEBYTECODE"] = "1"
        env.update(self.spec.env)
        return env

    def _sanitize(self, text: str) -> str:
        return text.replace(str(self.root), WORKSPACE_PLACEHOLDER)

    def run_command(self, command: str, timeout: float | None = None) -> CommandResult:
        limit = timeout if timeout is not None else self.spec.default_timeout
        start = time.monotonic()
        try:
            proc = subprocess.run(
                command,
                shell=True,
                cwd=self.root,
                env=self._env(),
                capture_output=True,
                text=True,
                errors="replace",
                timeout=limit,
            )
            duration = time.monotonic() - start
            return CommandResult(
                proc.returncode,
                _cap_stream(self._sanitize(proc.stdout)),
                _cap_stream(self._sanitize(proc.stderr)),
                duration,
            )
        except subprocess.TimeoutExpired as exc:
            duration = time.monotonic() - start
            out = exc.stdout.decode(errors="replace") if isinstance(exc.stdout, bytes) else (exc.stdout or "")
            err = exc.stderr.decode(errors="replace") if isinstance(exc.stderr, bytes) else (exc.stderr or "")
            return CommandResult(
                KILL_EXIT_STATUS,
                _cap_stream(self._sanitize(out)),
                _cap_stream(self._sanitize(err)),
                duration,
                timed_out=True,
            )
        except OSError as exc:
            raise WorkspaceError(f"command transport failure: {exc}") from exc

    def _resolve(self, path: str) -> Path:
        candidate = (self.root / path).resolve()
        root = self.root.resolve()
        if candidate != root and root not in candidate.parents:
            raise PathEscapeError(f"path escapes the project root: {path!r}")
        return candidate

    def read_file(self, path: str, line_range: tuple[int, int] | None = None) -> str:
        target = self._resolve(path)
        if not target.is_file():
            raise WorkspaceError(f"no such file: {path!r}")
        content = target.read_text(errors="replace")
        if line_range is None:
            return content
        start, end = line_range
        lines = content.splitlines()
        return "\n".join(lines[max(start - 1, 0) : end])

    def write_file(self, path: str, content: str):
        target = self._resolve(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(content)

    def delete_file(self, path: str):
        target = self._resolve(path)
        if target.is_file():
            target.unlink()

    def _walk(self, base: Path) -> dict[str, str]:
        tree: dict[str, str] = {}
        for file in sorted(base.rglob("*")):
            if not file.is_file() or file.is_symlink():
                continue
            rel = file.relative_to(base)
            if _is_junk(rel.parts):
                continue
            tree[str(rel)] = file.read_text(errors="replace")
        return tree

    def read_tree(self) -> dict[str, str]:
        return self._walk(self.root)

    def _baseline_tree(self) -> dict[str, str]:
        return self._walk(self._pristine)

    def reset(self):
        shutil.rmtree(self.root)
        shutil.copytree(self._pristine, self.root)


class ContainerWorkspace(Workspace):
    """Container-backed driver speaking the container runtime CLI.

    The project root inside the image is tarred out at open time to back
    resets; commands execute inside the running container.
    """

    def __init__(self, spec: WorkspaceSpec, runtime: str = "docker"):
        if spec.image is None:
            raise WorkspaceError("ContainerWorkspace needs an image source")
        self.spec = spec
        self.runtime = runtime
        self.image_root = spec.image_root.rstrip("/")
        self._tmp = Path(tempfile.mkdtemp(prefix="cw-ctr-"))
        run = subprocess.run(
            [runtime, "run", "-d", "--entrypoint", "sh", spec.image, "-c", "sleep infinity"],
            capture_output=True,
            text=True,
        )
        if run.returncode != 0:
            raise WorkspaceError(f"container start failed: {run.stderr[:500]}")
        self.container_id = run.stdout.strip()
        try:
            for command in spec.setup_commands:
                result = self.run_command(command)
                if result.exit_code != 0:
                    raise WorkspaceError(
                        f"setup command failed ({result.exit_code}): {command!r}: "
                        f"{(result.stderr or result.stdout)[:500]}"
                    )
            self._baseline_tar = self._tmp / "baseline.tar"
            cp = subprocess.run(
                [runtime, "cp", f"{self.container_id}:{self.image_root}", str(self._tmp / "baseline")],
                capture_output=True,
                text=True,
            )
            if cp.returncode != 0:
                raise WorkspaceError(f"baseline extraction failed: {cp.stderr[:500]}")
            self._baseline_dir = self._tmp / "baseline"
            self.baseline_fingerprint = self.fingerprint()
        except Exception:
            self.close()
            raise

    def close(self):
        subprocess.run([self.runtime, "rm", "-f", self.container_id], capture_output=True)
        shutil.rmtree(self._tmp, ignore_errors=True)

    def _sanitize(self, text: str) -> str:
        return text.replace(self.image_root, WORKSPACE_PLACEHOLDER)

    def run_command(self, command: str, timeout: float | None = None) -> CommandResult:
        limit = timeout if timeout is not None else self.spec.default_timeout
        env_args: list[str] = []
        for key, value in {**self.spec.env, "PYTHONDONTWRITEBYTECODE": "1"}.items():
            env_args += ["-e", f"{key}={value}"]
        argv = [self.runtime, "exec", "-w", self.image_root, *env_args, self.container_id, "sh", "-c", command]
        start = time.monotonic()
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, errors="replace", timeout=limit)
        except subprocess.TimeoutExpired as exc:
            duration = time.monotonic() - start
            out = exc.stdout.decode(errors="replace") if isinstance(exc.stdout, bytes) else (exc.stdout or "")
            err = exc.stderr.decode(errors="replace") if isinstance(exc.stderr, bytes) else (exc.stderr or "")
            return CommandResult(KILL_EXIT_STATUS, _cap_stream(out), _cap_stream(err), duration, timed_out=True)
        duration = time.monotonic() - start
        return CommandResult(
            proc.returncode,
            _cap_stream(self._sanitize(proc.stdout)),
            _cap_stream(self._sanitize(proc.stderr)),
            duration,
        )

    def _check_rel(self, path: str):
        parts = path.replace("\\", "/").split("/")
        if path.startswith("/") or ".." in parts:
            raise PathEscapeError(f"path escapes the project root: {path!r}")

    def read_file(self, path: str, line_range: tuple[int, int] | None = None) -> str:
        self._check_rel(path)
        result = self.run_command(f"cat {subprocess.list2cmdline([path])}")
        if result.exit_code != 0:
            raise WorkspaceError(f"no such file: {path!r}")
        if line_range is None:
            return result.stdout
        start, end = line_range
        return "\n".join(result.stdout.splitlines()[max(start - 1, 0) : end])

    def write_file(self, path: str, content: str):
        self._check_rel(path)
        staged = self._tmp / "stage"
        target = staged / path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(content)
        parent = os.path.dirname(path)
        if parent:
            self.run_command(f"mkdir -p {subprocess.list2cmdline([parent])}")
        cp = subprocess.run(
            [self.runtime, "cp", str(target), f"{self.container_id}:{self.image_root}/{path}"],
            capture_output=True,
            text=True,
        )
        if cp.returncode != 0:
            raise WorkspaceError(f"write failed for {path!r}: {cp.stderr[:300]}")

    def delete_file(self, path: str):
        self._check_rel(path)
        self.run_command(f"rm -f {subprocess.list2cmdline([path])}")

    def read_tree(self) -> dict[str, str]:
        listing = self.run_command("find . -type f | sort")
        tree: dict[str, str] = {}
        for raw in listing.stdout.splitlines():
            rel = raw[2:] if raw.startswith("./") else raw
            if not rel or _is_junk(tuple(rel.split("/"))):
                continue
            tree[rel] = self.read_file(rel)
        return tree

    def _baseline_tree(self) -> dict[str, str]:
        tree: dict[str, str] = {}
        for file in sorted(self._baseline_dir.rglob("*")):
            if not file.is_file():
                continue
            rel = file.relative_to(self._baseline_dir)
            if _is_junk(rel.parts):
                continue
            tree[str(rel)] = file.read_text(errors="replace")
        return tree

    def reset(self):
        # Wipe then restore from the extracted baseline.
        wipe = self.run_command("find . -mindepth 1 -delete")
        if wipe.exit_code != 0:
            raise WorkspaceError(f"reset wipe failed: {wipe.stderr[:300]}")
        cp = subprocess.run(
            [self.runtime, "cp", f"{self._baseline_dir}/.", f"{self.container_id}:{self.image_root}"],
            capture_output=True,
            text=True,
        )
        if cp.returncode != 0:
            raise WorkspaceError(f"reset restore failed: {cp.stderr[:300]}")


def open_workspace(spec: WorkspaceSpec) -> Workspace:
    """Open the driver matching the spec's source variant."""
    if spec.source_dir is not None:
        return LocalWorkspace(spec)
    return ContainerWorkspace(spec)
