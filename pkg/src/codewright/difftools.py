"""Unified-diff engine: parse, apply, normalize, generate, and compose.

All diffs are workspace-relative with ``a/``/``b/`` path prefixes and are
exchanged as plain text. Application uses exact context matching at the
stated position with a whitespace-tolerant second pass, then fails; there
is no fuzzy offset search.

Composition stacks an ordered list of patches into one patch against the
pristine baseline without needing the baseline files: every line a patch
asserts (context or deletion) pins the corresponding baseline line, and
later patches are verified against pinned content or against lines earlier
patches introduced. Content disagreement is a conflict naming both diffs.
"""

from __future__ import annotations

import difflib
import itertools
import re
from dataclasses import dataclass, field

from .errors import DiffConflictError, DiffParseError, HunkApplyError

DEV_NULL = "/dev/null"
NO_NEWLINE_MARKER = "\\ No newline at end of file"
CONTEXT_LINES = 3

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


@dataclass
class Hunk:
    """One ``@@`` block; line tags are ' ', '-', or '+'."""

    old_start: int
    old_len: int
    new_start: int
    new_len: int
    lines: list[tuple[str, str]] = field(default_factory=list)

    def old_lines(self) -> list[str]:
        return [text for tag, text in self.lines if tag in " -"]

    def new_lines(self) -> list[str]:
        return [text for tag, text in self.lines if tag in " +"]

    def header(self) -> str:
        return f"@@ -{self.old_start},{self.old_len} +{self.new_start},{self.new_len} @@"


@dataclass
class FileDiff:
    """All hunks of a patch that touch one file."""

    old_path: str | None
    new_path: str | None
    hunks: list[Hunk] = field(default_factory=list)

    @property
    def path(self) -> str:
        p = self.new_path if self.new_path is not None else self.old_path
        assert p is not None
        return p

    @property
    def is_new_file(self) -> bool:
        return self.old_path is None

    @property
    def is_deleted_file(self) -> bool:
        return self.new_path is None


def _clean_path(raw: str) -> str | None:
    raw = raw.split("\t")[0].strip()
    if raw == DEV_NULL:
        return None
    if raw.startswith("a/") or raw.startswith("b/"):
        raw = raw[2:]
    return raw


def parse_patch(text: str) -> list[FileDiff]:
    """Parse unified-diff text into FileDiff records.

    Tolerates ``diff --git``/``index`` noise lines between file sections.
    Raises DiffParseError with the offending patch line number.
    """
    files: list[FileDiff] = []
    lines = text.splitlines()
    i = 0
    current: FileDiff | None = None
    while i < len(lines):
        line = lines[i]
        if line.startswith("--- "):
            if i + 1 >= len(lines) or not lines[i + 1].startswith("+++ "):
                raise DiffParseError("'---' header without '+++' line", i + 1)
            old_path = _clean_path(line[4:])
            new_path = _clean_path(lines[i + 1][4:])
            if old_path is None and new_path is None:
                raise DiffParseError("both sides of file header are /dev/null", i + 1)
            current = FileDiff(old_path=old_path, new_path=new_path)
            files.append(current)
            i += 2
            continue
        if line.startswith("@@"):
            m = _HUNK_RE.match(line)
            if m is None:
                raise DiffParseError(f"malformed hunk header {line!r}", i + 1)
            if current is None:
                raise DiffParseError("hunk before any file header", i + 1)
            old_start = int(m.group(1))
            old_len = int(m.group(2)) if m.group(2) is not None else 1
            new_start = int(m.group(3))
            new_len = int(m.group(4)) if m.group(4) is not None else 1
            hunk = Hunk(old_start, old_len, new_start, new_len)
            i += 1
            seen_old = seen_new = 0
            while seen_old < old_len or seen_new < new_len:
                if i >= len(lines):
                    raise DiffParseError("hunk body ends early", i)
                body = lines[i]
                if body.startswith(NO_NEWLINE_MARKER[:1]) and body.strip() == NO_NEWLINE_MARKER:
                    i += 1
                    continue
                if body == "":
                    # Some tools emit bare empty lines for empty context lines.
                    tag, payload = " ", ""
                else:
                    tag, payload = body[0], body[1:]
                if tag == " ":
                    seen_old += 1
                    seen_new += 1
                elif tag == "-":
                    seen_old += 1
                elif tag == "+":
                    seen_new += 1
                else:
                    raise DiffParseError(f"unexpected line tag {tag!r}", i + 1)
                hunk.lines.append((tag, payload))
                i += 1
            if seen_old != old_len or seen_new != new_len:
                raise DiffParseError(f"hunk body does not match header {hunk.header()}", i)
            current.hunks.append(hunk)
            continue
        # Noise between sections (diff --git, index, mode lines, trailing marker).
        i += 1
    if not files and text.strip():
        raise DiffParseError("no file headers found", 1)
    return files


def render_patch(files: list[FileDiff]) -> str:
    """Render FileDiff records back to canonical unified-diff text."""
    out: list[str] = []
    for fd in files:
        old = DEV_NULL if fd.old_path is None else f"a/{fd.old_path}"
        new = DEV_NULL if fd.new_path is None else f"b/{fd.new_path}"
        out.append(f"--- {old}")
        out.append(f"+++ {new}")
        for h in fd.hunks:
            out.append(h.header())
            out.extend(tag + text for tag, text in h.lines)
    if not out:
        return ""
    return "\n".join(out) + "\n"


def _ws_equal(a: str, b: str) -> bool:
    return a.split() == b.split()


def _apply_hunks(lines: list[str], hunks: list[Hunk], path: str, tolerant: bool) -> list[str]:
    cmp = _ws_equal if tolerant else (lambda a, b: a == b)
    out: list[str] = []
    cursor = 0  # 0-based index into lines
    for h in hunks:
        # For old_len == 0 the header names the line *before* the insertion.
        start = h.old_start - 1 if h.old_len > 0 else h.old_start
        if start < cursor or start > len(lines):
            raise HunkApplyError(path, h.header(), "hunk position out of range")
        out.extend(lines[cursor:start])
        cursor = start
        for tag, text in h.lines:
            if tag == "+":
                out.append(text)
                continue
            if cursor >= len(lines):
                raise HunkApplyError(path, h.header(), "file ends before hunk does")
            if not cmp(lines[cursor], text):
                raise HunkApplyError(
                    path,
                    h.header(),
                    f"context mismatch at line {cursor + 1}: expected {text!r}, found {lines[cursor]!r}",
                )
            if tag == " ":
                out.append(lines[cursor])
            cursor += 1
    out.extend(lines[cursor:])
    return out


def apply_filediff(content: str | None, fd: FileDiff) -> str | None:
    """Apply one file's hunks to its content; None means the file is absent.

    Exact context match first, then one whitespace-tolerant retry.
    Returns the new content, or None when the diff deletes the file.
    """
    if fd.is_new_file:
        if content is not None and content != "":
            raise HunkApplyError(fd.path, "(new file)", "target already exists")
        lines = _apply_hunks([], fd.hunks, fd.path, tolerant=False)
        return "\n".join(lines) + "\n" if lines else ""
    if content is None:
        raise HunkApplyError(fd.path, "(file)", "target file is missing")
    lines = content.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    try:
        new_lines = _apply_hunks(lines, fd.hunks, fd.path, tolerant=False)
    except HunkApplyError:
        new_lines = _apply_hunks(lines, fd.hunks, fd.path, tolerant=True)
    if fd.is_deleted_file:
        if new_lines:
            raise HunkApplyError(fd.path, "(delete)", "deletion left content behind")
        return None
    return "\n".join(new_lines) + "\n" if new_lines else ""


# ---------------------------------------------------------------------------
# Diff generation (shared by snapshots and composite emission)
# ---------------------------------------------------------------------------


def _split_lines(content: str) -> list[str]:
    lines = content.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _change_blocks(old: list[str], new: list[str]) -> list[tuple[int, list[str], list[str]]]:
    """Minimal change blocks as (old_start_lineno_1based, old_lines, new_lines)."""
    blocks = []
    matcher = difflib.SequenceMatcher(a=old, b=new, autojunk=False)
    for tag, i1, i2, j1, j2 in matcher.get_opcodes():
        if tag == "equal":
            continue
        blocks.append((i1 + 1, old[i1:i2], new[j1:j2]))
    return blocks


def _emit_hunks(
    blocks: list[tuple[int, list[str], list[str]]],
    context_at,
) -> list[Hunk]:
    """Assemble hunks from change blocks, pulling context via context_at(lineno).

    context_at returns the baseline line content or None when unknown;
    context stops early at unknown lines (legal: hunks may carry fewer
    than CONTEXT_LINES context rows).
    """
    if not blocks:
        return []
    # Group blocks whose fully-known gap is small enough to share context.
    groups: list[list[tuple[int, list[str], list[str]]]] = [[blocks[0]]]
    for block in blocks[1:]:
        prev = groups[-1][-1]
        gap_start = prev[0] + len(prev[1])
        gap_len = block[0] - gap_start
        gap_known = all(context_at(n) is not None for n in range(gap_start, block[0]))
        if gap_len <= 2 * CONTEXT_LINES and gap_known:
            groups[-1].append(block)
        else:
            groups.append([block])
    hunks: list[Hunk] = []
    shift = 0  # cumulative new-minus-old lines from earlier hunks
    for group in groups:
        first_start = group[0][0]
        # Leading context: walk backwards while lines are known.
        lead: list[str] = []
        n = first_start - 1
        while n >= 1 and len(lead) < CONTEXT_LINES:
            text = context_at(n)
            if text is None:
                break
            lead.insert(0, text)
            n -= 1
        lines: list[tuple[str, str]] = [(" ", t) for t in lead]
        old_start = first_start - len(lead)
        cursor = first_start
        for b_start, b_old, b_new in group:
            for g in range(cursor, b_start):
                gap_text = context_at(g)
                assert gap_text is not None
                lines.append((" ", gap_text))
            lines.extend(("-", t) for t in b_old)
            lines.extend(("+", t) for t in b_new)
            cursor = b_start + len(b_old)
        trail_n = cursor
        trailing = 0
        while trailing < CONTEXT_LINES:
            text = context_at(trail_n)
            if text is None:
                break
            lines.append((" ", text))
            trail_n += 1
            trailing += 1
        old_len = sum(1 for tag, _ in lines if tag in " -")
        new_len = sum(1 for tag, _ in lines if tag in " +")
        header_old_start = old_start if old_len > 0 else old_start - 1
        new_start = old_start + shift if new_len > 0 else old_start + shift - 1
        hunks.append(Hunk(header_old_start, old_len, new_start, new_len, lines))
        shift += new_len - old_len
    return hunks


def diff_contents(old: str | None, new: str | None, path: str) -> str:
    """Unified diff between two versions of one file; '' when identical."""
    if old == new:
        return ""
    if old is None:
        new_lines = _split_lines(new or "")
        if not new_lines:
            return render_patch([FileDiff(None, path, [])])
        hunk = Hunk(0, 0, 1, len(new_lines), [("+", t) for t in new_lines])
        return render_patch([FileDiff(None, path, [hunk])])
    if new is None:
        old_lines = _split_lines(old)
        hunk = Hunk(1 if old_lines else 0, len(old_lines), 0, 0, [("-", t) for t in old_lines])
        return render_patch([FileDiff(path, None, [hunk])])
    old_lines = _split_lines(old)
    new_lines = _split_lines(new)
    blocks = _change_blocks(old_lines, new_lines)

    def context_at(n: int) -> str | None:
        if 1 <= n <= len(old_lines):
            return old_lines[n - 1]
        return None

    hunks = _emit_hunks(blocks, context_at)
    if not hunks:
        return ""
    return render_patch([FileDiff(path, path, hunks)])


def diff_trees(old_tree: dict[str, str], new_tree: dict[str, str]) -> str:
    """Unified diff between two path→content maps, path-sorted."""
    sections: list[str] = []
    for path in sorted(set(old_tree) | set(new_tree)):
        section = diff_contents(old_tree.get(path), new_tree.get(path), path)
        if section:
            sections.append(section)
    return "".join(sections)


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------


@dataclass
class _Edit:
    """Replace baseline lines [start, start+old_len) with `new` lines."""

    start: int
    old_len: int
    new: list[str]
    origin: str

    @property
    def end(self) -> int:
        return self.start + self.old_len


class _VirtualFile:
    """Partially-known baseline file plus an ordered set of edits."""

    def __init__(self, path: str, exists: bool = True):
        self.path = path
        self.exists_in_baseline = exists
        self.deleted = False
        self.known: dict[int, str] = {}
        self.known_origin: dict[int, str] = {}
        self.edits: list[_Edit] = []

    # -- coordinate helpers -------------------------------------------------

    def _iter_current(self):
        """Yield one descriptor per current-file line, from line 1 upward.

        Descriptors are ('gap', baseline_lineno, None) for untouched
        baseline lines and ('edit', edit, offset) for lines an edit
        introduced. The trailing baseline gap is unbounded.
        """
        base = 1
        for edit in self.edits:
            while base < edit.start:
                yield ("gap", base, None)
                base += 1
            for off in range(len(edit.new)):
                yield ("edit", edit, off)
            base = edit.end
        while True:
            yield ("gap", base, None)
            base += 1

    def _segments(self, cur_start: int, length: int):
        return list(itertools.islice(self._iter_current(), cur_start - 1, cur_start - 1 + length))

    def _locate_point(self, cur_point: int):
        """Descriptor of the current line a pure insertion lands before."""
        return next(itertools.islice(self._iter_current(), cur_point - 1, cur_point))

    # -- mutation -----------------------------------------------------------

    def _pin(self, lineno: int, text: str, diff_id: str):
        seen = self.known.get(lineno)
        if seen is None:
            self.known[lineno] = text
            self.known_origin[lineno] = diff_id
        elif seen != text:
            raise DiffConflictError(
                self.path,
                diff_id,
                self.known_origin.get(lineno),
                f"baseline line {lineno} asserted as {text!r} vs {seen!r}",
            )

    def apply_hunk(self, hunk: Hunk, cur_start: int, diff_id: str):
        """Fold one hunk into the edit set; cur_start is the current-file
        line the hunk's old span begins at (for inserts: the line the new
        content lands before)."""
        old = hunk.old_lines()
        new = hunk.new_lines()
        if hunk.old_len == 0:
            where = self._locate_point(cur_start)
            if where[0] == "gap":
                merged = _Edit(where[1], 0, list(new), diff_id)
                self._insert_edit(merged, absorbed=[])
            else:
                _, edit, off = where
                merged = _Edit(edit.start, edit.old_len, edit.new[:off] + list(new) + edit.new[off:], diff_id)
                self._insert_edit(merged, absorbed=[edit])
            return
        segs = self._segments(cur_start, hunk.old_len)
        # Verify asserted old lines against pinned baseline / prior edits.
        for (kind, a, b), text in zip(segs, old):
            if kind == "gap":
                self._pin(a, text, diff_id)
            else:
                edit, off = a, b
                if edit.new[off] != text:
                    raise DiffConflictError(
                        self.path,
                        diff_id,
                        edit.origin,
                        f"line introduced by {edit.origin!r} asserted as {text!r} vs {edit.new[off]!r}",
                    )
        first, last = segs[0], segs[-1]
        prefix: list[str] = []
        suffix: list[str] = []
        absorbed: list[_Edit] = []
        if first[0] == "gap":
            b_start = first[1]
        else:
            edit, off = first[1], first[2]
            b_start = edit.start
            prefix = edit.new[:off]
            absorbed.append(edit)
        if last[0] == "gap":
            b_end = last[1] + 1
        else:
            edit, off = last[1], last[2]
            b_end = edit.end
            suffix = edit.new[off + 1 :]
            if edit not in absorbed:
                absorbed.append(edit)
        for edit in self.edits:
            if edit in absorbed:
                continue
            if edit.start >= b_start and edit.end <= b_end:
                absorbed.append(edit)
        merged = _Edit(b_start, b_end - b_start, prefix + list(new) + suffix, diff_id)
        self._insert_edit(merged, absorbed)

    def _insert_edit(self, merged: _Edit, absorbed: list[_Edit]):
        kept = [e for e in self.edits if e not in absorbed]
        for e in kept:
            overlap = not (e.end <= merged.start or merged.end <= e.start)
            # Zero-length edits at the boundary are adjacent, not overlapping.
            if overlap and e.old_len == 0 and (e.start == merged.start or e.start == merged.end):
                overlap = False
            if overlap and merged.old_len == 0 and (merged.start == e.start or merged.start == e.end):
                overlap = False
            if overlap:
                raise DiffConflictError(self.path, merged.origin, e.origin, "overlapping edits")
        kept.append(merged)
        kept.sort(key=lambda e: (e.start, e.old_len > 0))
        self.edits = kept


class PatchSet:
    """Ordered composition of patches into one baseline-relative patch."""

    def __init__(self):
        self._files: dict[str, _VirtualFile] = {}
        self._order: list[str] = []

    def _file(self, path: str, exists: bool = True) -> _VirtualFile:
        vf = self._files.get(path)
        if vf is None:
            vf = _VirtualFile(path, exists=exists)
            self._files[path] = vf
            self._order.append(path)
        return vf

    def add_patch(self, diff_id: str, text: str):
        for fd in parse_patch(text):
            path = fd.path
            if fd.is_new_file:
                new_lines: list[str] = []
                for hunk in fd.hunks:
                    new_lines.extend(hunk.new_lines())
                vf = self._files.get(path)
                if vf is None:
                    vf = self._file(path, exists=False)
                    vf.edits = [_Edit(1, 0, new_lines, diff_id)]
                elif vf.deleted and vf.exists_in_baseline:
                    # delete + recreate collapses to replacing the whole file
                    old_span = vf.edits[0]
                    vf.edits = [_Edit(old_span.start, old_span.old_len, new_lines, diff_id)]
                    vf.deleted = False
                elif vf.deleted:
                    vf.edits = [_Edit(1, 0, new_lines, diff_id)]
                    vf.deleted = False
                else:
                    origin = vf.edits[0].origin if vf.edits else diff_id
                    raise DiffConflictError(path, diff_id, origin, "file created twice")
                continue
            vf = self._file(path)
            if vf.deleted:
                raise DiffConflictError(path, diff_id, None, "file was deleted earlier in the stack")
            if not vf.exists_in_baseline and not vf.edits:
                raise DiffConflictError(path, diff_id, None, "patching a file that does not exist yet")
            delta = 0
            for hunk in fd.hunks:
                cur_start = (hunk.old_start if hunk.old_len > 0 else hunk.old_start + 1) + delta
                vf.apply_hunk(hunk, cur_start, diff_id)
                delta += hunk.new_len - hunk.old_len
            if fd.is_deleted_file:
                remaining = [e for e in vf.edits if e.new]
                if remaining or not vf.edits:
                    raise DiffConflictError(path, diff_id, None, "deletion hunks did not cover the file")
                vf.deleted = True

    def render(self) -> str:
        sections: list[str] = []
        for path in self._order:
            vf = self._files[path]
            section = self._render_file(vf)
            if section:
                sections.append(section)
        return "".join(sections)

    def _render_file(self, vf: _VirtualFile) -> str:
        if not vf.exists_in_baseline:
            if vf.deleted:
                return ""  # created then deleted within the stack: no-op
            content = [line for e in vf.edits for line in e.new]
            if not vf.edits:
                return ""
            if not content:
                return render_patch([FileDiff(None, vf.path, [])])
            hunk = Hunk(0, 0, 1, len(content), [("+", t) for t in content])
            return render_patch([FileDiff(None, vf.path, [hunk])])
        if vf.deleted:
            span = vf.edits[0]
            old_lines = [vf.known[n] for n in range(span.start, span.end)]
            hunk = Hunk(1 if old_lines else 0, len(old_lines), 0, 0, [("-", t) for t in old_lines])
            return render_patch([FileDiff(vf.path, None, [hunk])])
        blocks: list[tuple[int, list[str], list[str]]] = []
        for e in vf.edits:
            old_lines = [vf.known[n] for n in range(e.start, e.end)]
            for b_start, b_old, b_new in _change_blocks(old_lines, e.new):
                blocks.append((e.start + b_start - 1, b_old, b_new))
        blocks.sort(key=lambda b: b[0])
        blocks = [b for b in blocks if b[1] or b[2]]
        if not blocks:
            return ""
        hunks = _emit_hunks(blocks, lambda n: vf.known.get(n) if n >= 1 else None)
        old_path = vf.path
        new_path = None if vf.deleted else vf.path
        return render_patch([FileDiff(old_path, new_path, hunks)])


def compose_patches(entries: list[tuple[str, str]]) -> str:
    """Compose ordered (diff_id, patch_text) entries into one patch.

    The result applied to the pristine baseline equals applying each entry
    sequentially. Empty input composes to the empty patch.
    """
    ps = PatchSet()
    for diff_id, text in entries:
        if text.strip():
            ps.add_patch(diff_id, text)
    return ps.render()


def normalize_patch(text: str) -> str:
    """Canonical form of a patch: parsed, re-minimized, re-rendered."""
    if not text.strip():
        return ""
    return compose_patches([("normalize", text)])


def apply_patch_to_tree(tree: dict[str, str], text: str) -> dict[str, str]:
    """Apply a full patch to a path→content map, returning a new map."""
    new_tree = dict(tree)
    if not text.strip():
        return new_tree
    for fd in parse_patch(text):
        result = apply_filediff(new_tree.get(fd.path), fd)
        if result is None:
            new_tree.pop(fd.path, None)
        else:
            new_tree[fd.path] = result
    return new_tree


def patched_paths(text: str) -> list[str]:
    """Paths a patch touches, in first-appearance order."""
    seen: list[str] = []
    for fd in parse_patch(text) if text.strip() else []:
        if fd.path not in seen:
            seen.append(fd.path)
    return seen


def added_lines_by_file(text: str) -> dict[str, list[tuple[int, str]]]:
    """Post-image line numbers and contents of every '+' line, per file."""
    result: dict[str, list[tuple[int, str]]] = {}
    if not text.strip():
        return result
    for fd in parse_patch(text):
        if fd.is_deleted_file:
            continue
        added = result.setdefault(fd.path, [])
        for h in fd.hunks:
            new_no = h.new_start
            for tag, line in h.lines:
                if tag == "+":
                    added.append((new_no, line))
                    new_no += 1
                elif tag == " ":
                    new_no += 1
    return result
