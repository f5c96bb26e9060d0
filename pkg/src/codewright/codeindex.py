"""Syntactic index over a workspace tree backing the search tools.

Python files are parsed with `ast` into class/function/method units; any
other file (or unparseable Python) degrades to one whole-file snippet
unit. The index is immutable after build and tied to the workspace
fingerprint it was built from.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field

from .errors import StaleIndexError
from .state import CodeLocation, TestLocation
from .workspace import Workspace

RESULT_CAP = 10
TEST_DIR_SEGMENTS = {"test", "tests", "testing"}
TEST_FRAMEWORK_IMPORT_RE = re.compile(r"^\s*(?:import|from)\s+(?:pytest|unittest)\b", re.MULTILINE)


@dataclass
class IndexUnit:
    kind: str  # class | method | function | snippet
    qualified_name: str
    start_line: int
    end_line: int
    parent_class: str | None = None


@dataclass
class CodeIndex:
    units_by_file: dict[str, list[IndexUnit]] = field(default_factory=dict)
    test_files: list[str] = field(default_factory=list)
    fingerprint: str = ""
    _contents: dict[str, str] = field(default_factory=dict, repr=False)

    def check_fresh(self, ws: Workspace):
        """Refuse queries when the workspace tree moved on without a rebuild."""
        current = ws.fingerprint()
        if current != self.fingerprint:
            raise StaleIndexError(
                f"index built on {self.fingerprint[:12]} but workspace is at {current[:12]}; rebuild it"
            )

    def files(self) -> list[str]:
        return sorted(self.units_by_file)

    def excerpt(self, path: str, start: int, end: int) -> str:
        lines = self._contents.get(path, "").splitlines()
        return "\n".join(lines[start - 1 : end])


def _py_units(tree: ast.Module) -> list[IndexUnit]:
    units: list[IndexUnit] = []

    def visit(node, prefix: str, parent_class: str | None):
        for child in ast.iter_child_nodes(node):
            if isinstance(child, ast.ClassDef):
                qual = f"{prefix}{child.name}"
                units.append(IndexUnit("class", qual, child.lineno, child.end_lineno or child.lineno))
                visit(child, qual + ".", child.name)
            elif isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef)):
                qual = f"{prefix}{child.name}"
                kind = "method" if parent_class else "function"
                units.append(
                    IndexUnit(kind, qual, child.lineno, child.end_lineno or child.lineno, parent_class)
                )
                visit(child, qual + ".", None)

    visit(tree, "", None)
    return units


def _looks_like_test_path(path: str) -> bool:
    parts = path.replace("\\", "/").split("/")
    if any(seg.lower() in TEST_DIR_SEGMENTS for seg in parts[:-1]):
        return True
    # Word-boundary rule: test_*.py / *_test.py / test.py, never contest.py.
    stem = parts[-1].rsplit(".", 1)[0].lower()
    return stem == "test" or stem.startswith("test_") or stem.endswith("_test")


def is_test_path(path: str, content: str = "") -> bool:
    """Heuristic test classification: path segment, name, or framework import.

    Word boundaries are respected: `contest.py` is not a test file.
    """
    if _looks_like_test_path(path):
        return True
    if content and path.endswith(".py") and TEST_FRAMEWORK_IMPORT_RE.search(content):
        return True
    return False


def build_index(ws: Workspace) -> CodeIndex:
    """Index every tracked file; Python syntax errors degrade to snippets."""
    tree = ws.read_tree()
    index = CodeIndex(fingerprint=ws.fingerprint())
    index._contents = tree
    for path in sorted(tree):
        content = tree[path]
        units: list[IndexUnit] | None = None
        if path.endswith(".py"):
            try:
                units = _py_units(ast.parse(content))
            except SyntaxError:
                units = None
        if units is None or (not units and not path.endswith(".py")):
            line_count = max(len(content.splitlines()), 1)
            units = [IndexUnit("snippet", path.rsplit("/", 1)[-1], 1, line_count)]
        index.units_by_file[path] = units
        if is_test_path(path, content):
            index.test_files.append(path)
    return index


def _location(index: CodeIndex, path: str, unit: IndexUnit) -> CodeLocation:
    return CodeLocation(
        file=path,
        unit_kind=unit.kind,
        qualified_name=unit.qualified_name,
        start_line=unit.start_line,
        end_line=unit.end_line,
        excerpt=index.excerpt(path, unit.start_line, unit.end_line),
    )


def _tiered_matches(index: CodeIndex, name: str, kinds: tuple[str, ...], files: list[str] | None = None):
    """Exact-name matches first, then case-insensitive, then substring."""
    exact: list[tuple[str, IndexUnit]] = []
    loose: list[tuple[str, IndexUnit]] = []
    sub: list[tuple[str, IndexUnit]] = []
    target = files if files is not None else index.files()
    for path in target:
        for unit in index.units_by_file.get(path, []):
            if unit.kind not in kinds:
                continue
            simple = unit.qualified_name.rsplit(".", 1)[-1]
            if simple == name or unit.qualified_name == name:
                exact.append((path, unit))
            elif simple.lower() == name.lower():
                loose.append((path, unit))
            elif name.lower() in simple.lower():
                sub.append((path, unit))
    return (exact + loose + sub)[:RESULT_CAP]


def search_class(index: CodeIndex, name: str) -> list[CodeLocation]:
    return [_location(index, p, u) for p, u in _tiered_matches(index, name, ("class",))]


def search_func(index: CodeIndex, name: str) -> list[CodeLocation]:
    """Top-level functions and methods matching the name."""
    return [_location(index, p, u) for p, u in _tiered_matches(index, name, ("function", "method"))]


def search_method_in_class(index: CodeIndex, class_name: str, method_name: str) -> list[CodeLocation]:
    """Methods named `method_name` nested in classes matching `class_name`.

    Purely syntactic: inherited-only methods are not resolved.
    """
    results: list[CodeLocation] = []
    for path in index.files():
        for unit in index.units_by_file[path]:
            if unit.kind != "method" or unit.parent_class != class_name:
                continue
            simple = unit.qualified_name.rsplit(".", 1)[-1]
            if simple == method_name:
                results.append(_location(index, path, unit))
    return results[:RESULT_CAP]


def search_snippet(index: CodeIndex, literal: str) -> tuple[list[CodeLocation], bool]:
    """Textual search mapped to enclosing units; (results, more_available)."""
    if not literal:
        return [], False
    results: list[CodeLocation] = []
    more = False
    for path in index.files():
        content = index._contents.get(path, "")
        if literal not in content:
            continue
        for line_no, line in enumerate(content.splitlines(), 1):
            if literal not in line:
                continue
            unit = _enclosing_unit(index.units_by_file[path], line_no)
            loc = _location(index, path, unit) if unit else CodeLocation(
                file=path,
                unit_kind="snippet",
                qualified_name=path.rsplit("/", 1)[-1],
                start_line=line_no,
                end_line=line_no,
                excerpt=line,
            )
            if all(loc.dedup_key() != r.dedup_key() for r in results):
                if len(results) >= RESULT_CAP:
                    more = True
                    break
                results.append(loc)
        if more:
            break
    return results, more


def _enclosing_unit(units: list[IndexUnit], line_no: int) -> IndexUnit | None:
    best: IndexUnit | None = None
    for unit in units:
        if unit.start_line <= line_no <= unit.end_line:
            if best is None or (unit.start_line >= best.start_line and unit.end_line <= best.end_line):
                best = unit
    return best


def classify_test_files(index: CodeIndex) -> list[str]:
    """Files the heuristics consider part of the test suite."""
    return list(index.test_files)


def find_unit(index: CodeIndex, file: str, qualified_name: str) -> CodeLocation | None:
    """Resolve one (file, qualified name) pair to a location, if indexed."""
    for unit in index.units_by_file.get(file, []):
        if unit.qualified_name == qualified_name or unit.qualified_name.endswith("." + qualified_name):
            return _location(index, file, unit)
    return None


def as_test_location(loc: CodeLocation, framework_hint: str | None = None) -> TestLocation:
    kind = loc.unit_kind if loc.unit_kind in ("method", "function", "snippet") else "snippet"
    return TestLocation(
        file=loc.file,
        unit_kind=kind,
        qualified_name=loc.qualified_name,
        start_line=loc.start_line,
        end_line=loc.end_line,
        excerpt=loc.excerpt,
        framework_hint=framework_hint,
    )
