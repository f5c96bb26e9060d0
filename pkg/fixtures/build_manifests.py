"""Regenerate the task manifests under fixtures/tasks/.

Gold patches are computed from the variant-vs-clean project trees so they
apply by construction. Run from the repository root:

    python fixtures/build_manifests.py
"""

from __future__ import annotations

import json
from pathlib import Path

from codewright import bench, difftools

HERE = Path(__file__).parent
PROJECTS = HERE / "projects"
TASKS = HERE / "tasks"


def read(project: str, rel: str) -> str:
    return (PROJECTS / project / rel).read_text()


def gold_patch(buggy_project: str, rel: str) -> str:
    return difftools.diff_contents(read(buggy_project, rel), read("calc_clean", rel), rel)


def workspace(project: str) -> dict:
    return {"source_dir": f"../projects/{project}", "setup_commands": [], "env": {}, "default_timeout": 120}


def dump(name: str, data: dict):
    (TASKS / f"{name}.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    print(f"wrote tasks/{name}.json")


HIDDEN_DIV = '''import pytest

from calclib.core import div


def test_div_normal_hidden():
    assert div(9, 3) == 3.0


def test_div_zero_raises_value_error():
    with pytest.raises(ValueError):
        div(1, 0)
'''

HIDDEN_CLAMP = '''from calclib.core import clamp


def test_clamp_above_hidden():
    assert clamp(15, 0, 10) == 10


def test_clamp_below_hidden():
    assert clamp(-5, 0, 10) == 0


def test_clamp_at_upper_bound_hidden():
    assert clamp(10, 0, 10) == 10
'''

HIDDEN_AVERAGE = '''import pytest

from calclib.core import moving_average


def test_moving_average_basic():
    assert moving_average([1, 2, 3], 2) == [1.5, 2.5]


def test_moving_average_window_one():
    assert moving_average([4, 6], 1) == [4.0, 6.0]


def test_moving_average_full_window():
    assert moving_average([2, 4, 6], 3) == [4.0]


def test_moving_average_bad_window():
    with pytest.raises(ValueError):
        moving_average([1, 2], 0)
    with pytest.raises(ValueError):
        moving_average([1, 2], 3)
'''

HIDDEN_SLUG = '''from calclib.textutil import slugify


def test_slugify_basic():
    assert slugify(" Hello  World ") == "hello-world"


def test_slugify_punctuation():
    assert slugify("Rock & Roll!") == "rock-roll"


def test_slugify_separators():
    assert slugify("snake_case-and-dashes") == "snake-case-and-dashes"
'''

HIDDEN_MEDIAN = '''import pytest

from calclib.core import median


def test_median_odd():
    assert median([3, 1, 2]) == 2


def test_median_even():
    assert median([4, 1, 3, 2]) == 2.5


def test_median_empty():
    with pytest.raises(ValueError):
        median([])
'''

HIDDEN_WORDCOUNT = '''from calclib.textutil import word_count


def test_word_count_basic():
    assert word_count("the cat and the hat") == {"the": 2, "cat": 1, "and": 1, "hat": 1}


def test_word_count_case():
    assert word_count("Dog dog DOG") == {"dog": 3}


def test_word_count_empty():
    assert word_count("") == {}
'''

# Gold solutions for the feature tasks: implementation plus covering tests.
MEDIAN_IMPL = '''

def median(xs):
    """Middle value of xs; mean of the two middles for even lengths.

    Raises ValueError on empty input.
    """
    if not xs:
        raise ValueError("empty input")
    ordered = sorted(xs)
    mid = len(ordered) // 2
    if len(ordered) % 2 == 1:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2
'''

MEDIAN_GOLD_TESTS = '''import pytest

from calclib.core import median


def test_median_odd_gold():
    assert median([5, 1, 3]) == 3


def test_median_even_gold():
    assert median([1, 2, 3, 4]) == 2.5


def test_median_empty_gold():
    with pytest.raises(ValueError):
        median([])
'''

WORDCOUNT_IMPL = '''

def word_count(text):
    """Occurrences of each lowercase whitespace-separated word."""
    counts = {}
    for word in text.lower().split():
        counts[word] = counts.get(word, 0) + 1
    return counts
'''

WORDCOUNT_GOLD_TESTS = '''from calclib.textutil import word_count


def test_word_count_gold():
    assert word_count("a b a") == {"a": 2, "b": 1}


def test_word_count_empty_gold():
    assert word_count("") == {}
'''


def repair_manifests():
    div_gold = gold_patch("calc_buggy_div", "calclib/core.py")
    dump(
        "repair-div",
        {
            "id": "repair-div",
            "task_type": "program-repair",
            "description": (
                "Bug report: calclib.core.div crashes with an unhandled "
                "ZeroDivisionError when the divisor is zero. Dividing by zero "
                "should raise ValueError('division by zero') instead, and "
                "normal division must keep working. This is a program-repair "
                "task: fix the program."
            ),
            "workspace": workspace("calc_buggy_div"),
            "eval": {
                "criterion": "test-suite",
                "hidden_tests": {"tests/hidden_test_div.py": HIDDEN_DIV},
                "test_command": "python -m pytest tests -q",
                "gold_patch": div_gold,
            },
            "extras": {"gold_solution": div_gold},
        },
    )
    clamp_gold = gold_patch("calc_buggy_clamp", "calclib/core.py")
    dump(
        "repair-clamp",
        {
            "id": "repair-clamp",
            "task_type": "program-repair",
            "description": (
                "Bug report: calclib.core.clamp returns the lower bound when "
                "the value exceeds the upper bound: clamp(15, 0, 10) returns 0 "
                "but should return 10. Values inside the range and below the "
                "range are handled correctly. This is a program-repair task: "
                "fix the program."
            ),
            "workspace": workspace("calc_buggy_clamp"),
            "eval": {
                "criterion": "test-suite",
                "hidden_tests": {"tests/hidden_test_clamp.py": HIDDEN_CLAMP},
                "test_command": "python -m pytest tests -q",
                "gold_patch": clamp_gold,
            },
            "extras": {"gold_solution": clamp_gold},
        },
    )


def swt_manifests():
    for name, project, issue, gold_file in (
        (
            "swt-div",
            "calc_buggy_div",
            "calclib.core.div raises ZeroDivisionError instead of "
            "ValueError('division by zero') for a zero divisor.",
            "calclib/core.py",
        ),
        (
            "swt-clamp",
            "calc_buggy_clamp",
            "calclib.core.clamp returns the lower bound instead of the upper "
            "bound when the value exceeds the range: clamp(15, 0, 10) must be 10.",
            "calclib/core.py",
        ),
    ):
        dump(
            name,
            {
                "id": name,
                "task_type": "regression-testing",
                "description": (
                    f"Issue: {issue}\n\nWrite regression tests (as test code "
                    "under tests/) that assert the corrected behavior described "
                    "in the issue. This is a regression-test-generation task: "
                    "produce tests, not a fix."
                ),
                "workspace": workspace(project),
                "eval": {
                    "criterion": "patch-coverage",
                    "gold_patch": gold_patch(project, gold_file),
                },
                "extras": {},
            },
        )


def codegen_manifests():
    for name, project, func, rel, hidden, hidden_path in (
        ("codegen-average", "calc_stub_average", "calclib.core.moving_average", "calclib/core.py",
         HIDDEN_AVERAGE, "tests/hidden_test_average.py"),
        ("codegen-slug", "calc_stub_slug", "calclib.textutil.slugify", "calclib/textutil.py",
         HIDDEN_SLUG, "tests/hidden_test_slug.py"),
    ):
        content = read(project, rel)
        func_name = func.rsplit(".", 1)[1]
        doc_start = content.find('"""', content.find(f"def {func_name}"))
        doc_end = content.find('"""', doc_start + 3)
        doc_excerpt = content[doc_start + 3 : doc_end].strip()
        dump(
            name,
            {
                "id": name,
                "task_type": "code-generation",
                "description": (
                    f"Implement the body of {func} in {rel}. It currently "
                    "raises NotImplementedError. Documented behavior:\n\n"
                    f"{doc_excerpt}\n\nThis is a code-generation task: write "
                    "the method body so it matches the documentation."
                ),
                "workspace": workspace(project),
                "eval": {
                    "criterion": "test-suite",
                    "hidden_tests": {hidden_path: hidden},
                    "test_command": "python -m pytest tests -q",
                    "gold_patch": gold_patch(project, rel),
                },
                "extras": {"doc_excerpt": doc_excerpt, "gold_solution": gold_patch(project, rel)},
            },
        )


def testgen_manifests():
    for name, func, rel in (
        ("testgen-classify", "classify", "calclib/core.py"),
        ("testgen-wrap", "wrap_words", "calclib/textutil.py"),
    ):
        dump(
            name,
            {
                "id": name,
                "task_type": "test-generation",
                "description": (
                    f"Write unit tests (under tests/) for the function "
                    f"{func} in {rel} of this project. The tests must "
                    "exercise every line of the function, including all of "
                    "its branches. This is a test-generation task: produce "
                    "test code only."
                ),
                "workspace": workspace("calc_clean"),
                "eval": {
                    "criterion": "method-coverage",
                    "target": {"file": rel, "qualified_name": func},
                },
                "extras": {},
            },
        )


def partial_manifests():
    # Promising but wrong: catches the zero divisor yet raises the wrong type.
    partial_div = read("calc_buggy_div", "calclib/core.py").replace(
        "    return a / b",
        '    if b == 0:\n        raise ArithmeticError("division by zero")\n    return a / b',
        1,
    )
    partial_div_patch = difftools.diff_contents(
        read("calc_buggy_div", "calclib/core.py"), partial_div, "calclib/core.py"
    )
    base = bench.load_task(TASKS / "repair-div.json")
    derived = bench.make_partial_fix_task(base, partial_div_patch)
    data = derived.to_dict()
    data["workspace"] = workspace("calc_buggy_div")
    dump("partial-div", data)

    # Promising but wrong: stops clamping instead of returning the bound.
    partial_clamp = read("calc_buggy_clamp", "calclib/core.py").replace(
        "    if value > high:\n        return low",
        "    if value > high:\n        return value",
        1,
    )
    partial_clamp_patch = difftools.diff_contents(
        read("calc_buggy_clamp", "calclib/core.py"), partial_clamp, "calclib/core.py"
    )
    base = bench.load_task(TASKS / "repair-clamp.json")
    derived = bench.make_partial_fix_task(base, partial_clamp_patch)
    data = derived.to_dict()
    data["workspace"] = workspace("calc_buggy_clamp")
    dump("partial-clamp", data)


def feature_manifests():
    core = read("calc_clean", "calclib/core.py")
    median_code = difftools.diff_contents(core, core + MEDIAN_IMPL, "calclib/core.py")
    median_tests = difftools.diff_contents(None, MEDIAN_GOLD_TESTS, "tests/test_median.py")
    dump(
        "feature-median",
        {
            "id": "feature-median",
            "task_type": "feature-development",
            "description": (
                "Add a function median(xs) to calclib/core.py returning the "
                "middle value of xs (for even lengths, the mean of the two "
                "middle values); it raises ValueError on empty input. Also "
                "add unit tests for median under tests/ that exercise the new "
                "code completely. This is a feature-development task: add "
                "both the code and its tests."
            ),
            "workspace": workspace("calc_clean"),
            "eval": {
                "criterion": "feature",
                "hidden_tests": {"tests/hidden_test_median.py": HIDDEN_MEDIAN},
                "test_command": "python -m pytest tests/hidden_test_median.py -q",
            },
            "extras": {"gold_solution": median_code + median_tests},
        },
    )
    textutil = read("calc_clean", "calclib/textutil.py")
    wc_code = difftools.diff_contents(textutil, textutil + WORDCOUNT_IMPL, "calclib/textutil.py")
    wc_tests = difftools.diff_contents(None, WORDCOUNT_GOLD_TESTS, "tests/test_word_count.py")
    dump(
        "feature-wordcount",
        {
            "id": "feature-wordcount",
            "task_type": "feature-development",
            "description": (
                "Add a function word_count(text) to calclib/textutil.py that "
                "returns a dict mapping each lowercase whitespace-separated "
                "word of text to its number of occurrences. Also add unit "
                "tests for word_count under tests/ that exercise the new "
                "code completely. This is a feature-development task: add "
                "both the code and its tests."
            ),
            "workspace": workspace("calc_clean"),
            "eval": {
                "criterion": "feature",
                "hidden_tests": {"tests/hidden_test_word_count.py": HIDDEN_WORDCOUNT},
                "test_command": "python -m pytest tests/hidden_test_word_count.py -q",
            },
            "extras": {"gold_solution": wc_code + wc_tests},
        },
    )


def main():
    TASKS.mkdir(exist_ok=True)
    repair_manifests()
    swt_manifests()
    codegen_manifests()
    testgen_manifests()
    partial_manifests()
    feature_manifests()


if __name__ == "__main__":
    main()
