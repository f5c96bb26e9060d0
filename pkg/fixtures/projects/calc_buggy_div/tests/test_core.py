from calclib.core import add, classify, clamp, div, sub
from calclib.textutil import wrap_words


def test_add():
    assert add(2, 3) == 5


def test_sub():
    assert sub(5, 3) == 2


def test_div_normal():
    assert div(8, 2) == 4.0


def test_clamp_in_range():
    assert clamp(5, 0, 10) == 5


def test_classify_positive():
    assert classify(3) == "positive"


def test_wrap_words_single():
    assert wrap_words(["hi"], 10) == ["hi"]
