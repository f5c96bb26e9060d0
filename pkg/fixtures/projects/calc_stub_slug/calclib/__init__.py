from .core import add, classify, clamp, div, moving_average, sub
from .textutil import slugify, wrap_words

__all__ = [
    "add",
    "classify",
    "clamp",
    "div",
    "moving_average",
    "slugify",
    "sub",
    "wrap_words",
]
