"""Small arithmetic helpers."""


def add(a, b):
    return a + b


def sub(a, b):
    return a - b


def div(a, b):
    """Divide a by b.

    Raises ValueError when b is zero.
    """
    if b == 0:
        raise ValueError("division by zero")
    return a / b


def clamp(value, low, high):
    """Clamp value into the inclusive range [low, high]."""
    if value < low:
        return low
    if value > high:
        return high
    return value


def classify(n):
    """Sign bucket of n: 'negative', 'zero', or 'positive'."""
    if n < 0:
        return "negative"
    if n == 0:
        return "zero"
    return "positive"


def moving_average(xs, window):
    """Averages of each consecutive window-sized slice of xs.

    moving_average([1, 2, 3], 2) == [1.5, 2.5]. Raises ValueError when
    window is smaller than 1 or larger than len(xs).
    """
    if window < 1 or window > len(xs):
        raise ValueError("bad window")
    return [sum(xs[i:i + window]) / window for i in range(len(xs) - window + 1)]
