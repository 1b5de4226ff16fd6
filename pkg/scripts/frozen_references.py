"""Recompute the frozen reference values used in the test suite from plain
Python floats, with no package code involved.

    python scripts/frozen_references.py
"""

import math


def adam_trace(x=1.0, lr=0.1, steps=10, b1=0.9, b2=0.999, eps=1e-8):
    """Adam on f(x) = x^2, one float at a time."""
    m = v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = 2.0 * x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        out.append(x)
    return out


def binary_channel_mi():
    """I(a; s') for w = (1/2, 1/2) over the channel rows (1, 0) and (1/2, 1/2)."""
    marg = (0.75, 0.25)
    h = -sum(p * math.log(p) for p in marg)
    return h - 0.5 * math.log(2)


def main():
    for i, x in enumerate(adam_trace(), start=1):
        print(f"adam step {i:2d}: {x!r}")
    print(f"binary channel MI: {binary_channel_mi()!r}")
    print(f"uniform bonus over 3 codes: {-math.log(3)!r}")


if __name__ == "__main__":
    main()
