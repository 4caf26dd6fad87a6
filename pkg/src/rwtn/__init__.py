"""Randomly weighted tensor networks for fuzzy first-order relational learning.

Two interchangeable predicate grounders (a fully trained LTN and a
reservoir-style RWTN with a frozen random tensor encoder) are trained to
best-satisfy Lukasiewicz fuzzy theories over synthetic part/whole scenes.
"""

__version__ = "0.1.0"
