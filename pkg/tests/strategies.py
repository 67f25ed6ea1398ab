"""Shared hypothesis strategies."""

from hypothesis import strategies as st

from trsmse.table import TrsTable


def tables(max_count: int = 200, positive: bool = False):
    lo = 1 if positive else 0
    cells = st.lists(st.integers(lo, max_count), min_size=7, max_size=7)
    return cells.filter(lambda c: sum(c) > 0).map(lambda c: TrsTable(*c))
