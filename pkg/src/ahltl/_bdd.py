"""Reduced ordered BDDs, used by the internal QBF evaluator.

Nodes are integers: 0 and 1 are the terminals, everything else indexes the
level/lo/hi arrays. The variable order is fixed at construction time.
"""

from __future__ import annotations


class BddLimitError(Exception):
    """Raised when the node budget or the deadline is exceeded."""


class Bdd:
    __slots__ = (
        "nlevels", "level", "lo", "hi", "_unique",
        "_and_cache", "_or_cache", "_not_cache", "_constrain_cache",
        "budget", "_check", "_tick",
    )

    def __init__(self, nlevels: int, budget: int | None = None, check=None):
        self.nlevels = nlevels
        # terminals 0 and 1 sit below every variable level
        self.level = [nlevels, nlevels]
        self.lo = [0, 1]
        self.hi = [0, 1]
        self._unique: dict[tuple[int, int, int], int] = {}
        self._and_cache: dict[tuple[int, int], int] = {}
        self._or_cache: dict[tuple[int, int], int] = {}
        self._not_cache: dict[int, int] = {}
        self._constrain_cache: dict[tuple[int, int], int] = {}
        self.budget = budget
        self._check = check  # optional callable, e.g. a deadline probe
        self._tick = 0

    def size(self) -> int:
        return len(self.level)

    def var(self, lvl: int) -> int:
        return self._mk(lvl, 0, 1)

    def _mk(self, lvl: int, lo: int, hi: int) -> int:
        if lo == hi:
            return lo
        key = (lvl, lo, hi)
        n = self._unique.get(key)
        if n is not None:
            return n
        n = len(self.level)
        if self.budget is not None and n > self.budget:
            raise BddLimitError(f"BDD node budget exceeded ({self.budget})")
        self._tick += 1
        if self._check is not None and not self._tick % 4096:
            self._check()
        self.level.append(lvl)
        self.lo.append(lo)
        self.hi.append(hi)
        self._unique[key] = n
        return n

    def apply_and(self, f: int, g: int) -> int:
        if f == 0 or g == 0:
            return 0
        if f == 1:
            return g
        if g == 1 or f == g:
            return f
        if f > g:
            f, g = g, f
        cache = self._and_cache
        key = (f, g)
        r = cache.get(key)
        if r is not None:
            return r
        level = self.level
        lf, lg = level[f], level[g]
        if lf <= lg:
            f0, f1 = self.lo[f], self.hi[f]
        else:
            f0 = f1 = f
        if lg <= lf:
            g0, g1 = self.lo[g], self.hi[g]
        else:
            g0 = g1 = g
        r = self._mk(min(lf, lg), self.apply_and(f0, g0), self.apply_and(f1, g1))
        cache[key] = r
        return r

    def apply_or(self, f: int, g: int) -> int:
        if f == 1 or g == 1:
            return 1
        if f == 0:
            return g
        if g == 0 or f == g:
            return f
        if f > g:
            f, g = g, f
        cache = self._or_cache
        key = (f, g)
        r = cache.get(key)
        if r is not None:
            return r
        level = self.level
        lf, lg = level[f], level[g]
        if lf <= lg:
            f0, f1 = self.lo[f], self.hi[f]
        else:
            f0 = f1 = f
        if lg <= lf:
            g0, g1 = self.lo[g], self.hi[g]
        else:
            g0 = g1 = g
        r = self._mk(min(lf, lg), self.apply_or(f0, g0), self.apply_or(f1, g1))
        cache[key] = r
        return r

    def apply_not(self, f: int) -> int:
        if f < 2:
            return 1 - f
        cache = self._not_cache
        r = cache.get(f)
        if r is not None:
            return r
        r = self._mk(self.level[f], self.apply_not(self.lo[f]), self.apply_not(self.hi[f]))
        cache[f] = r
        return r

    def constrain(self, f: int, c: int) -> int:
        """Generalized cofactor f|c (Coudert-Madre).

        Agrees with f wherever c holds and distributes over pointwise
        Boolean operations, so restricting every leaf of a formula by c
        restricts the whole formula. c must not be the zero function.
        """
        if c == 1 or f < 2:
            return f
        if f == c:
            return 1
        key = (f, c)
        r = self._constrain_cache.get(key)
        if r is not None:
            return r
        level = self.level
        lf, lc = level[f], level[c]
        l = min(lf, lc)
        if lf <= lc:
            f0, f1 = self.lo[f], self.hi[f]
        else:
            f0 = f1 = f
        if lc <= lf:
            c0, c1 = self.lo[c], self.hi[c]
        else:
            c0 = c1 = c
        if c0 == 0:
            r = self.constrain(f1, c1)
        elif c1 == 0:
            r = self.constrain(f0, c0)
        else:
            r = self._mk(l, self.constrain(f0, c0), self.constrain(f1, c1))
        self._constrain_cache[key] = r
        return r

    def quantify(self, f: int, levels: frozenset[int], existential: bool) -> int:
        """Eliminate all variables whose level is in `levels` from f."""
        if not levels:
            return f
        top = max(levels)
        join = self.apply_or if existential else self.apply_and
        cache: dict[int, int] = {}

        def go(n: int) -> int:
            if n < 2 or self.level[n] > top:
                return n
            r = cache.get(n)
            if r is not None:
                return r
            l0, l1 = go(self.lo[n]), go(self.hi[n])
            if self.level[n] in levels:
                r = join(l0, l1)
            else:
                r = self._mk(self.level[n], l0, l1)
            cache[n] = r
            return r

        return go(f)

    def find_path(self, f: int, target: int) -> dict[int, bool]:
        """Assignment {level: value} steering f to the given terminal."""
        assign: dict[int, bool] = {}
        seen: set[int] = set()

        def go(n: int) -> bool:
            if n == target:
                return True
            if n < 2 or n in seen:
                return False
            seen.add(n)
            if go(self.lo[n]):
                assign[self.level[n]] = False
                return True
            if go(self.hi[n]):
                assign[self.level[n]] = True
                return True
            return False

        if not go(f):
            raise ValueError("terminal not reachable")
        return assign
