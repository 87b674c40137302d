"""Workload description and key generators for the benchmark harness."""

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

DISTRIBUTIONS = ("uniform", "zipf")


@dataclass
class WorkloadSpec:
    """One benchmark configuration.

    Keys are drawn from ``[0, key_range)``.  ``update_ratio`` is split evenly
    between inserts and deletes so the tree stays near ``size``.  When
    ``ops`` is set each worker runs exactly that many measured ops instead of
    running for ``duration`` seconds, which makes single-threaded runs
    reproducible op for op.  ``leaf_capacity`` > 0 runs the tree with
    inlined leaf arrays of that many pairs.
    """
    size: int = 100_000
    threads: int = 1
    update_ratio: float = 0.2
    duration: float = 1.0
    dist: str = "uniform"
    theta: float = 0.5
    key_range: Optional[int] = None
    seed: int = 0
    trials: int = 1
    collaborative: bool = True
    warmup: float = 0.0
    ops: Optional[int] = None
    pin: bool = False
    leaf_capacity: int = 0

    def __post_init__(self):
        if self.key_range is None:
            self.key_range = max(2 * self.size, 1)

    def validate(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.size < 0:
            raise ValueError("size must be >= 0")
        if self.key_range < 1:
            raise ValueError("key_range must be >= 1")
        if self.size > self.key_range:
            raise ValueError("size cannot exceed key_range")
        if not 0.0 <= self.update_ratio <= 1.0:
            raise ValueError("update_ratio must lie in [0, 1]")
        if self.dist not in DISTRIBUTIONS:
            raise ValueError(f"dist must be one of {DISTRIBUTIONS}")
        if self.dist == "zipf" and not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.duration <= 0 and self.ops is None:
            raise ValueError("duration must be > 0")
        if self.ops is not None and self.ops < 0:
            raise ValueError("ops must be >= 0")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.leaf_capacity < 0 or self.leaf_capacity == 1:
            raise ValueError("leaf_capacity must be 0 (off) or >= 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        return self

    def to_dict(self):
        return asdict(self)


# Beyond this many terms the tail is summed in closed form.
EXACT_ZETA_TERMS = 1 << 24


def _direct_sum(lo, hi, theta):
    total = 0.0
    chunk = 1 << 20
    for start in range(lo, hi + 1, chunk):
        i = np.arange(start, min(start + chunk, hi + 1), dtype=np.float64)
        total += float(np.sum(i ** -theta))
    return total


def _tail_sum(m, n, theta):
    # Euler-Maclaurin for sum_{i=m..n} i**-theta, theta in [0, 1).  With
    # m around 1e6 the first omitted term is below 1e-30.
    def f(x):
        return x ** -theta

    def d1(x):
        return -theta * x ** (-theta - 1)

    def d3(x):
        return -theta * (theta + 1) * (theta + 2) * x ** (-theta - 3)

    m, n = float(m), float(n)
    integral = (n ** (1 - theta) - m ** (1 - theta)) / (1 - theta)
    return (integral + (f(m) + f(n)) / 2 + (d1(n) - d1(m)) / 12
            - (d3(n) - d3(m)) / 720)


def zeta(n, theta):
    """Generalized harmonic number sum_{i=1..n} i**-theta, for theta < 1.

    Summed term by term up to ``EXACT_ZETA_TERMS``; longer sums add a
    closed-form tail accurate to double precision.
    """
    if n <= EXACT_ZETA_TERMS:
        return _direct_sum(1, n, theta)
    head = 1 << 20
    return _direct_sum(1, head - 1, theta) + _tail_sum(head, n, theta)


def _scatter_multiplier(n):
    # An odd multiplier near n / golden ratio that is coprime to n.
    a = max(1, int(n * 0.6180339887498949)) | 1
    while math.gcd(a, n) != 1:
        a += 2
    return a


class ZipfGenerator:
    """Zipfian keys over ``[0, key_range)`` by the Gray et al. method.

    Rank ``r`` (1-based) has probability proportional to ``r**-theta``.
    Ranks are scattered over the key range by the bijection
    ``r -> (a*(r-1) + b) mod key_range`` so hot keys are not adjacent.
    """

    def __init__(self, key_range, theta, rng=None, scatter=True):
        if key_range < 1:
            raise ValueError("key_range must be >= 1")
        if not 0.0 <= theta < 1.0:
            raise ValueError("theta must lie in [0, 1)")
        self.n = key_range
        self.theta = theta
        self.rng = rng if rng is not None else np.random.default_rng()
        self.zetan = zeta(key_range, theta)
        zeta2 = zeta(min(2, key_range), theta)
        self.alpha = 1.0 / (1.0 - theta)
        if key_range > 2:
            self.eta = ((1.0 - (2.0 / key_range) ** (1.0 - theta))
                        / (1.0 - zeta2 / self.zetan))
        else:
            self.eta = 1.0
        self.half_pow = 0.5 ** theta
        if scatter and key_range > 1:
            self.mult = _scatter_multiplier(key_range)
            self.offset = key_range // 3
        else:
            self.mult, self.offset = 1, 0

    def ranks(self, count):
        """``count`` 1-based ranks as an int64 array."""
        u = self.rng.random(count)
        uz = u * self.zetan
        # Clamped at 0: only the branch with uz >= 1 + 0.5**theta keeps
        # this value, and there the base is non-negative anyway.
        spread = np.maximum(self.eta * u - self.eta + 1.0, 0.0)
        base = 1.0 + self.n * np.power(spread, self.alpha)
        r = np.minimum(base.astype(np.int64), self.n)
        r = np.where(uz < 1.0 + self.half_pow, 2, r)
        r = np.where(uz < 1.0, 1, r)
        return np.minimum(r, self.n)

    def draw(self, count):
        """``count`` keys as a list of Python ints."""
        r = self.ranks(count)
        if self.n < 2**31:
            return ((self.mult * (r - 1) + self.offset) % self.n).tolist()
        # The product would overflow int64; fall back to Python ints.
        return [(self.mult * (x - 1) + self.offset) % self.n
                for x in r.tolist()]

    def key_of_rank(self, rank):
        return (self.mult * (rank - 1) + self.offset) % self.n

    def next(self):
        return self.draw(1)[0]


class UniformGenerator:
    def __init__(self, key_range, rng=None):
        self.n = key_range
        self.rng = rng if rng is not None else np.random.default_rng()

    def draw(self, count):
        return self.rng.integers(0, self.n, size=count).tolist()

    def next(self):
        return self.draw(1)[0]


def make_generator(spec, rng):
    if spec.dist == "zipf":
        return ZipfGenerator(spec.key_range, spec.theta, rng)
    return UniformGenerator(spec.key_range, rng)
