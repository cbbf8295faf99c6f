import numpy as np
import pytest

from mrvbat.gmix import GaussianMixture2


def random_mixture(rng: np.random.Generator) -> GaussianMixture2:
    return GaussianMixture2.from_params(
        rng.uniform(0.05, 0.95), rng.uniform(-3, 3), rng.uniform(0.2, 1.5), rng.uniform(-3, 3), rng.uniform(0.2, 1.5)
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split()[1].rstrip(":").zfill(3)):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """``check(n, ok, detail)`` records a pass/fail line and asserts ``ok``."""

    def check(n: str, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return check


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def mc_moments(f: GaussianMixture2, pb_lo: float, pb_hi: float, pg_des: float, n: int, seed: int):
    """Sample means and standard errors of the clipped battery and grid powers.

    Returns ``{name: (mean, stderr)}`` for ``p1``, ``p2``, ``e_pb``, ``exp_sell``, ``exp_buy``.
    """
    z = f.sample(np.random.default_rng(seed), n)
    p1 = z <= pb_lo + pg_des
    p2 = z >= pb_hi + pg_des
    p_b = np.clip(z - pg_des, pb_lo, pb_hi)
    p_g = z - p_b
    out = {}
    for name, v in (("p1", p1.astype(float)), ("p2", p2.astype(float)), ("e_pb", p_b),
                    ("exp_sell", np.minimum(p_g, 0.0)), ("exp_buy", np.maximum(p_g, 0.0))):
        out[name] = (float(v.mean()), float(v.std()) / np.sqrt(n))
    return out


def random_policy(rng: np.random.Generator):
    lo, hi = np.sort(rng.uniform(-3, 3, 2))
    return float(lo), float(hi), float(rng.uniform(-2, 2))
