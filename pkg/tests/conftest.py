"""Independent reference implementations used as test oracles.

Everything here is written from the defining sums, with no calls into the
package's fast paths, so agreement is a real cross-check.
"""

import cmath
import math

import numpy as np
import pytest

from afdm.core import AfdmParams, DdPath, DdProfile


def direct_idaft(x_daft, n, c1, c2):
    """x[t] = N^-1/2 sum_m X[m] exp(+j2pi(c1 t^2 + c2 m^2 + t m / N))."""
    out = []
    for t in range(n):
        acc = 0j
        for m in range(n):
            acc += x_daft[m] * cmath.exp(2j * math.pi * (c1 * t * t + c2 * m * m + t * m / n))
        out.append(acc / math.sqrt(n))
    return np.array(out)


def direct_daft(x_time, n, c1, c2):
    out = []
    for m in range(n):
        acc = 0j
        for t in range(n):
            acc += x_time[t] * cmath.exp(-2j * math.pi * (c1 * t * t + c2 * m * m + t * m / n))
        out.append(acc / math.sqrt(n))
    return np.array(out)


def direct_daft_matrix(n, c1, c2):
    return np.array([direct_daft(np.eye(n)[t], n, c1, c2) for t in range(n)]).T


def fresnel_matrix(n):
    """Discrete Fresnel transform for even N."""
    m = np.arange(n)
    return np.exp(-1j * np.pi / 4) * np.exp(1j * np.pi * (m[:, None] - m[None, :]) ** 2 / n) / np.sqrt(n)


def ltv_matrix(profile, n, l_cpp):
    """Dense (N+L) x (N+L) time-variant channel matrix; row i is sample i - L."""
    size = n + l_cpp
    h = np.zeros((size, size), dtype=complex)
    for p in profile.paths:
        for i in range(size):
            j = i - p.delay
            if j >= 0:
                h[i, j] += p.gain * cmath.exp(2j * math.pi * p.doppler * (i - l_cpp) / n)
    return h


def chirp_periodic_channel(profile, params):
    """N x N time-domain channel acting on the chirp-periodic extension of the block."""
    n, c1 = params.n_sub, params.c1
    h = np.zeros((n, n), dtype=complex)
    for p in profile.paths:
        for t in range(n):
            src = t - p.delay
            w = p.gain * cmath.exp(2j * math.pi * p.doppler * t / n)
            if src < 0:
                # x(src) = x(src + N) * exp(-j2pi c1 (N^2 + 2 N src))
                w *= cmath.exp(-2j * math.pi * c1 * (n * n + 2 * n * src))
            h[t, src % n] += w
    return h


def integer_profile(rng, n_paths, l_max, k_max):
    """Distinct integer (delay, Doppler) cells with unit total power."""
    cells = [(l, k) for l in range(l_max + 1) for k in range(-k_max, k_max + 1)]
    pick = rng.choice(len(cells), n_paths, replace=False)
    g = rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)
    g /= np.linalg.norm(g)
    return DdProfile(tuple(DdPath(g[i], cells[c][0], float(cells[c][1])) for i, c in enumerate(pick)))


# profile with shifts (0, 0), (0, 1) and (1, 0)
THREE_PATH = DdProfile.from_tuples([(1.0, 0, 0.0), (0.6 - 0.3j, 0, 1.0), (-0.4 + 0.5j, 1, 0.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def three_path():
    return THREE_PATH


def afdm_params(n, k_max=2, l_cpp=3, c2=0.0):
    return AfdmParams.afdm(n, k_max, l_cpp, c2)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        print(line)
        request.config.acceptance_lines.append(line)
        assert ok, line

    return record
