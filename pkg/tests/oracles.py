"""Independent reference implementations used as test oracles.

Everything here is deliberately naive (direct sums, exhaustive enumeration)
and shares no code with the package under test.
"""

import math

import numpy as np


def naive_dft_magnitude(frame: np.ndarray) -> np.ndarray:
    """O(n^2) real-input DFT magnitudes for bins 0..n/2."""
    n = frame.size
    bins = n // 2 + 1
    out = np.empty(bins)
    t = np.arange(n)
    for k in range(bins):
        re = np.sum(frame * np.cos(-2.0 * np.pi * k * t / n))
        im = np.sum(frame * np.sin(-2.0 * np.pi * k * t / n))
        out[k] = math.hypot(re, im)
    return out


def naive_dct2_ortho(x: np.ndarray) -> np.ndarray:
    """O(n^2) orthonormal DCT-II along axis 0."""
    n = x.shape[0]
    out = np.zeros_like(x, dtype=float)
    for k in range(n):
        scale = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        basis = np.cos(np.pi * k * (2.0 * np.arange(n) + 1.0) / (2.0 * n))
        out[k] = scale * (basis[:, None] * x).sum(axis=0)
    return out


def normalized_acf(frame: np.ndarray, max_lag: int) -> np.ndarray:
    """Direct-sum biased autocorrelation, normalized by lag 0."""
    x = frame - frame.mean()
    r0 = float(np.dot(x, x))
    if r0 < 1e-12:
        return np.zeros(max_lag + 1)
    out = np.empty(max_lag + 1)
    for k in range(max_lag + 1):
        out[k] = float(np.dot(x[: x.size - k], x[k:])) / r0
    return out


def brute_force_dtw_cost(dist: np.ndarray) -> float:
    """Minimum path cost over all monotone step-{(1,0),(0,1),(1,1)} paths."""
    ta, tb = dist.shape
    best = [math.inf]

    def walk(i, j, cost):
        cost += dist[i, j]
        if cost >= best[0]:
            return
        if i == ta - 1 and j == tb - 1:
            best[0] = cost
            return
        if i + 1 < ta and j + 1 < tb:
            walk(i + 1, j + 1, cost)
        if i + 1 < ta:
            walk(i + 1, j, cost)
        if j + 1 < tb:
            walk(i, j + 1, cost)

    walk(0, 0, 0.0)
    return best[0]


def _compositions(total: int, parts: int):
    """All tuples of `parts` positive ints summing to `total`."""
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first, *rest)


def gaussian_logpdf(x, mu, sigma):
    return -0.5 * math.log(2.0 * math.pi) - np.log(sigma) \
        - (x - mu) ** 2 / (2.0 * sigma**2)


def brute_force_mas(x: np.ndarray, mu: np.ndarray, sigma: np.ndarray):
    """Exhaustively score every monotone surjective alignment.

    Ties are broken toward longer durations for later phonemes, i.e. the
    lexicographically largest reversed duration tuple, which matches a
    backtrack that prefers staying on the current phoneme.

    Returns (durations, score).
    """
    d, n = mu.shape
    t = x.shape[1]
    loglik = np.zeros((n, t))
    for i in range(n):
        for frame in range(t):
            loglik[i, frame] = float(
                np.sum(gaussian_logpdf(x[:, frame], mu[:, i], sigma[:, i])))
    best_key, best_durs = None, None
    for durs in _compositions(t, n):
        score = 0.0
        frame = 0
        for i, dur in enumerate(durs):
            score += float(loglik[i, frame : frame + dur].sum())
            frame += dur
        key = (score, tuple(reversed(durs)))
        if best_key is None or key > best_key:
            best_key, best_durs = key, durs
    return np.array(best_durs), best_key[0]


def numerical_jacobian(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference Jacobian of a vector function."""
    y0 = fn(x)
    jac = np.zeros((y0.size, x.size))
    for j in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[j] += step
        xm.flat[j] -= step
        jac[:, j] = (fn(xp) - fn(xm)) / (2.0 * step)
    return jac


def finite_diff_scalar_grad(fn, values: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    grad = np.zeros_like(values)
    for j in range(values.size):
        vp, vm = values.copy(), values.copy()
        vp.flat[j] += step
        vm.flat[j] -= step
        grad.flat[j] = (fn(vp) - fn(vm)) / (2.0 * step)
    return grad


def mel_triangle_coverage(sample_rate, fft_size, n_mels, bin_index) -> list:
    """Which triangular mel bands strictly cover a given FFT bin.

    Independently reconstructs the band edges (HTK mel scale, equal spacing
    in mel between 0 and Nyquist).
    """
    freq = bin_index * sample_rate / fft_size

    def to_mel(f):
        return 2595.0 * math.log10(1.0 + f / 700.0)

    def to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    top = to_mel(sample_rate / 2.0)
    covered = []
    for i in range(n_mels):
        lo = to_hz(top * i / (n_mels + 1))
        hi = to_hz(top * (i + 2) / (n_mels + 1))
        if lo < freq < hi:
            covered.append(i)
    return covered
