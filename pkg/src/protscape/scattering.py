"""Diffusion wavelets and the geometric scattering transform.

A wavelet bank over a diffusion operator P and an increasing integer scale
sequence t_1 < ... < t_{J+1}:

    Psi_0 = I - P^{t_1}
    Psi_j = P^{t_j} - P^{t_{j+1}}      1 <= j <= J
    lowpass = P^{t_{J+1}}

so the bank telescopes: sum_j Psi_j + lowpass = I. Dyadic scales are
t_j = 2^{j-1}. The learnable variant replaces each hard power P^{t_j} by a
softmax mixture over P^1..P^{t_max}, which keeps the telescoping identity
exactly and makes the scales trainable.

Scattering applies the modulus M x = |x| between wavelet layers:

    U[j] x       = M Psi_j x
    U[j1, j2] x  = M Psi_{j2} M Psi_{j1} x

The exported feature map keeps the lowpass pass-through (order zero), all
first-order coefficients, and second-order coefficients with j1 < j2.

Everything here is written against +, -, @ and abs so the same code runs
on plain ndarrays and on autodiff Tensors; the model trains the scale
logits through this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff
from .autodiff import Tensor
from .diffusion import matrix_powers


def feature_count(J: int, n_channels: int) -> int:
    """Features per node: C * (1 + (J+1) + (J+1)J/2)."""
    return n_channels * (1 + (J + 1) + (J + 1) * J // 2)


def second_order_pairs(J: int) -> list[tuple[int, int]]:
    return [(j1, j2) for j1 in range(J + 1) for j2 in range(j1 + 1, J + 1)]


def _check_scales(scales) -> list[int]:
    raw = list(scales)
    if any(int(t) != t for t in raw):
        raise ValueError(f"scales must be whole numbers, got {raw}")
    scales = [int(t) for t in raw]
    if len(scales) < 2:
        raise ValueError("need at least two scales (t_1 and t_{J+1})")
    if scales[0] < 1 or any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError(f"scales must be strictly increasing integers >= 1, got {scales}")
    return scales


def dyadic_scales(J: int) -> list[int]:
    """[1, 2, 4, ..., 2^J]: the J+2 powers are implied by J+1 boundaries."""
    if J < 1:
        raise ValueError("J must be at least 1")
    return [2**j for j in range(J + 1)]


@dataclass
class WaveletBank:
    """J+1 wavelets plus the lowpass over one diffusion operator."""

    scales: list[int]
    wavelets: np.ndarray  # (J+1, n, n)
    lowpass: np.ndarray  # (n, n)

    @property
    def J(self) -> int:
        return len(self.scales) - 1

    @property
    def n(self) -> int:
        return self.lowpass.shape[0]


def generalized_bank(base: np.ndarray, scales) -> WaveletBank:
    """Bank over any square operator (lazy walk P, or its symmetric twin T)."""
    scales = _check_scales(scales)
    base = np.asarray(base, dtype=np.float64)
    n = base.shape[0]
    powers = matrix_powers(base, scales[-1])
    wavelets = np.empty((len(scales), n, n))
    wavelets[0] = np.eye(n) - powers[scales[0]]
    for j in range(1, len(scales)):
        wavelets[j] = powers[scales[j - 1]] - powers[scales[j]]
    return WaveletBank(scales=scales, wavelets=wavelets, lowpass=powers[scales[-1]].copy())


def dyadic_bank(base: np.ndarray, J: int) -> WaveletBank:
    return generalized_bank(base, dyadic_scales(J))


# -- learnable scale selection ----------------------------------------


def soft_selection(theta: np.ndarray) -> np.ndarray:
    """Row-wise softmax of the (J+1, t_max) scale logits."""
    theta = np.asarray(theta, dtype=np.float64)
    shifted = theta - theta.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def expected_scales(theta: np.ndarray) -> np.ndarray:
    """E_j = sum_t t * s_j[t] over diffusion times t = 1..t_max."""
    s = soft_selection(theta)
    t = np.arange(1, s.shape[1] + 1, dtype=np.float64)
    return s @ t


def scales_monotone(theta: np.ndarray) -> bool:
    """Whether the expected scales are strictly increasing across rows."""
    e = expected_scales(theta)
    return bool(np.all(np.diff(e) > 0.0))


def dyadic_logits(J: int, t_max: int, sharpness: float = 4.0) -> np.ndarray:
    """Scale logits whose softmax concentrates on the dyadic scales."""
    scales = dyadic_scales(J)
    if scales[-1] > t_max:
        raise ValueError(f"t_max={t_max} too small for dyadic scales up to {scales[-1]}")
    theta = np.zeros((J + 1, t_max))
    for j, t in enumerate(scales):
        theta[j, t - 1] = sharpness
    return theta


def soft_bank(powers: np.ndarray, theta) -> tuple[list, object]:
    """Wavelets and lowpass from soft scale selection.

    powers is the constant stack [P^0..P^t_max] of matrix_powers(); theta is
    the (J+1, t_max) logit array, ndarray or Tensor. Returns
    (wavelets list, lowpass) in the same flavor as theta, with
    soft-P_j = sum_t softmax(theta_j)[t] * P^t.
    """
    n = powers.shape[1]
    t_max = powers.shape[0] - 1
    flat = powers[1:].reshape(t_max, n * n)  # row t-1 is vec(P^t)
    if isinstance(theta, Tensor):
        if theta.shape[1] != t_max:
            raise ValueError(f"theta has {theta.shape[1]} columns, powers give {t_max}")
        sel = autodiff.transpose(autodiff.softmax_cols(autodiff.transpose(theta)))
        mixed = autodiff.matmul(sel, autodiff.wrap(flat))
        soft_p = [
            autodiff.reshape(autodiff.row_gather(mixed, [j]), (n, n))
            for j in range(theta.shape[0])
        ]
        eye = autodiff.wrap(np.eye(n))
    else:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape[1] != t_max:
            raise ValueError(f"theta has {theta.shape[1]} columns, powers give {t_max}")
        mixed = soft_selection(theta) @ flat
        soft_p = [mixed[j].reshape(n, n) for j in range(theta.shape[0])]
        eye = np.eye(n)
    wavelets = [eye - soft_p[0]]
    for j in range(1, len(soft_p)):
        wavelets.append(soft_p[j - 1] - soft_p[j])
    return wavelets, soft_p[-1]


def learnable_bank(P: np.ndarray, theta: np.ndarray) -> WaveletBank:
    """Numpy WaveletBank from soft scale selection (for frozen logits)."""
    theta = np.asarray(theta, dtype=np.float64)
    powers = matrix_powers(P, theta.shape[1])
    wavelets, lowpass = soft_bank(powers, theta)
    e = expected_scales(theta)
    return WaveletBank(
        scales=[int(round(v)) for v in e],
        wavelets=np.stack(wavelets),
        lowpass=lowpass,
    )


# -- scattering --------------------------------------------------------


def _is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def apply_tuple(wavelets, x, js):
    """U[j1..jl] x = M Psi_{jl} ... M Psi_{j1} x, applied left to right."""
    y = x
    for j in js:
        y = abs(wavelets[j] @ y)
    return y


def all_tuples(J: int, order: int) -> list[tuple[int, ...]]:
    """Every (J+1)^order tuple of wavelet indices, lexicographic."""
    tuples = [()]
    for _ in range(order):
        tuples = [t + (j,) for t in tuples for j in range(J + 1)]
    return tuples


def scattering_layout(J: int, n_channels: int) -> list[tuple]:
    """Column labels of the feature matrix, channel-major then order-major.

    Per channel c: (0, c), then (1, j, c) for j = 0..J, then (2, j1, j2, c)
    for j1 < j2.
    """
    layout = []
    for c in range(n_channels):
        layout.append((0, c))
        for j in range(J + 1):
            layout.append((1, j, c))
        for j1, j2 in second_order_pairs(J):
            layout.append((2, j1, j2, c))
    return layout


def _channel_major_permutation(J: int, n_channels: int) -> np.ndarray:
    """Column permutation taking order-major blocks to channel-major layout."""
    per_channel = 1 + (J + 1) + len(second_order_pairs(J))
    F = per_channel * n_channels
    perm = np.zeros((F, F))
    for b in range(per_channel):
        for c in range(n_channels):
            perm[b * n_channels + c, c * per_channel + b] = 1.0
    return perm


def scatter_coeffs(wavelets, lowpass, X):
    """(n, F) scattering features of the (n, C) signal matrix X.

    Works on ndarrays or Tensors. Column order is channel-major,
    matching scattering_layout().
    """
    J = len(wavelets) - 1
    blocks = [lowpass @ X]
    firsts = [abs(w @ X) for w in wavelets]
    blocks.extend(firsts)
    for j1, j2 in second_order_pairs(J):
        blocks.append(abs(wavelets[j2] @ firsts[j1]))
    if _is_tensor(X) or _is_tensor(wavelets[0]):
        om = autodiff.hconcat(blocks)
        n_channels = X.shape[1]
        return autodiff.matmul(om, autodiff.wrap(_channel_major_permutation(J, n_channels)))
    om = np.concatenate(blocks, axis=1)
    return om @ _channel_major_permutation(J, X.shape[1])


@dataclass
class ScatteringOutput:
    """Scattering features with their frozen column layout."""

    coeffs: np.ndarray  # (n, F)
    layout: list[tuple]
    J: int
    n_channels: int

    def labels(self) -> list[str]:
        return ["(" + ",".join(str(v) for v in t) + ")" for t in self.layout]


def scatter(bank: WaveletBank, X: np.ndarray) -> ScatteringOutput:
    """Scattering transform of signals X under a fixed wavelet bank."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != bank.n:
        raise ValueError(f"X must be (n, C) with n={bank.n}, got {X.shape}")
    coeffs = scatter_coeffs(list(bank.wavelets), bank.lowpass, X)
    return ScatteringOutput(
        coeffs=coeffs,
        layout=scattering_layout(bank.J, X.shape[1]),
        J=bank.J,
        n_channels=X.shape[1],
    )
