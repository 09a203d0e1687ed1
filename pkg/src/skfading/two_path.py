"""Feedback iteration for the two-path (single-ISI-tap) fading channel.

The second path is treated as an amplify-and-forward relay: a sign pilot
reveals sgn(h1*h2), a two-slot initialization combines both looks at the
first symbol, and the iteration alternates the phase so both paths add
constructively. A fixed-point variance ratio and a one-shot artificial
noise injection pin the variance trajectory to its steady state, giving a
closed-form rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import InfeasibleError, modulo_reduce, q_tail_inv
from .quasi_static import quantize_feedback

__all__ = [
    "TwoPathChannel",
    "TransmitterCsi2",
    "TwoPathParams",
    "sign_product",
    "pilot_sign",
    "combining_weight",
    "init_estimate",
    "solve_rho_star",
    "calibrate_artificial_noise",
    "derive_params2",
    "rate_theorem2",
    "rate_tp_benchmark",
    "tx_step2",
    "rx_aux2",
    "rx_feedback2",
    "mmse_coefficients2",
    "phase_factor",
]


@dataclass(frozen=True)
class TwoPathChannel:
    """True channel state; the second tap delays the input by one slot."""

    h1: float
    h2: float
    sigma2: float
    P: float
    P_tilde: float
    sigma_z: float

    def __post_init__(self) -> None:
        if self.h1 == 0 or self.h2 == 0:
            raise ValueError("both path gains must be nonzero")
        if self.sigma2 <= 0 or self.P <= 0 or self.P_tilde <= 0:
            raise ValueError("sigma2, P and P_tilde must be positive")
        if self.sigma_z < 0:
            raise ValueError("sigma_z must be nonnegative")

    @property
    def snr(self) -> float:
        return self.P / self.sigma2


@dataclass(frozen=True)
class TransmitterCsi2:
    """Estimates of the two path gains under one distortion bound."""

    h1_hat: float
    h2_hat: float
    distortion: float

    def __post_init__(self) -> None:
        if self.distortion < 0:
            raise ValueError("distortion bound must be nonnegative")

    @property
    def conservative_gains(self):
        d = self.distortion
        return max(abs(self.h1_hat) - d, 0.0), max(abs(self.h2_hat) - d, 0.0)


@dataclass(frozen=True)
class TwoPathParams:
    """Derived constants of the two-path scheme.

    Arrays are indexed by time: feedback_gains[i] is the scaling used in
    the feedback at time i (valid for 2 <= i <= n-1) and
    err_var_conservative[i] is the worst-case error variance at time i
    (valid for 2 <= i <= n). Index positions below 2 are zero padding.
    """

    n: int
    eps: float
    sigma2: float
    P: float
    P_tilde: float
    sigma_z: float
    scaled_err_var: float
    arg_var_bound: float
    power_gain: float
    lattice_spacing: float
    var_ratio_3: float
    var_ratio_4: float
    var_ratio_star: float
    art_noise_var: float
    feedback_gains: np.ndarray
    err_var_conservative: np.ndarray
    rate: float
    no_positive_rate: bool

    @property
    def snr(self) -> float:
        return self.P / self.sigma2


def sign_product(h1, h2):
    """sgn(h1*h2) with the sign convention sgn(0) = +1."""
    prod = np.asarray(h1) * np.asarray(h2)
    out = np.where(prod >= 0, 1.0, -1.0)
    if out.ndim == 0:
        return float(out)
    return out


def pilot_sign(truth: TwoPathChannel) -> float:
    """Sign of the path product as recovered from the feedback pilot.

    The receiver sends +-2*sigma_z; that amplitude is a quantizer lattice
    point, so it passes with zero quantization noise and the transmitter
    reads the sign exactly. With sigma_z = 0 the pilot amplitude
    degenerates and the sign is conveyed as side information.
    """
    s = sign_product(truth.h1, truth.h2)
    if truth.sigma_z == 0.0:
        return s
    pilot = s * 2.0 * truth.sigma_z
    received, _ = quantize_feedback(pilot, truth.sigma_z)
    return 1.0 if received >= 0 else -1.0


def combining_weight(h1, h2):
    """Weight on the first-path look that minimizes the combined error."""
    return h1 * h1 / (h1 * h1 + h2 * h2)


def init_estimate(y1, y2, h1, h2, P):
    """Two-slot initial estimate from both looks at the first symbol."""
    kappa = combining_weight(h1, h2)
    root = math.sqrt(12.0 * P)
    return kappa * y1 / (h1 * root) + (1.0 - kappa) * y2 / (h2 * root)


def solve_rho_star(H1: float, H2: float, snr: float, a_over_b: float = 1.0) -> float:
    """Steady-state ratio of consecutive error variances.

    Solves rho = 1/(1 + (H1 + H2 sqrt(rho))^2 * snr * a_over_b) on
    [rho_4, 1) by bisection; the bracket is guaranteed because the map is
    below the identity at 1 and above it at rho_4.
    """
    if H1 < 0 or H2 < 0:
        raise ValueError("conservative gains are nonnegative by construction")
    if H1 == 0 and H2 == 0:
        raise InfeasibleError("no positive rate: both conservative gains vanish")
    c = snr * a_over_b
    if H2 == 0.0:
        return 1.0 / (1.0 + H1 * H1 * c)
    rho3 = 1.0 / (1.0 + H1 * H1 * c)
    lo = 1.0 / (1.0 + (H1 + H2 * math.sqrt(rho3)) ** 2 * c)  # rho_4
    hi = 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid < 1.0 / (1.0 + (H1 + H2 * math.sqrt(mid)) ** 2 * c):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_artificial_noise(
    H1: float,
    H2: float,
    rho3: float,
    rho_star: float,
    P: float,
    a_over_b: float,
    sigma2: float,
) -> float:
    """Variance of the one-shot noise that starts the ratio at rho_star.

    Solving rho_4^u = rho_star for the time-4 effective noise variance and
    subtracting sigma2; clamped at zero when the trajectory already starts
    at or past the steady point (a roundoff-only case).
    """
    gain = (H1 + H2 * math.sqrt(rho3)) ** 2
    var = gain * P * a_over_b * rho_star / (1.0 - rho_star) - sigma2
    return max(var, 0.0)


def derive_params2(
    sigma2: float,
    P: float,
    P_tilde: float,
    sigma_z: float,
    csi: TransmitterCsi2,
    n: int,
    eps: float,
) -> TwoPathParams:
    """Derive the two-path scheme constants from public quantities."""
    if n < 4:
        raise ValueError("the two-path scheme needs blocklength at least 4")
    if not (0.0 < eps < 1.0):
        raise ValueError("target error probability must lie in (0, 1)")
    if sigma2 <= 0 or P <= 0 or P_tilde <= 0 or sigma_z < 0:
        raise ValueError("invalid channel budget parameters")
    root3p = math.sqrt(3.0 * P_tilde)
    if root3p <= sigma_z:
        raise InfeasibleError(
            f"feedback lattice too small: sqrt(3*P_tilde)={root3p:.4g} "
            f"must exceed sigma_z={sigma_z:.4g}"
        )
    snr = P / sigma2
    a = ((root3p - sigma_z) / q_tail_inv(eps / (4.0 * (n - 2)))) ** 2
    b = (math.sqrt(a) + sigma_z) ** 2 + 1.5 * P_tilde * eps
    alpha = math.sqrt(P / b)
    spacing = math.sqrt(12.0 * P_tilde)

    g1, g2 = csi.conservative_gains
    if g1 == 0.0 and g2 == 0.0:
        return TwoPathParams(
            n=n, eps=eps, sigma2=sigma2, P=P, P_tilde=P_tilde, sigma_z=sigma_z,
            scaled_err_var=a, arg_var_bound=b, power_gain=alpha,
            lattice_spacing=spacing,
            var_ratio_3=1.0, var_ratio_4=1.0, var_ratio_star=1.0,
            art_noise_var=0.0,
            feedback_gains=np.zeros(0), err_var_conservative=np.zeros(0),
            rate=0.0, no_positive_rate=True,
        )

    c = snr * a / b
    rho3 = 1.0 / (1.0 + g1 * g1 * c)
    rho4 = 1.0 / (1.0 + (g1 + g2 * math.sqrt(rho3)) ** 2 * c)
    rho_star = solve_rho_star(g1, g2, snr, a / b)
    art_var = calibrate_artificial_noise(g1, g2, rho3, rho_star, P, a / b, sigma2)

    # worst-case variance trajectory, time-indexed, entries 2..n; evaluated
    # in the log domain because it spans many orders of magnitude at large n
    log_var = np.zeros(n + 1)
    log_var[2] = math.log(sigma2 / (12.0 * P * (g1 * g1 + g2 * g2)))
    log_var[3] = log_var[2] + math.log(rho3)
    log_var[4:] = log_var[3] + math.log(rho_star) * np.arange(1, n - 2)
    err_var = np.exp(log_var)
    err_var[:2] = 0.0
    gains = np.zeros(n)
    # late-time gains can exceed the double range at blocklengths far past
    # anything simulatable; rate evaluation never touches them
    with np.errstate(over="ignore"):
        gains[2: n] = np.exp(0.5 * (math.log(a) - log_var[2: n]))

    l_factor = 4.0 * q_tail_inv(eps / 4.0) ** 2
    steady = (g1 + g2 * math.sqrt(rho_star)) ** 2 * c
    raw_rate = (n - 3) / (2.0 * n) * math.log2(1.0 + steady) \
        - 1.0 / (2.0 * n) * math.log2(
            l_factor * rho3 / (12.0 * (g1 * g1 + g2 * g2) * snr)
        )
    return TwoPathParams(
        n=n, eps=eps, sigma2=sigma2, P=P, P_tilde=P_tilde, sigma_z=sigma_z,
        scaled_err_var=a, arg_var_bound=b, power_gain=alpha,
        lattice_spacing=spacing,
        var_ratio_3=rho3, var_ratio_4=rho4, var_ratio_star=rho_star,
        art_noise_var=art_var,
        feedback_gains=gains, err_var_conservative=err_var,
        rate=max(raw_rate, 0.0), no_positive_rate=False,
    )


def rate_theorem2(params: TwoPathParams) -> float:
    return params.rate


def rate_tp_benchmark(h1: float, h2: float, snr: float, n: int, eps: float) -> float:
    """Closed-form rate with perfect CSI and noiseless feedback.

    Same structure with the fixed point driven by the true gains and the
    decode margin relaxed to Q^{-1}(eps/2).
    """
    if h1 == 0 or h2 == 0:
        raise ValueError("benchmark rate needs two nonzero paths")
    if n < 4:
        raise ValueError("blocklength must be at least 4")
    rho3 = 1.0 / (1.0 + h1 * h1 * snr)
    rho_star = solve_rho_star(abs(h1), abs(h2), snr, 1.0)
    l_factor = 4.0 * q_tail_inv(eps / 2.0) ** 2
    steady = (abs(h1) + abs(h2) * math.sqrt(rho_star)) ** 2 * snr
    return (n - 3) / (2.0 * n) * math.log2(1.0 + steady) \
        - 1.0 / (2.0 * n) * math.log2(
            l_factor * rho3 / (12.0 * (h1 * h1 + h2 * h2) * snr)
        )


# ---------------------------------------------------------------------------
# transmitter / receiver steps
# ---------------------------------------------------------------------------

def phase_factor(sign, power: int):
    """sign**power for +-1 signs, vectorized without pow calls."""
    if power % 2 == 0:
        return np.ones_like(np.asarray(sign, dtype=float))
    return np.asarray(sign, dtype=float)


def tx_step2(
    feedback_prev,
    gain_prev,
    theta,
    dither_prev,
    sign,
    k: int,
    params: TwoPathParams,
    art_noise=0.0,
):
    """Transmitter iteration at time k >= 3.

    The artificial noise enters the modulo argument once, at k = 4; the
    receiver mirrors it in the auxiliary signal.
    """
    arg = feedback_prev - gain_prev * theta - dither_prev + art_noise
    return phase_factor(sign, k - 2) * params.power_gain * modulo_reduce(arg, params.lattice_spacing)


def rx_aux2(
    y,
    z_prev,
    z_prev2,
    ydot_prev,
    gain_prev2,
    beta_prev2,
    h1,
    h2,
    sign,
    k: int,
    params: TwoPathParams,
    art_noise=0.0,
    art_noise_prev=0.0,
):
    """Auxiliary signal at time k >= 3: strip everything the receiver knows.

    Removes the quantization-noise images on both paths and the relay echo
    of the previous update; what is left is the scaled previous error plus
    fresh channel noise. The injected artificial noise is subtracted from
    the first-path image and re-added cleanly, so at k = 4 the effective
    noise variance is sigma2 + art_noise_var exactly; at k = 5 its echo on
    the delayed path is removed.
    """
    alpha = params.power_gain
    direct = phase_factor(sign, k - 2) * h1 * alpha * (z_prev + art_noise)
    if k == 3:
        return y - direct
    relay_echo = z_prev2 + gain_prev2 * beta_prev2 * ydot_prev + art_noise_prev
    return y - direct - phase_factor(sign, k - 3) * h2 * alpha * relay_echo + art_noise


def rx_feedback2(theta_hat, gain_i, dither_i, params: TwoPathParams):
    """Receiver feedback symbol, identical in shape to the single-path one."""
    return modulo_reduce(gain_i * theta_hat + dither_i, params.lattice_spacing)


def mmse_coefficients2(params: TwoPathParams, h1, h2, sign):
    """Receiver MMSE gains driven by the true path gains.

    Broadcasts over arrays of (h1, h2, sign). Returns (beta, err_var,
    combined_gain), all time-indexed arrays of length n+1: beta[i] applies
    at time i+1 (valid 2..n-1), err_var[i] is the true coupled error
    variance at time i (valid 2..n), combined_gain[i] is the two-path
    effective gain multiplying the error at time i+1 (valid 2..n-1).
    """
    if params.no_positive_rate:
        raise InfeasibleError("parameters flag no positive rate; nothing to iterate")
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    sign = np.asarray(sign, dtype=float)
    shape = np.broadcast_shapes(h1.shape, h2.shape, sign.shape)
    scalar = (shape == ())
    n = params.n
    alpha = params.power_gain
    sigma2 = params.sigma2
    beta = np.zeros(shape + (n + 1,))
    err_var = np.zeros(shape + (n + 1,))
    combined = np.zeros(shape + (n + 1,))
    var = np.broadcast_to(
        sigma2 / (12.0 * params.P * (h1 * h1 + h2 * h2)), shape
    ).copy()
    err_var[..., 2] = var
    for i in range(2, n):
        if i == 2:
            xi = phase_factor(sign, 1) * h1 * params.feedback_gains[2]
        else:
            xi = (
                phase_factor(sign, i - 1) * h1 * params.feedback_gains[i]
                + phase_factor(sign, i - 2) * h2 * params.feedback_gains[i - 1]
            )
        noise = sigma2 + (params.art_noise_var if i == 3 else 0.0)
        combined[..., i] = xi
        beta[..., i] = alpha * xi * var / (alpha * alpha * xi * xi * var + noise)
        var = var / (1.0 + alpha * alpha * xi * xi * var / noise)
        err_var[..., i + 1] = var
    if scalar:
        return beta.reshape(n + 1), err_var.reshape(n + 1), combined.reshape(n + 1)
    return beta, err_var, combined
