"""Trial execution and Monte Carlo aggregation for all three schemes.

Every random quantity is drawn from a counter-keyed Philox stream derived
from (master seed, trial index, purpose tag), so a trial is a pure
function of its configuration: identical configurations give identical
results, trials are order-independent, and the coupled-system runs reuse
the exact noise realizations of their original-system partners (common
random numbers).

The per-trial state machines are expressed with array-broadcasting step
functions, so one code path serves both single-trial inspection and
batches of 10^5 trials run in lockstep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numpy.random import Generator, Philox

from . import multi_path as mp
from . import quasi_static as qs
from . import two_path as tp
from .numerics import InfeasibleError, philox_key

__all__ = [
    "TAG_NOISE",
    "TAG_DITHER",
    "TAG_ENV",
    "QuasiStaticScenario",
    "TwoPathScenario",
    "MultiPathScenario",
    "TrialConfig",
    "TrialResult",
    "CoupledTrialResult",
    "MonteCarloReport",
    "wilson_interval",
    "realize_noise",
    "run_trial",
    "coupled_mode_trial",
    "monte_carlo",
]

TAG_NOISE = 1
TAG_DITHER = 2
TAG_ENV = 3

_WILSON_Z = 1.959963984540054  # two-sided 95%


# ---------------------------------------------------------------------------
# scenarios and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuasiStaticScenario:
    """Single-path setup; h=None draws the true gain uniformly in the
    distortion ball around the estimate, fresh per trial."""

    h_hat: float
    distortion: float
    sigma2: float
    P: float
    P_tilde: float
    sigma_z: float
    n: int
    eps: float
    h: Optional[float] = None
    noise_scale: float = 1.0  # scales realized forward noise; 0 = noiseless loop

    scheme_id = 1

    def derive(self) -> qs.QuasiStaticParams:
        return qs.derive_params1(
            self.sigma2, self.P, self.P_tilde, self.sigma_z,
            qs.TransmitterCsi(self.h_hat, self.distortion), self.n, self.eps,
        )


@dataclass(frozen=True)
class TwoPathScenario:
    h1_hat: float
    h2_hat: float
    distortion: float
    sigma2: float
    P: float
    P_tilde: float
    sigma_z: float
    n: int
    eps: float
    h1: Optional[float] = None
    h2: Optional[float] = None
    noise_scale: float = 1.0

    scheme_id = 2

    def derive(self) -> tp.TwoPathParams:
        return tp.derive_params2(
            self.sigma2, self.P, self.P_tilde, self.sigma_z,
            tp.TransmitterCsi2(self.h1_hat, self.h2_hat, self.distortion),
            self.n, self.eps,
        )


@dataclass(frozen=True)
class MultiPathScenario:
    """Noiseless-feedback multi-path setup with perfect CSI; subchannels
    None lets the planner scan every admissible count."""

    h: tuple
    sigma2: float
    P: float
    n: int
    eps: float
    subchannels: Optional[int] = None
    noise_scale: float = 1.0

    scheme_id = 3

    def derive(self) -> mp.BlockPlan:
        channel = mp.MultiPathChannel(self.h, self.sigma2, self.P)
        if self.subchannels is None:
            return mp.optimize_subchannel_count(channel, self.n, self.eps)
        return mp.plan_block(channel, self.n, self.eps, self.subchannels)


Scenario = Union[QuasiStaticScenario, TwoPathScenario, MultiPathScenario]


@dataclass(frozen=True)
class TrialConfig:
    scenario: Scenario
    master_seed: int
    trial_index: int = 0


@dataclass
class TrialResult:
    decoded_correctly: bool
    per_iteration_epsilon: np.ndarray
    aliasing_events: np.ndarray
    used_power_forward: float
    used_power_feedback: float


@dataclass
class CoupledTrialResult(TrialResult):
    cancellation_residual: float = 0.0


@dataclass
class MonteCarloReport:
    trials: int
    error_count: int
    dep_estimate: float
    wilson_lo: float
    wilson_hi: float
    mean_var_trajectory: np.ndarray
    aliasing_rate_per_iteration: np.ndarray
    avg_forward_power: float
    avg_feedback_power: float


def wilson_interval(errors: int, trials: int, z: float = _WILSON_Z):
    """Wilson score interval for a binomial proportion (valid at 0 errors)."""
    if trials < 1:
        raise ValueError("need at least one trial")
    p = errors / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2.0 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom
    # roundoff guard: the interval always contains the point estimate
    return min(max(center - half, 0.0), p), max(min(center + half, 1.0), p)


def _alias_event(arg, half):
    """Modulo-aliasing indicator: argument outside [-half, half)."""
    return (arg < -half) | (arg >= half)


# ---------------------------------------------------------------------------
# keyed randomness
# ---------------------------------------------------------------------------

def _stream(master_seed: int, trial_index: int, tag: int) -> Generator:
    return Generator(Philox(key=philox_key(master_seed, trial_index, tag)))


def _normal_rows(master_seed, indices, count) -> np.ndarray:
    out = np.empty((len(indices), count))
    for r, ix in enumerate(indices):
        out[r] = _stream(master_seed, int(ix), TAG_NOISE).standard_normal(count)
    return out


def _dither_rows(master_seed, indices, count, spacing) -> np.ndarray:
    out = np.empty((len(indices), count))
    for r, ix in enumerate(indices):
        out[r] = _stream(master_seed, int(ix), TAG_DITHER).random(count)
    return (out - 0.5) * spacing


def realize_noise(config: TrialConfig, i: int):
    """Forward noise at time i (1-based), keyed by (seed, trial, i).

    Schemes 1-2 use one real normal per time step; scheme 3 consumes two
    per step for the circularly symmetric complex noise with independent
    real/imaginary parts of variance sigma2/2 each.
    """
    scenario = config.scenario
    if not (1 <= i <= scenario.n):
        raise ValueError(f"time index {i} outside 1..{scenario.n}")
    gen = _stream(config.master_seed, config.trial_index, TAG_NOISE)
    if scenario.scheme_id == 3:
        draws = gen.standard_normal(2 * i)
        scale = scenario.noise_scale * math.sqrt(scenario.sigma2 / 2.0)
        return complex(scale * draws[2 * i - 2], scale * draws[2 * i - 1])
    draws = gen.standard_normal(i)
    return scenario.noise_scale * math.sqrt(scenario.sigma2) * draws[i - 1]


def _env_quasi_static(scenario, master_seed, indices, msg_count):
    """Per-trial channel draw and message, in a fixed stream order."""
    h = np.empty(len(indices))
    w = np.empty(len(indices), dtype=np.int64)
    for r, ix in enumerate(indices):
        gen = _stream(master_seed, int(ix), TAG_ENV)
        u = gen.random()
        if scenario.h is not None:
            h[r] = scenario.h
        else:
            h[r] = scenario.h_hat + scenario.distortion * (2.0 * u - 1.0)
        w[r] = gen.integers(1, msg_count + 1)
    return h, w


def _env_two_path(scenario, master_seed, indices, msg_count, art_std):
    h1 = np.empty(len(indices))
    h2 = np.empty(len(indices))
    w = np.empty(len(indices), dtype=np.int64)
    art = np.empty(len(indices))
    for r, ix in enumerate(indices):
        gen = _stream(master_seed, int(ix), TAG_ENV)
        u1, u2 = gen.random(), gen.random()
        h1[r] = scenario.h1 if scenario.h1 is not None else \
            scenario.h1_hat + scenario.distortion * (2.0 * u1 - 1.0)
        h2[r] = scenario.h2 if scenario.h2 is not None else \
            scenario.h2_hat + scenario.distortion * (2.0 * u2 - 1.0)
        w[r] = gen.integers(1, msg_count + 1)
        art[r] = art_std * gen.standard_normal()
    return h1, h2, w, art


def _env_multi_path(master_seed, indices, m_re, m_im):
    k = len(m_re)
    w_re = np.empty((len(indices), k), dtype=np.int64)
    w_im = np.empty((len(indices), k), dtype=np.int64)
    for r, ix in enumerate(indices):
        gen = _stream(master_seed, int(ix), TAG_ENV)
        for col in range(k):
            w_re[r, col] = gen.integers(1, int(m_re[col]) + 1)
            w_im[r, col] = gen.integers(1, int(m_im[col]) + 1)
    return w_re, w_im


# ---------------------------------------------------------------------------
# scheme 1 engine
# ---------------------------------------------------------------------------

def _engine_quasi_static(scenario, master_seed, indices, coupled: bool):
    params = scenario.derive()
    if params.no_positive_rate:
        raise InfeasibleError("scenario admits no positive rate (csi ball contains 0)")
    n = params.n
    count = qs.message_size(n, params.rate)
    t = len(indices)
    noise = scenario.noise_scale * math.sqrt(params.sigma2) \
        * _normal_rows(master_seed, indices, n)
    dithers = _dither_rows(master_seed, indices, n - 1, params.lattice_spacing)
    h, w = _env_quasi_static(scenario, master_seed, indices, count)
    theta = qs.map_message(w, count)
    beta, _ = qs.mmse_coefficients1(params, h)

    gam = params.feedback_gains
    half = params.lattice_spacing / 2.0
    root12p = math.sqrt(12.0 * params.P)
    eps = np.empty((t, n))
    alias = np.zeros((t, n - 1), dtype=bool)
    z_hist = np.zeros((t, n - 1))

    x = root12p * theta
    pow_fwd = x * x
    y = h * x + noise[:, 0]
    theta_hat = y / (h * root12p)
    eps[:, 0] = theta_hat - theta
    x_t = qs.rx_feedback1(theta_hat, gam[0], dithers[:, 0], params)
    y_t, z = qs.quantize_feedback(x_t, params.sigma_z)
    pow_fb = x_t * x_t
    z_hist[:, 0] = z
    for i in range(2, n + 1):
        ii = i - 2
        alias[:, ii] = _alias_event(gam[ii] * eps[:, i - 2] + z, half)
        x = qs.tx_step1(y_t, gam[ii], theta, dithers[:, ii], params)
        y = h * x + noise[:, i - 1]
        theta_hat, _ = qs.rx_update1(theta_hat, y, z, h, beta[:, ii], params)
        eps[:, i - 1] = theta_hat - theta
        pow_fwd += x * x
        if i <= n - 1:
            x_t = qs.rx_feedback1(theta_hat, gam[i - 1], dithers[:, i - 1], params)
            y_t, z = qs.quantize_feedback(x_t, params.sigma_z)
            pow_fb += x_t * x_t
            z_hist[:, i - 1] = z
    correct = qs.decode_midpoint(theta_hat, count) == w
    original = {
        "correct": np.atleast_1d(correct),
        "eps": eps,
        "alias": alias,
        "pow_fwd": pow_fwd / n,
        "pow_fb": pow_fb / n,
    }
    if not coupled:
        return original

    # coupled partner: modulo functions removed, same h, noises, dithers
    # and the same quantization-noise realizations
    alpha = params.power_gain
    eps_c = np.empty((t, n))
    alias_c = np.zeros((t, n - 1), dtype=bool)
    residual = 0.0
    theta_hat_c = theta + noise[:, 0] / (h * root12p)
    eps_c[:, 0] = theta_hat_c - theta
    alias_c[:, 0] = _alias_event(gam[0] * eps_c[:, 0] + z_hist[:, 0], half)
    x_tc = gam[0] * theta_hat_c + dithers[:, 0]
    for i in range(2, n + 1):
        ii = i - 2
        z = z_hist[:, ii]
        y_tc = x_tc + z
        x_c = alpha * (y_tc - gam[ii] * theta - dithers[:, ii])
        y_c = h * x_c + noise[:, i - 1]
        y_dot = y_c - h * alpha * z
        expected = h * alpha * gam[ii] * eps_c[:, i - 2] + noise[:, i - 1]
        residual = max(residual, float(np.max(np.abs(y_dot - expected))))
        theta_hat_c = theta_hat_c - beta[:, ii] * y_dot
        eps_c[:, i - 1] = theta_hat_c - theta
        if i <= n - 1:
            alias_c[:, i - 1] = _alias_event(
                gam[i - 1] * eps_c[:, i - 1] + z_hist[:, i - 1], half
            )
            x_tc = gam[i - 1] * theta_hat_c + dithers[:, i - 1]
    correct_c = qs.decode_midpoint(theta_hat_c, count) == w
    return {
        "correct": np.atleast_1d(correct_c),
        "eps": eps_c,
        "alias": alias_c,
        "pow_fwd": original["pow_fwd"],
        "pow_fb": original["pow_fb"],
        "residual": residual,
    }


# ---------------------------------------------------------------------------
# scheme 2 engine
# ---------------------------------------------------------------------------

def _engine_two_path(scenario, master_seed, indices, coupled: bool):
    params = scenario.derive()
    if params.no_positive_rate:
        raise InfeasibleError("scenario admits no positive rate (csi balls contain 0)")
    n = params.n
    count = qs.message_size(n, params.rate)
    t = len(indices)
    noise = scenario.noise_scale * math.sqrt(params.sigma2) \
        * _normal_rows(master_seed, indices, n)
    dithers = np.zeros((t, n + 1))
    dithers[:, 2:n] = _dither_rows(master_seed, indices, n - 2, params.lattice_spacing)
    art_std = math.sqrt(params.art_noise_var)
    h1, h2, w, art = _env_two_path(scenario, master_seed, indices, count, art_std)
    theta = qs.map_message(w, count)

    sign_true = tp.sign_product(h1, h2)
    # the pilot +-2 sigma_z passes the quantizer with zero noise, so the
    # transmitter recovers the sign exactly; verified per trial
    if params.sigma_z > 0:
        pilot_rx, _ = qs.quantize_feedback(sign_true * 2.0 * params.sigma_z, params.sigma_z)
        sign = np.where(pilot_rx >= 0, 1.0, -1.0)
    else:
        sign = sign_true
    pilot_ok = sign == sign_true

    beta, _, combined = tp.mmse_coefficients2(params, h1, h2, sign)
    gam = params.feedback_gains
    alpha = params.power_gain
    half = params.lattice_spacing / 2.0
    root12p = math.sqrt(12.0 * params.P)

    # two-slot initialization: X1 carries the message, X2 stays silent
    x1 = root12p * theta
    y1 = h1 * x1 + noise[:, 0]
    y2 = h2 * x1 + noise[:, 1]
    init = tp.init_estimate(y1, y2, h1, h2, params.P)

    def closed_loop(remove_modulo: bool):
        eps = np.zeros((t, n))
        alias = np.zeros((t, n - 1), dtype=bool)  # col i-1 holds the event at time i
        z_hist = np.zeros((t, n))
        residual = 0.0
        theta_hat = init.copy()
        eps[:, 0] = theta_hat - theta
        eps[:, 1] = eps[:, 0]
        pow_fwd = x1 * x1
        pow_fb = np.full(t, (2.0 * params.sigma_z) ** 2)  # pilot symbol
        if remove_modulo:
            x_t = gam[2] * theta_hat + dithers[:, 2]
            z_hist[:, 2] = z_orig[:, 2]
            y_t = x_t + z_hist[:, 2]
        else:
            x_t = tp.rx_feedback2(theta_hat, gam[2], dithers[:, 2], params)
            y_t, z_hist[:, 2] = qs.quantize_feedback(x_t, params.sigma_z)
        pow_fb += x_t * x_t
        alias[:, 1] = _alias_event(gam[2] * eps[:, 1] + z_hist[:, 2], half)
        x_prev = np.zeros(t)
        ydot_prev = np.zeros(t)
        for k in range(3, n + 1):
            u_now = art if k == 4 else 0.0
            u_prev = art if k == 5 else 0.0
            if remove_modulo:
                x = tp.phase_factor(sign, k - 2) * alpha * (
                    y_t - gam[k - 1] * theta - dithers[:, k - 1] + u_now
                )
            else:
                x = tp.tx_step2(y_t, gam[k - 1], theta, dithers[:, k - 1], sign, k,
                                params, art_noise=u_now)
            y = h1 * x + h2 * x_prev + noise[:, k - 1]
            y_dot = tp.rx_aux2(
                y, z_hist[:, k - 1], z_hist[:, k - 2], ydot_prev,
                gam[k - 2], beta[:, k - 2], h1, h2, sign, k, params,
                art_noise=u_now, art_noise_prev=u_prev,
            )
            if remove_modulo:
                expected = alpha * combined[:, k - 1] * eps[:, k - 2] \
                    + noise[:, k - 1] + u_now
                residual = max(residual, float(np.max(np.abs(y_dot - expected))))
            theta_hat = theta_hat - beta[:, k - 1] * y_dot
            eps[:, k - 1] = theta_hat - theta
            pow_fwd += x * x
            x_prev = x
            ydot_prev = y_dot
            if k <= n - 1:
                if remove_modulo:
                    x_t = gam[k] * theta_hat + dithers[:, k]
                    z_hist[:, k] = z_orig[:, k]
                    y_t = x_t + z_hist[:, k]
                else:
                    x_t = tp.rx_feedback2(theta_hat, gam[k], dithers[:, k], params)
                    y_t, z_hist[:, k] = qs.quantize_feedback(x_t, params.sigma_z)
                pow_fb += x_t * x_t
                alias[:, k - 1] = _alias_event(
                    gam[k] * eps[:, k - 1] + z_hist[:, k]
                    + (art if k == 3 else 0.0), half
                )
        correct = (qs.decode_midpoint(theta_hat, count) == w) & pilot_ok
        return {
            "correct": np.atleast_1d(correct),
            "eps": eps,
            "alias": alias[:, 1:],
            "pow_fwd": pow_fwd / n,
            "pow_fb": pow_fb / n,
            "pilot_ok": np.atleast_1d(pilot_ok),
            "z_hist": z_hist,
            "residual": residual,
        }

    z_orig = None
    original = closed_loop(remove_modulo=False)
    if not coupled:
        original.pop("z_hist")
        original.pop("residual")
        return original
    z_orig = original["z_hist"]
    partner = closed_loop(remove_modulo=True)
    partner.pop("z_hist")
    partner["pow_fwd"] = original["pow_fwd"]
    partner["pow_fb"] = original["pow_fb"]
    return partner


# ---------------------------------------------------------------------------
# scheme 3 engine
# ---------------------------------------------------------------------------

def _engine_multi_path(scenario, master_seed, indices):
    plan = scenario.derive()
    m_re, m_im, _ = mp.sub_message_sizes(plan)
    t = len(indices)
    k = plan.subchannels
    num_paths = plan.num_paths
    blocks = plan.blocks
    block_len = plan.block_len
    taps = np.asarray(scenario.h, dtype=complex)

    total_steps = blocks * block_len
    raw = _normal_rows(master_seed, indices, 2 * total_steps)
    scale = scenario.noise_scale * math.sqrt(plan.sigma2 / 2.0)
    noise = scale * (raw[:, 0::2] + 1j * raw[:, 1::2])
    w_re, w_im = _env_multi_path(master_seed, indices, m_re, m_im)

    theta = (-0.5 + (2.0 * w_re - 1.0) / (2.0 * m_re)) \
        + 1j * (-0.5 + (2.0 * w_im - 1.0) / (2.0 * m_im))
    live = np.flatnonzero(plan.powers > 0)
    gains = plan.gains
    powers = plan.powers

    # designed per-iteration variances and MMSE gains (exact closed forms)
    alphas = np.zeros((blocks, k))
    betas = np.zeros((blocks, k))
    for col in live:
        for it in range(1, blocks + 1):
            alphas[it - 1, col], _ = mp.variance_lemma3(plan, int(col), it)
        betas[1:, col] = mp.mmse_gain_mp(plan, int(col), alphas[:-1, col])

    eps = np.zeros((t, blocks, k), dtype=complex)
    cur = np.zeros((t, k), dtype=complex)
    tail = np.zeros((t, num_paths - 1), dtype=complex)
    energy = np.zeros(t)
    theta_hat = np.zeros((t, k), dtype=complex)
    for b in range(1, blocks + 1):
        freq = np.zeros((t, k), dtype=complex)
        if b == 1:
            freq[:, live] = np.sqrt(6.0 * powers[live]) * theta[:, live]
        else:
            freq[:, live] = np.sqrt(powers[live] / alphas[b - 2, live]) * cur[:, live]
        time_block = np.fft.ifft(freq, axis=1) * math.sqrt(k)
        sent = np.concatenate([time_block[:, k - num_paths + 1:], time_block], axis=1)
        energy += np.sum(np.abs(sent) ** 2, axis=1)
        ext = np.concatenate([tail, sent], axis=1)
        received = np.zeros((t, block_len), dtype=complex)
        for l in range(num_paths):
            received += taps[l] * ext[:, num_paths - 1 - l: num_paths - 1 - l + block_len]
        received += noise[:, (b - 1) * block_len: b * block_len]
        tail = sent[:, -(num_paths - 1):]
        payload = received[:, num_paths - 1:]
        obs_freq = np.fft.fft(payload, axis=1) / math.sqrt(k)
        obs = np.zeros((t, k), dtype=complex)
        obs[:, live] = obs_freq[:, live] / gains[live]
        if b == 1:
            theta_hat[:, live] = obs[:, live] / np.sqrt(6.0 * powers[live])
        else:
            theta_hat[:, live] = theta_hat[:, live] - betas[b - 1, live] * obs[:, live]
        cur = theta_hat - theta
        eps[:, b - 1, :] = cur

    correct = np.ones(t, dtype=bool)
    for col in live:
        got_re = qs.decode_midpoint(theta_hat[:, col].real, int(m_re[col]))
        got_im = qs.decode_midpoint(theta_hat[:, col].imag, int(m_im[col]))
        correct &= (got_re == w_re[:, col]) & (got_im == w_im[:, col])
    return {
        "correct": correct,
        "eps": eps,
        "pow_fwd": energy / scenario.n,
        "pow_fb": np.zeros(t),
    }


# ---------------------------------------------------------------------------
# public trial API
# ---------------------------------------------------------------------------

def run_trial(config: TrialConfig) -> TrialResult:
    """Run one closed-loop trial of the configured scheme."""
    scenario = config.scenario
    idx = [config.trial_index]
    if scenario.scheme_id == 1:
        out = _engine_quasi_static(scenario, config.master_seed, idx, coupled=False)
    elif scenario.scheme_id == 2:
        out = _engine_two_path(scenario, config.master_seed, idx, coupled=False)
    elif scenario.scheme_id == 3:
        out = _engine_multi_path(scenario, config.master_seed, idx)
        return TrialResult(
            decoded_correctly=bool(out["correct"][0]),
            per_iteration_epsilon=out["eps"][0],
            aliasing_events=np.zeros(0, dtype=bool),
            used_power_forward=float(out["pow_fwd"][0]),
            used_power_feedback=float(out["pow_fb"][0]),
        )
    else:
        raise ValueError(f"unknown scheme id {scenario.scheme_id}")
    return TrialResult(
        decoded_correctly=bool(out["correct"][0]),
        per_iteration_epsilon=out["eps"][0],
        aliasing_events=out["alias"][0],
        used_power_forward=float(out["pow_fwd"][0]),
        used_power_feedback=float(out["pow_fb"][0]),
    )


def coupled_mode_trial(config: TrialConfig) -> CoupledTrialResult:
    """Run the coupled-system partner of a trial (schemes 1 and 2 only).

    Shares the noise, dither and quantization-noise realizations with the
    original trial at the same key, so the linear-system identities are
    checkable per sample.
    """
    scenario = config.scenario
    idx = [config.trial_index]
    if scenario.scheme_id == 1:
        out = _engine_quasi_static(scenario, config.master_seed, idx, coupled=True)
    elif scenario.scheme_id == 2:
        out = _engine_two_path(scenario, config.master_seed, idx, coupled=True)
    else:
        raise ValueError("the coupled system is defined for schemes 1 and 2 only")
    return CoupledTrialResult(
        decoded_correctly=bool(out["correct"][0]),
        per_iteration_epsilon=out["eps"][0],
        aliasing_events=out["alias"][0],
        used_power_forward=float(out["pow_fwd"][0]),
        used_power_feedback=float(out["pow_fb"][0]),
        cancellation_residual=out["residual"],
    )


def _run_batches(scenario, master_seed, trials, coupled, chunk=20_000):
    """Execute trials in index chunks and return full per-trial arrays."""
    results = None
    for start in range(0, trials, chunk):
        idx = np.arange(start, min(start + chunk, trials))
        if scenario.scheme_id == 1:
            out = _engine_quasi_static(scenario, master_seed, idx, coupled)
        elif scenario.scheme_id == 2:
            out = _engine_two_path(scenario, master_seed, idx, coupled)
        elif scenario.scheme_id == 3:
            if coupled:
                raise ValueError("the coupled system is defined for schemes 1 and 2 only")
            out = _engine_multi_path(scenario, master_seed, idx)
        else:
            raise ValueError(f"unknown scheme id {scenario.scheme_id}")
        if results is None:
            results = {key: [] for key in out}
        for key, val in out.items():
            results[key].append(val)
    merged = {}
    for key, parts in results.items():
        if key == "residual":
            merged[key] = max(parts)
        elif np.ndim(parts[0]) == 0:
            merged[key] = parts[0]
        else:
            merged[key] = np.concatenate(parts, axis=0)
    return merged


def monte_carlo(
    scenario: Scenario, trials: int, master_seed: int, coupled: bool = False
) -> MonteCarloReport:
    """Aggregate independent trials into a decoding-error report.

    Trials are keyed by index, so the report depends only on
    (scenario, trials, master_seed); execution order and chunking cannot
    change a single bit of it.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    out = _run_batches(scenario, master_seed, trials, coupled)
    errors = int(trials - np.count_nonzero(out["correct"]))
    lo, hi = wilson_interval(errors, trials)
    if scenario.scheme_id == 3:
        mean_traj = np.mean(np.abs(out["eps"]) ** 2, axis=0)
        alias_rate = np.zeros(0)
    else:
        mean_traj = np.mean(out["eps"] ** 2, axis=0)
        alias_rate = np.mean(out["alias"], axis=0)
    return MonteCarloReport(
        trials=trials,
        error_count=errors,
        dep_estimate=errors / trials,
        wilson_lo=lo,
        wilson_hi=hi,
        mean_var_trajectory=mean_traj,
        aliasing_rate_per_iteration=alias_rate,
        avg_forward_power=float(np.mean(out["pow_fwd"])),
        avg_feedback_power=float(np.mean(out["pow_fb"])),
    )
