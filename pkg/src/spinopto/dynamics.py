"""Time-domain integration of the coupled spin-cavity system.

Each step is a Strang splitting: half-step exact spin rotation about the
current effective field, full-step exact update of each cavity mode with the
spin projection frozen (Ornstein-Uhlenbeck when noisy), then another
half-step rotation.  The spin norm is conserved by construction and noise
enters only the cavity.

Noise normalization: each driven mode receives independent white
amplitude and phase noises of strength ``1/(2 kappa)``, so an empty cavity
settles at quadrature variance 1/4.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import hilbert

from spinopto._kernels import run_steps
from spinopto.errors import DomainError, FitQualityError, IntegrationError
from spinopto.model import CavityState, SpinState, SystemParams, cavity_steady_state

logger = logging.getLogger(__name__)

GUARD = 0.05
_CHUNK = 1 << 16


@dataclass(frozen=True)
class Ramp:
    """Piecewise-linear schedules over time, held constant outside the knots.

    Any schedule left as ``None`` keeps the value from ``SystemParams``.
    Drive schedules are amplitudes ``eta`` (sqrt photons).
    """

    times: tuple
    delta_p_plus: tuple = None
    delta_p_minus: tuple = None
    eta_plus: tuple = None
    eta_minus: tuple = None

    def __post_init__(self):
        t = tuple(float(x) for x in self.times)
        object.__setattr__(self, "times", t)
        if len(t) < 1 or np.any(np.diff(t) <= 0):
            raise DomainError("ramp times must be strictly increasing")
        for name in ("delta_p_plus", "delta_p_minus", "eta_plus", "eta_minus"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(float(x) for x in v)
                if len(v) != len(t):
                    raise DomainError(f"ramp {name} must have one value per knot")
                object.__setattr__(self, name, v)

    def knots(self, p: SystemParams):
        """Arrays (t, dp+, dp-, eta+, eta-) for the kernel."""
        t = np.array(self.times)
        defaults = {
            "delta_p_plus": p.delta_p_plus,
            "delta_p_minus": p.delta_p_minus,
            "eta_plus": p.eta_plus,
            "eta_minus": p.eta_minus,
        }
        out = [t]
        for name, d in defaults.items():
            v = getattr(self, name)
            out.append(np.full(t.shape, d) if v is None else np.array(v))
        return out


@dataclass(frozen=True)
class SimConfig:
    """Integration settings.

    ``dt=None`` picks the largest step allowed by the guard
    ``dt <= 0.05 / max(kappa, |Omega_L|, |Omega_c| S, |Dp| + |Omega_c| S)``.
    """

    duration: float
    dt: float = None
    record_stride: int = 1
    noise_enabled: bool = False
    seed: int = 0
    ramp: Ramp = None

    def __post_init__(self):
        if not self.duration > 0:
            raise DomainError("duration must be positive")
        if self.dt is not None and not self.dt > 0:
            raise DomainError("dt must be positive")
        if int(self.record_stride) < 1:
            raise DomainError("record_stride must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")

    def step_size(self, p: SystemParams) -> float:
        bound = max_dt(p, self.ramp)
        if self.dt is None:
            return bound
        if self.dt > bound * (1 + 1e-12):
            raise DomainError(f"dt={self.dt:g} exceeds the stability guard {bound:g}")
        return float(self.dt)


def max_dt(p: SystemParams, ramp: Ramp = None) -> float:
    """Largest step allowed by the guard, over all ramp knots."""
    cs = abs(p.omega_cpl) * p.S
    dps = [abs(p.delta_p_plus), abs(p.delta_p_minus)]
    if ramp is not None:
        for v in (ramp.delta_p_plus, ramp.delta_p_minus):
            if v is not None:
                dps.append(max(abs(x) for x in v))
    rate = max(p.kappa, abs(p.omega_L), cs, max(dps) + cs)
    return GUARD / rate


@dataclass(frozen=True)
class NoiseInput:
    """Step-averaged white input noises for the (+, -) modes.

    Each entry has variance ``1/(2 kappa dt)``.
    """

    xi_A: tuple = (0.0, 0.0)
    xi_P: tuple = (0.0, 0.0)

    @classmethod
    def draw(cls, rng, kappa, dt):
        sd = 1.0 / np.sqrt(2 * kappa * dt)
        a, b = rng.standard_normal(2) * sd, rng.standard_normal(2) * sd
        return cls(tuple(a), tuple(b))

    def standard_normals(self, kappa, dt) -> np.ndarray:
        s = np.sqrt(2 * kappa * dt)
        return np.array([[self.xi_A[0] * s, self.xi_P[0] * s, self.xi_A[1] * s, self.xi_P[1] * s]])


@dataclass
class TrajectoryRecord:
    """Uniformly sampled trajectory.

    ``spin`` has shape (n, 3) in the (i, j, k) basis; ``cavity`` has shape
    (n, 2) with complex amplitudes of the (+, -) modes.
    """

    times: np.ndarray
    spin: np.ndarray
    cavity: np.ndarray
    params: SystemParams
    config: SimConfig
    dt: float
    metadata: dict = field(default_factory=dict)

    @property
    def S_i(self):
        return self.spin[:, 0]

    @property
    def S_j(self):
        return self.spin[:, 1]

    @property
    def S_k(self):
        return self.spin[:, 2]

    @property
    def n_plus(self):
        return np.abs(self.cavity[:, 0]) ** 2

    @property
    def n_minus(self):
        return np.abs(self.cavity[:, 1]) ** 2

    @property
    def dt_record(self) -> float:
        return self.dt * self.config.record_stride

    def window(self, t_start=None, t_stop=None) -> "TrajectoryRecord":
        t0 = self.times[0] if t_start is None else t_start
        t1 = self.times[-1] if t_stop is None else t_stop
        m = (self.times >= t0) & (self.times <= t1)
        return replace(self, times=self.times[m], spin=self.spin[m], cavity=self.cavity[m])

    def columns(self) -> dict:
        """Plot-ready columns, in CSV order."""
        return {
            "t": self.times,
            "S_i": self.S_i,
            "S_j": self.S_j,
            "S_k": self.S_k,
            "re_c_plus": self.cavity[:, 0].real,
            "im_c_plus": self.cavity[:, 0].imag,
            "re_c_minus": self.cavity[:, 1].real,
            "im_c_minus": self.cavity[:, 1].imag,
            "n_plus": self.n_plus,
            "n_minus": self.n_minus,
        }


def initial_spin(p: SystemParams, polar_offset=0.0, azimuth=0.0) -> SpinState:
    """Spin tilted from +i by ``polar_offset`` rad.

    ``azimuth`` sets the tilt direction in the j-k plane, measured from +k
    toward +j.
    """
    sx = np.cos(polar_offset)
    st = np.sin(polar_offset)
    return SpinState(p.S * sx, p.S * st * np.sin(azimuth), p.S * st * np.cos(azimuth))


def _as_spin(p, spin):
    if spin is None:
        spin = initial_spin(p)
    s = spin.as_array() if isinstance(spin, SpinState) else np.array(spin, dtype=float)
    if abs(np.linalg.norm(s) - p.S) > 1e-9 * p.S:
        raise DomainError(f"|S|={np.linalg.norm(s):.12g} does not match S={p.S:.12g}")
    return s


def _as_cavity(p, spin, cav):
    if cav is None:
        cav = cavity_steady_state(p, spin[2])
    c = cav.as_array() if isinstance(cav, CavityState) else np.array(cav, dtype=complex)
    return c


def _knots(p, ramp):
    if ramp is None:
        ramp = Ramp(times=(0.0,))
    return ramp.knots(p)


def _noise_flags(p, knots):
    # undriven modes stay noiseless: their fluctuations do not feed back at linear order
    return bool(np.any(knots[3] != 0)), bool(np.any(knots[4] != 0))


def step(p: SystemParams, spin, cavity, dt, noise: NoiseInput = None):
    """Advance one Strang step; returns ``(SpinState, CavityState)``."""
    s = _as_spin(p, spin)
    c = _as_cavity(p, s, cavity)
    knots = _knots(p, None)
    flags = _noise_flags(p, knots) if noise is not None else (False, False)
    z = noise.standard_normals(p.kappa, dt) if noise is not None else np.zeros((1, 4))
    rec_s, rec_c, rec_t = np.empty((1, 3)), np.empty((1, 2), complex), np.empty(1)
    run_steps(s, c, 0.0, 1, float(dt), 1, rec_s, rec_c, rec_t,
              p.omega_L, *p.b, p.omega_cpl, p.kappa, *knots, z, *flags)
    return SpinState(*s), CavityState(complex(c[0]), complex(c[1]))


def _rng(seed, index=None):
    if index is None:
        ss = np.random.SeedSequence(int(seed))
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


def simulate(p: SystemParams, init_spin=None, init_cavity=None, cfg: SimConfig = None,
             rng=None) -> TrajectoryRecord:
    """Integrate from the given initial state.

    The spin defaults to +i and the cavity to its steady state for the
    initial ``S_k``.  Output is fully determined by the inputs and
    ``cfg.seed``.

    Raises
    ------
    IntegrationError
        If the state becomes non-finite.
    """
    if cfg is None:
        raise DomainError("a SimConfig is required")
    dt = cfg.step_size(p)
    stride = int(cfg.record_stride)
    nsteps = int(round(cfg.duration / dt))
    nsteps -= nsteps % stride
    if nsteps < stride:
        raise DomainError("duration shorter than one record stride")
    s = _as_spin(p, init_spin)
    c = _as_cavity(p, s, init_cavity)
    knots = _knots(p, cfg.ramp)
    flags = _noise_flags(p, knots) if cfg.noise_enabled else (False, False)
    if rng is None:
        rng = _rng(cfg.seed)

    nrec = nsteps // stride + 1
    rec_s = np.empty((nrec, 3))
    rec_c = np.empty((nrec, 2), complex)
    rec_t = np.empty(nrec)
    rec_s[0], rec_c[0], rec_t[0] = s, c, 0.0

    chunk = stride * max(1, _CHUNK // stride)
    done, r = 0, 1
    no_noise = np.zeros((0, 4))
    while done < nsteps:
        m = min(chunk, nsteps - done)
        z = rng.standard_normal((m, 4)) if any(flags) else no_noise
        got = run_steps(s, c, done * dt, m, dt, stride,
                        rec_s[r:], rec_c[r:], rec_t[r:],
                        p.omega_L, *p.b, p.omega_cpl, p.kappa, *knots, z, *flags)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(c))):
            good = np.all(np.isfinite(rec_s[: r + got]), axis=1)
            last = rec_t[: r + got][good][-1] if np.any(good) else 0.0
            raise IntegrationError(f"non-finite state; last finite record at t={last:g}", last)
        r += got
        done += m
    return TrajectoryRecord(
        times=rec_t,
        spin=rec_s,
        cavity=rec_c,
        params=p,
        config=cfg,
        dt=dt,
        metadata={"seed": int(cfg.seed), "nsteps": nsteps},
    )


def simulate_ensemble(p: SystemParams, init_spin=None, init_cavity=None, cfg: SimConfig = None,
                      n_traj=1, threads=1) -> list:
    """Independent noisy trajectories.

    Trajectory ``k`` draws from ``SeedSequence(cfg.seed, spawn_key=(k,))``,
    so results do not depend on ``threads`` or scheduling.
    """

    def run(k):
        return simulate(p, init_spin, init_cavity, cfg, rng=_rng(cfg.seed, k))

    if threads <= 1:
        return [run(k) for k in range(n_traj)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, range(n_traj)))


def _parabolic_peak(mag, k):
    a, b, c = np.log(mag[k - 1 : k + 2])
    den = a - 2 * b + c
    return 0.0 if den == 0 else 0.5 * (a - c) / den


def _damped_cosine(t, a, b, rate, omega, offset):
    return np.exp(rate * t) * (a * np.cos(omega * t) + b * np.sin(omega * t)) + offset


def measure_ringdown(traj: TrajectoryRecord, window=None, min_cycles=20, max_residual=0.02):
    """Precession frequency and envelope rate of ``S_j`` over a time window.

    ``S_j`` is fitted by least squares to an exponentially modulated
    sinusoid plus offset.  The starting guess takes the frequency from the
    peak of the Hann-windowed, zero-padded FFT and the rate from the slope
    of the log analytic-signal magnitude.  Positive rate means growth.

    ``min_cycles`` and ``max_residual`` (rms residual over rms signal)
    guard the fit quality.

    Returns
    -------
    frequency : float
        rad/s.
    envelope_rate : float
        1/s.
    """
    tr = traj if window is None else traj.window(*window)
    t = tr.times - tr.times[0]
    y = tr.S_j
    n = y.size
    if n < 64:
        raise FitQualityError("window too short", {"samples": n})
    x = y - np.mean(y)
    scale = float(np.max(np.abs(x)))
    if scale == 0:
        raise FitQualityError("no oscillation in window", {"samples": n})
    dt = tr.dt_record
    npad = 8 * (1 << int(np.ceil(np.log2(n))))
    mag = np.abs(np.fft.rfft(x * np.hanning(n), npad))
    k = int(np.argmax(mag[1:-1])) + 1
    freq0 = 2 * np.pi * (k + _parabolic_peak(mag, k)) / (npad * dt)
    cycles = freq0 * t[-1] / (2 * np.pi)
    if cycles < min_cycles:
        raise FitQualityError(f"only {cycles:.1f} cycles in window",
                              {"cycles": cycles, "frequency": freq0})

    cut = n // 10
    env = np.log(np.abs(hilbert(x))[cut : n - cut])
    rate0 = np.polyfit(t[cut : n - cut], env, 1)[0]
    a0 = x[0] / scale
    guess = (a0, 0.0, rate0, freq0, 0.0)
    try:
        coef, _ = curve_fit(_damped_cosine, t, y / scale, p0=guess, maxfev=5000)
    except RuntimeError as exc:
        raise FitQualityError(f"damped-sinusoid fit did not converge: {exc}",
                              {"frequency": freq0, "rate": rate0}) from exc
    resid = y / scale - _damped_cosine(t, *coef)
    rel = float(np.sqrt(np.mean(resid**2)) / np.std(y / scale))
    if rel > max_residual:
        raise FitQualityError("signal is not a single damped sinusoid over the window",
                              {"relative_residual": rel, "rate": coef[2], "frequency": coef[3]})
    return float(abs(coef[3])), float(coef[2])


def dynamic_hysteresis(p: SystemParams, detuning_start, detuning_stop, cfg: SimConfig,
                       init_spin=None, init_cavity=None) -> TrajectoryRecord:
    """Linear ramp of both probe detunings over ``cfg.duration``.

    The ramp rate must satisfy ``|d Dp/dt| <= 0.01 kappa**2``.
    """
    rate = abs(detuning_stop - detuning_start) / cfg.duration
    if rate > 0.01 * p.kappa**2:
        raise DomainError(f"ramp rate {rate:g} exceeds 0.01 kappa^2")
    ramp = Ramp(times=(0.0, cfg.duration),
                delta_p_plus=(detuning_start, detuning_stop),
                delta_p_minus=(detuning_start, detuning_stop))
    q = replace(p, delta_p_plus=float(detuning_start), delta_p_minus=float(detuning_start))
    traj = simulate(q, init_spin, init_cavity, replace(cfg, ramp=ramp))
    traj.metadata["ramp"] = (float(detuning_start), float(detuning_stop))
    return traj


def ramp_detuning(traj: TrajectoryRecord) -> np.ndarray:
    """Probe detuning at each recorded time of a ramped run."""
    ramp = traj.config.ramp
    if ramp is None:
        return np.full(traj.times.shape, traj.params.delta_p_plus)
    knots = ramp.knots(traj.params)
    return np.interp(traj.times, knots[0], knots[1])


def symmetry_breaking_detuning(detuning, s_k_fraction, threshold=0.05, smooth=1):
    """First detuning at which ``|S_k|/S`` (moving average) exceeds ``threshold``.

    Works on a quasistatic branch (``smooth=1``) or a ramped trajectory,
    where ``smooth`` should span about one precession period of samples.
    Returns ``nan`` if the threshold is never crossed.
    """
    y = np.abs(np.asarray(s_k_fraction, dtype=float))
    if smooth > 1:
        y = np.convolve(y, np.ones(smooth) / smooth, mode="same")
    idx = np.nonzero(y > threshold)[0]
    return float(np.asarray(detuning)[idx[0]]) if idx.size else float("nan")
