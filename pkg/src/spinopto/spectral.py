"""Spectral estimates from simulated trajectories.

PSD values are one-sided densities per Hz (quadrature^2 s) on an angular
frequency grid, so ``sum(psd) * d_omega / (2 pi)`` recovers the variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from spinopto.dynamics import TrajectoryRecord
from spinopto.errors import DomainError
from spinopto.linear import NoiseSpectrum, StateSpace, sampled_quadrature_psd

MIN_CORRELATION_TIMES = 100


@dataclass(frozen=True)
class PsdEstimate:
    omega_grid: np.ndarray
    psd: np.ndarray
    n_segments: int
    window: str
    enbw: float  # rad/s

    @property
    def d_omega(self) -> float:
        return float(self.omega_grid[1] - self.omega_grid[0])

    def integrated_power(self) -> float:
        return float(np.sum(self.psd) * self.d_omega / (2 * np.pi))


def quadrature_series(traj: TrajectoryRecord, phi_q, mode="+", t_start=None) -> np.ndarray:
    """Quadrature fluctuation ``Re[(c - c_mean) e^{-i(theta_ss + phi_q)}]``.

    ``c_mean`` and ``theta_ss = arg(c_mean)`` come from the analysis window
    ``t >= t_start``, which should exclude the initial transient.
    """
    tr = traj if t_start is None else traj.window(t_start, None)
    span = tr.times[-1] - tr.times[0]
    if span * traj.params.kappa < MIN_CORRELATION_TIMES:
        raise DomainError(
            f"analysis window spans {span * traj.params.kappa:.1f} cavity correlation times, "
            f"need {MIN_CORRELATION_TIMES}"
        )
    c = tr.cavity[:, 0 if mode == "+" else 1]
    mean = np.mean(c)
    theta_ss = np.angle(mean) if mean != 0 else 0.0
    return np.real((c - mean) * np.exp(-1j * (theta_ss + phi_q)))


def welch_psd(series, dt, segment_length, overlap=0.5, window="hann") -> PsdEstimate:
    """Averaged-periodogram estimate, one-sided and window-power corrected.

    The DC and Nyquist bins are dropped.
    """
    x = np.asarray(series, dtype=float)
    nper = int(segment_length)
    if nper > x.size:
        raise DomainError(f"segment length {nper} exceeds series length {x.size}")
    nover = int(round(overlap * nper))
    n_seg = 1 + (x.size - nper) // (nper - nover)
    if n_seg < 4:
        raise DomainError(f"series gives only {n_seg} segments, need at least 4")
    f, pxx = signal.welch(x, fs=1.0 / dt, window=window, nperseg=nper, noverlap=nover,
                          detrend="constant", return_onesided=True, scaling="density")
    keep = slice(1, -1) if nper % 2 == 0 else slice(1, None)
    w = signal.get_window(window, nper)
    enbw = 2 * np.pi * (1.0 / dt) * np.sum(w**2) / np.sum(w) ** 2
    return PsdEstimate(omega_grid=2 * np.pi * f[keep], psd=pxx[keep], n_segments=n_seg,
                       window=str(window), enbw=float(enbw))


def relative_noise_db(sig: PsdEstimate, baseline: PsdEstimate) -> np.ndarray:
    """``10 log10(signal / baseline)`` per bin."""
    if sig.omega_grid.shape != baseline.omega_grid.shape or not np.allclose(
        sig.omega_grid, baseline.omega_grid, rtol=1e-12, atol=0
    ):
        raise DomainError("signal and baseline grids differ")
    if np.any(baseline.psd == 0):
        raise DomainError("baseline has empty bins")
    return 10 * np.log10(sig.psd / baseline.psd)


def simulated_noise_map(traj: TrajectoryRecord, baseline: TrajectoryRecord, phi_grid,
                        segment_length, t_start=None, mode="+") -> NoiseSpectrum:
    """Relative quadrature noise map from a paired signal/baseline simulation."""
    rows = []
    for ph in np.atleast_1d(phi_grid):
        est = [
            welch_psd(quadrature_series(tr, ph, mode, t_start), tr.dt_record, segment_length)
            for tr in (traj, baseline)
        ]
        rows.append(relative_noise_db(*est))
        grid = est[0].omega_grid
    return NoiseSpectrum(omega_grid=grid, phi_grid=np.atleast_1d(np.asarray(phi_grid, float)),
                         power=np.array(rows).T)


def window_kernel(dt, segment_length, window="hann", oversample=8, half_width=12):
    """Spectral window ``|W(delta)|^2`` sampled on bin offsets.

    Returns angular offsets and normalized weights.  The expected Welch
    estimate of a smooth PSD ``P`` at bin ``w_k`` is
    ``sum(weights * P(w_k + offsets))``.
    """
    nper = int(segment_length)
    w = signal.get_window(window, nper)
    bin_w = 2 * np.pi / (nper * dt)
    offsets = bin_w * np.arange(-half_width * oversample, half_width * oversample + 1) / oversample
    phase = np.exp(-1j * np.outer(offsets * dt, np.arange(nper)))
    k = np.abs(phase @ w) ** 2
    return offsets, k / k.sum()


def expected_noise_map(ss: StateSpace, omega_grid, phi_grid, dt, segment_length, window="hann",
                       mode="+", oversample=8, half_width=12) -> NoiseSpectrum:
    """Linear-theory noise map as seen through the Welch estimator.

    Both the coupled and the baseline spectra of the sampled linear process
    (aliasing included) are smoothed by the spectral window before taking
    the ratio.  This is the expectation a finite-resolution estimate from
    point samples every ``dt`` converges to.
    """
    omega_grid = np.asarray(omega_grid, dtype=float)
    phi_grid = np.atleast_1d(np.asarray(phi_grid, dtype=float))
    offsets, weights = window_kernel(dt, segment_length, window, oversample, half_width)
    fine = np.abs(omega_grid[:, None] + offsets[None, :]).ravel()
    out = []
    for baseline in (False, True):
        psd = sampled_quadrature_psd(ss, fine, phi_grid, dt, mode, baseline=baseline)
        psd = psd.reshape(omega_grid.size, offsets.size, phi_grid.size)
        out.append(np.einsum("wkp,k->wp", psd, weights))
    return NoiseSpectrum(omega_grid=omega_grid, phi_grid=phi_grid,
                         power=10 * np.log10(out[0] / out[1]))
