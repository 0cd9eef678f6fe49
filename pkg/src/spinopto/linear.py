"""Linear response about a static configuration.

Two routes are provided.  The closed-form adiabatic expressions (shifted
precession frequency, optical spring, rotating-wave damping rate,
susceptibility and the intracavity transfer coefficient) are cheap and
interpretable.  The state-space model linearizes the full drift exactly
(cavity quadratures plus two transverse spin coordinates) and gives the
production noise spectrum.

Wherever a probe detuning enters a closed-form expression it is the
effective detuning of the driven mode at the fixed point,
``Dp+ + Omega_c S cos(theta0)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm, solve_continuous_lyapunov

from spinopto.errors import DomainError, PoleProximityError, UnsupportedConfigurationError
from spinopto.model import SystemParams, cavity_steady_state
from spinopto.steady import FixedPoint

POLE_EPS = 1e-9


@dataclass(frozen=True)
class LinearResponse:
    """Small-oscillation quantities at a fixed point.

    ``rwa_rate`` is the rotating-wave envelope rate
    ``-alpha lam S sin(theta0)**2 sin(phi_delay) / 2`` with the co-rotating
    longitudinal spin taken as ``+S``; negative values decay.
    """

    omega_Lp: float
    k_S: float
    omega_Lpp: float
    phi_delay: float
    rwa_rate: float
    fp: FixedPoint


@dataclass(frozen=True)
class StateSpace:
    """Real linearization ``dx/dt = J x + Bn w`` about a fixed point.

    The state is ``[X+, Y+, X-, Y-, u, v]`` restricted to driven modes, with
    ``X, Y`` the real and imaginary parts of the field fluctuation, ``u``
    the spin fluctuation along ``(cos t0, 0, -sin t0)`` and ``v`` along j.
    ``w`` are independent unit white noises.  ``J_baseline`` is ``J`` with
    the spin-cavity coupling removed (coherent light through the same
    cavity).
    """

    J: np.ndarray
    Bn: np.ndarray
    J_baseline: np.ndarray
    modes: tuple
    theta_ss: tuple
    fp: FixedPoint
    params: SystemParams

    def Cq(self, phi_q, mode="+") -> np.ndarray:
        """Output row selecting quadrature ``Re[dc e^{-i(theta_ss + phi_q)}]``."""
        i = self.modes.index(mode)
        ang = self.theta_ss[i] + phi_q
        row = np.zeros(self.J.shape[0])
        row[2 * i] = np.cos(ang)
        row[2 * i + 1] = np.sin(ang)
        return row

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.J)

    @property
    def max_real_eig(self) -> float:
        return float(np.max(self.eigenvalues.real))

    @property
    def statically_unstable(self) -> bool:
        """True if ``J`` has an odd number of positive real eigenvalues.

        Complex pairs and negative reals contribute positive factors to
        ``det J``; a saddle makes it negative.
        """
        return bool(np.linalg.det(self.J) < 0)

    @property
    def precession_eigenvalue(self) -> complex:
        """Spin-like eigenvalue: smallest modulus with ``Im >= 0``.

        Valid in the unresolved-sideband regime where the cavity
        eigenvalues (modulus about ``kappa``) are the fastest.
        """
        ev = self.eigenvalues
        ev = ev[ev.imag >= -1e-12 * np.abs(ev)]
        return complex(ev[np.argmin(np.abs(ev))])


@dataclass(frozen=True)
class NoiseSpectrum:
    omega_grid: np.ndarray
    phi_grid: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.omega_grid) <= 0):
            raise DomainError("omega grid must be strictly increasing")
        if len(self.phi_grid) > 1 and np.any(np.diff(self.phi_grid) <= 0):
            raise DomainError("phi grid must be strictly increasing")
        if not np.all(np.isfinite(self.power)):
            raise DomainError("noise spectrum has non-finite entries")

    def minimum(self):
        """``(power_db, omega, phi)`` at the global minimum."""
        i, j = np.unravel_index(np.argmin(self.power), self.power.shape)
        return float(self.power[i, j]), float(self.omega_grid[i]), float(self.phi_grid[j])


def effective_detunings(p: SystemParams, fp: FixedPoint):
    shift = p.omega_cpl * p.S * np.cos(fp.theta0)
    return p.delta_p_plus + shift, p.delta_p_minus - shift


def response_at(fp: FixedPoint, p: SystemParams) -> LinearResponse:
    """Shifted precession frequency, optical spring and damping rate.

    Raises
    ------
    DomainError
        If ``omega_Lp**2 + k_S < 0`` (static spring instability).
    """
    st = np.sin(fp.theta0)
    omega_Lp = p.omega_L / abs(st)
    k_S = -fp.lam * p.omega_L * p.S * st
    w2 = omega_Lp**2 + k_S
    if w2 < 0:
        raise DomainError(f"optical spring instability: Omega_L''^2 = {w2:g} < 0")
    omega_Lpp = float(np.sqrt(w2))
    phi = omega_Lpp / p.kappa
    rate = -fp.alpha * fp.lam * p.S * st**2 * np.sin(phi) / 2.0
    return LinearResponse(omega_Lp=float(omega_Lp), k_S=float(k_S), omega_Lpp=omega_Lpp,
                          phi_delay=float(phi), rwa_rate=float(rate), fp=fp)


def _single_mode(p, fp):
    if p.nmax_minus != 0:
        raise UnsupportedConfigurationError("closed-form response assumes a single sigma+ drive")
    delta = effective_detunings(p, fp)[0]
    return delta, _spring(fp, p)


def _spring(fp, p):
    st = np.sin(fp.theta0)
    return p.omega_L / abs(st), -fp.lam * p.omega_L * p.S * st


def _pole_check(p, delta, omega):
    d0 = p.kappa**2 + delta**2
    den = d0 - np.asarray(omega, dtype=float) ** 2
    if np.any(np.abs(den) < POLE_EPS * d0):
        raise PoleProximityError("omega too close to the pole omega^2 = kappa^2 + Dp^2")
    return d0, den


def response_functions(p: SystemParams, fp: FixedPoint, omega):
    """``(R, Gamma_o, chi)`` at angular frequency ``omega`` (scalar or array).

    ``R = (k^2 + D^2) / (k^2 + D^2 - w^2)``,
    ``Gamma_o = 2 k (W'^2 - w^2) / (k^2 + D^2 - w^2)`` and
    ``chi = -W' Oc sqrt(n+) / (W'^2 + k_S R - w^2 + i w Gamma_o)``.
    """
    delta, (wp, k_S) = _single_mode(p, fp)
    omega = np.asarray(omega, dtype=float)
    d0, den = _pole_check(p, delta, omega)
    R = d0 / den
    gamma_o = 2 * p.kappa * (wp**2 - omega**2) / den
    chi = -wp * p.omega_cpl * np.sqrt(fp.n_plus) / (wp**2 + k_S * R - omega**2 + 1j * omega * gamma_o)
    return R, gamma_o, chi


def field_transfer_eq9(p: SystemParams, fp: FixedPoint, omega):
    """Amplitude-noise transfer ``A(w)`` in ``c+(w) = A(w) xi_A + i xi_P``.

    ``A = [W'^2 + i ((k + w)/D) k_S R - w^2 + i w Gamma_o]
          / [W'^2 + k_S R - w^2 + i w Gamma_o]``
    """
    delta, (wp, k_S) = _single_mode(p, fp)
    if delta == 0:
        raise DomainError("transfer coefficient undefined at zero effective detuning")
    omega = np.asarray(omega, dtype=float)
    d0, den = _pole_check(p, delta, omega)
    R = d0 / den
    gamma_o = 2 * p.kappa * (wp**2 - omega**2) / den
    common = wp**2 - omega**2 + 1j * omega * gamma_o
    num = common + 1j * (p.kappa + omega) / delta * k_S * R
    return num / (common + k_S * R)


def build_state_space(p: SystemParams, fp: FixedPoint) -> StateSpace:
    """Analytic Jacobian of the deterministic drift at ``fp``."""
    th = fp.theta0
    s0 = p.S * np.array([np.sin(th), 0.0, np.cos(th)])
    e1 = np.array([np.cos(th), 0.0, -np.sin(th)])
    e2 = np.array([0.0, 1.0, 0.0])
    k = np.array([0.0, 0.0, 1.0])
    css = cavity_steady_state(p, s0[2])
    c0 = {"+": css.c_plus, "-": css.c_minus}
    sign = {"+": 1.0, "-": -1.0}
    detune = dict(zip("+-", effective_detunings(p, fp)))
    modes = tuple(m for m, nm in (("+", p.nmax_plus), ("-", p.nmax_minus)) if nm > 0)

    nf = 2 * len(modes)
    n = nf + 2
    J = np.zeros((n, n))
    Bn = np.zeros((n, nf))
    w0 = p.omega_L * p.b_vec + p.omega_cpl * (fp.n_plus - fp.n_minus) * k

    # spin block: d(dS)/dt = dS x w0 projected on (e1, e2)
    for a, ea in enumerate((e1, e2)):
        for b_, eb in enumerate((e1, e2)):
            J[nf + a, nf + b_] = ea @ np.cross(eb, w0)
    torque = np.cross(s0, k) * p.omega_cpl  # per unit change of n+ - n-
    dSk_du = e1[2]
    for i, m in enumerate(modes):
        x, y = c0[m].real, c0[m].imag
        # field block
        J[2 * i, 2 * i] = -p.kappa
        J[2 * i, 2 * i + 1] = -detune[m]
        J[2 * i + 1, 2 * i] = detune[m]
        J[2 * i + 1, 2 * i + 1] = -p.kappa
        # spin -> field through the frequency pull i s Oc c0 dS_k
        g = 1j * sign[m] * p.omega_cpl * c0[m] * dSk_du
        J[2 * i, nf] = g.real
        J[2 * i + 1, nf] = g.imag
        # field -> spin through the photon-number imbalance
        for a, ea in enumerate((e1, e2)):
            t = ea @ torque * sign[m]
            J[nf + a, 2 * i] = t * 2 * x
            J[nf + a, 2 * i + 1] = t * 2 * y
        Bn[2 * i, 2 * i] = np.sqrt(p.kappa / 2)
        Bn[2 * i + 1, 2 * i + 1] = np.sqrt(p.kappa / 2)

    J0 = J.copy()
    J0[:nf, nf:] = 0.0
    J0[nf:, :nf] = 0.0
    theta_ss = tuple(float(np.angle(c0[m])) for m in modes)
    return StateSpace(J=J, Bn=Bn, J_baseline=J0, modes=modes, theta_ss=theta_ss, fp=fp, params=p)


def _quadrature_power(J, Bn, rows, omega_grid):
    n = J.shape[0]
    M = 1j * np.asarray(omega_grid)[:, None, None] * np.eye(n) - J
    cond = np.linalg.cond(M)
    if np.any(cond > 1e14):
        w = omega_grid[int(np.argmax(cond))]
        raise DomainError(f"i omega I - J is singular at omega={w:g}")
    G = np.linalg.solve(M, np.broadcast_to(Bn, (len(omega_grid),) + Bn.shape))
    return np.sum(np.abs(np.einsum("pn,wnm->wpm", rows, G)) ** 2, axis=2)


def quadrature_psd_linear(ss: StateSpace, omega_grid, phi_grid, mode="+", baseline=False):
    """Two-sided quadrature spectral density ``sum |Cq (iwI - J)^-1 Bn|^2``."""
    rows = np.array([ss.Cq(ph, mode) for ph in np.atleast_1d(phi_grid)])
    J = ss.J_baseline if baseline else ss.J
    return _quadrature_power(J, ss.Bn, rows, np.atleast_1d(omega_grid))


def sampled_quadrature_psd(ss: StateSpace, omega_grid, phi_grid, dt_sample, mode="+",
                           baseline=False):
    """Two-sided spectral density of the quadrature sampled every ``dt_sample``.

    The sampled state is an exact first-order autoregression with transition
    ``expm(J dt)`` and stationary covariance ``P`` from the Lyapunov equation,
    so aliasing of the continuous spectrum is included exactly::

        S(w) = dt * (2 Re[C (I - A e^{-i w dt})^-1 P C^T] - C P C^T)

    Tends to :func:`quadrature_psd_linear` as ``dt_sample -> 0``.
    """
    nf = 2 * len(ss.modes)
    if baseline:
        J, Bn = ss.J_baseline[:nf, :nf], ss.Bn[:nf]
    else:
        J, Bn = ss.J, ss.Bn
    if np.max(np.linalg.eigvals(J).real) >= 0:
        raise DomainError("sampled spectrum needs a dynamically stable linearization")
    n = J.shape[0]
    rows = np.array([ss.Cq(ph, mode)[:n] for ph in np.atleast_1d(phi_grid)])
    A = expm(J * dt_sample)
    P = solve_continuous_lyapunov(J, -Bn @ Bn.T)
    z = np.exp(-1j * np.atleast_1d(np.asarray(omega_grid, dtype=float)) * dt_sample)
    M = np.eye(n) - A[None] * z[:, None, None]
    X = np.linalg.solve(M, np.broadcast_to(P, (z.size, n, n)))
    val = np.einsum("pn,wnm,pm->wp", rows, X, rows)
    var = np.einsum("pn,nm,pm->p", rows, P, rows)
    return dt_sample * (2 * val.real - var[None, :])


def noise_spectrum_linear(ss: StateSpace, omega_grid, phi_grid, mode="+") -> NoiseSpectrum:
    """Quadrature noise in dB relative to coherent light through the same cavity."""
    if ss.max_real_eig >= 0:
        raise DomainError("fixed point is not dynamically stable; no stationary spectrum")
    omega_grid = np.asarray(omega_grid, dtype=float)
    phi_grid = np.atleast_1d(np.asarray(phi_grid, dtype=float))
    sig = quadrature_psd_linear(ss, omega_grid, phi_grid, mode)
    base = quadrature_psd_linear(ss, omega_grid, phi_grid, mode, baseline=True)
    return NoiseSpectrum(omega_grid=omega_grid, phi_grid=phi_grid, power=10 * np.log10(sig / base))


def baseline_params(p: SystemParams, fp: FixedPoint) -> SystemParams:
    """Uncoupled system whose cavity matches ``p`` at ``fp``."""
    dp, dm = effective_detunings(p, fp)
    return replace(p, omega_cpl=0.0, delta_p_plus=float(dp), delta_p_minus=float(dm))
