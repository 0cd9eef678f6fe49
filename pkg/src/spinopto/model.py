"""Physical parameters, drift functions and the optomechanics analogy.

Conventions: hbar = 1, every energy is an angular frequency in rad/s.  The
cavity axis is ``k`` (index 2), the transverse field axis ``i`` (index 0).
The spin equation of motion is ``dS/dt = S x Omega_eff``; all orientation
conventions in the package follow from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from spinopto.errors import DomainError

I_AXIS = np.array([1.0, 0.0, 0.0])
J_AXIS = np.array([0.0, 1.0, 0.0])
K_AXIS = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class MicroscopicParams:
    """Atomic and cavity-QED inputs from which effective couplings follow.

    Parameters
    ----------
    g0 : float
        Single atom-cavity coupling (rad/s).
    delta_ca : float
        Cavity-atom detuning (rad/s), nonzero.
    upsilon : float
        Vector light-shift fraction.
    gamma : float
        Gyromagnetic ratio (rad/s per field unit).
    B : float
        Magnetic field magnitude.
    N : float
        Atom count, at least 1.
    s : float
        Single-atom spin.
    omega_c_bare : float
        Bare cavity resonance (rad/s); bookkeeping only.
    """

    g0: float
    delta_ca: float
    upsilon: float
    gamma: float
    B: float
    N: float = 1.0
    s: float = 0.5
    omega_c_bare: float = 0.0

    def __post_init__(self):
        if self.delta_ca == 0:
            raise DomainError("delta_ca must be nonzero")
        if self.N < 1:
            raise DomainError("N must be >= 1")
        if self.s <= 0:
            raise DomainError("s must be positive")

    @property
    def S(self) -> float:
        """Collective spin length of a fully polarized ensemble."""
        return self.N * self.s


@dataclass(frozen=True)
class SystemParams:
    """Effective parameters of the coupled spin-cavity system.

    Detunings ``delta_p_plus``/``delta_p_minus`` are measured from the
    dispersively shifted cavity resonance, with no spin contribution.
    Drive amplitudes are ``eta = sqrt(nmax)``, so a resonant empty cavity
    holds exactly ``nmax`` photons.
    """

    omega_L: float
    omega_cpl: float
    kappa: float
    delta_p_plus: float = 0.0
    delta_p_minus: float = 0.0
    nmax_plus: float = 0.0
    nmax_minus: float = 0.0
    S: float = 1.0
    b: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        b = tuple(float(x) for x in self.b)
        object.__setattr__(self, "b", b)
        if not self.kappa > 0:
            raise DomainError("kappa must be positive")
        if not self.S > 0:
            raise DomainError("S must be positive")
        if self.nmax_plus < 0 or self.nmax_minus < 0:
            raise DomainError("nmax_plus and nmax_minus must be >= 0")
        if len(b) != 3 or abs(np.linalg.norm(b) - 1.0) > 1e-12:
            raise DomainError(f"b must be a unit 3-vector, got {b}")
        for name in ("omega_L", "omega_cpl", "delta_p_plus", "delta_p_minus"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    @property
    def eta_plus(self) -> float:
        return float(np.sqrt(self.nmax_plus))

    @property
    def eta_minus(self) -> float:
        return float(np.sqrt(self.nmax_minus))

    @property
    def b_vec(self) -> np.ndarray:
        return np.array(self.b)

    @property
    def b_is_i(self) -> bool:
        return self.b == (1.0, 0.0, 0.0)

    @classmethod
    def from_microscopic(cls, mp: MicroscopicParams, kappa, **kwargs) -> "SystemParams":
        """Build effective parameters; ``S`` defaults to ``N*s``."""
        omega_L, omega_cpl, _ = derive_couplings(mp)
        kwargs.setdefault("S", mp.S)
        return cls(omega_L=omega_L, omega_cpl=omega_cpl, kappa=kappa, **kwargs)


@dataclass(frozen=True)
class SpinState:
    S_i: float
    S_j: float
    S_k: float

    @classmethod
    def from_angles(cls, S, theta, phi=0.0):
        """Spin of length ``S`` at polar angle ``theta`` from ``k``.

        ``phi`` is the azimuth measured from ``i`` toward ``j``.
        """
        st = np.sin(theta)
        return cls(S * st * np.cos(phi), S * st * np.sin(phi), S * np.cos(theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.S_i, self.S_j, self.S_k])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


@dataclass(frozen=True)
class CavityState:
    c_plus: complex = 0j
    c_minus: complex = 0j

    @property
    def n_plus(self) -> float:
        return abs(self.c_plus) ** 2

    @property
    def n_minus(self) -> float:
        return abs(self.c_minus) ** 2

    def as_array(self) -> np.ndarray:
        return np.array([self.c_plus, self.c_minus], dtype=complex)


@dataclass(frozen=True)
class EffectiveField:
    omega_eff: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        v = np.asarray(self.omega_eff, dtype=float)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise DomainError("omega_eff must be a finite 3-vector")
        object.__setattr__(self, "omega_eff", v)


@dataclass(frozen=True)
class OptomechAnalogue:
    """Classical optomechanical oscillator equivalent to the linearized spin.

    With hbar = 1 and ``z_ho = 1``, ``p_ho = 1/2`` and the equivalent mass is
    ``1 / (2 z_ho**2 omega_z)``.  ``g_om`` is the coupling ``f z_ho`` per
    unit photon-number imbalance.
    """

    omega_z: float
    dS_sql: float
    z_ho: float
    p_ho: float
    g_om: float
    mass_equiv: float


def derive_couplings(mp: MicroscopicParams):
    """Effective couplings from microscopic inputs.

    Returns
    -------
    omega_L : float
        Larmor frequency ``gamma * B``.
    omega_cpl : float
        Spin-cavity coupling ``-upsilon g0**2 / delta_ca`` per photon.
    dispersive_shift : float
        ``N g0**2 / delta_ca``.  Probe detunings are measured from
        ``omega_c_bare + dispersive_shift``.
    """
    if mp.delta_ca == 0:
        raise DomainError("delta_ca must be nonzero")
    omega_L = mp.gamma * mp.B
    omega_cpl = -mp.upsilon * mp.g0**2 / mp.delta_ca
    dispersive_shift = mp.N * mp.g0**2 / mp.delta_ca
    return float(omega_L), float(omega_cpl), float(dispersive_shift)


def effective_field(p: SystemParams, n_plus, n_minus) -> EffectiveField:
    """``Omega_L b + Omega_c (n_plus - n_minus) k``."""
    if n_plus < 0 or n_minus < 0:
        raise DomainError("photon numbers must be non-negative")
    v = p.omega_L * p.b_vec
    v[2] += p.omega_cpl * (n_plus - n_minus)
    return EffectiveField(v)


def spin_drift(spin, field) -> np.ndarray:
    """Precession rate ``S x Omega_eff``.

    Accepts ``SpinState``/``EffectiveField`` or plain 3-vectors.
    """
    s = spin.as_array() if isinstance(spin, SpinState) else np.asarray(spin, dtype=float)
    w = field.omega_eff if isinstance(field, EffectiveField) else np.asarray(field, dtype=float)
    return np.cross(s, w)


def cavity_drift(p: SystemParams, c, S_k, eta_plus=None, eta_minus=None):
    """Deterministic field derivatives with the spin projection ``S_k`` frozen.

    ``dc+/dt = (i(Dp+ + Oc S_k) - kappa) c+ + kappa eta+`` and the same for
    ``c-`` with the sign of ``Oc S_k`` reversed.
    """
    if isinstance(c, CavityState):
        cp, cm = c.c_plus, c.c_minus
    else:
        cp, cm = c
    eta_plus = p.eta_plus if eta_plus is None else eta_plus
    eta_minus = p.eta_minus if eta_minus is None else eta_minus
    shift = p.omega_cpl * S_k
    dcp = (1j * (p.delta_p_plus + shift) - p.kappa) * cp + p.kappa * eta_plus
    dcm = (1j * (p.delta_p_minus - shift) - p.kappa) * cm + p.kappa * eta_minus
    return complex(dcp), complex(dcm)


def cavity_steady_state(p: SystemParams, S_k) -> CavityState:
    """Zero of :func:`cavity_drift` for frozen ``S_k``."""
    shift = p.omega_cpl * S_k
    cp = p.kappa * p.eta_plus / (p.kappa - 1j * (p.delta_p_plus + shift))
    cm = p.kappa * p.eta_minus / (p.kappa - 1j * (p.delta_p_minus - shift))
    return CavityState(complex(cp), complex(cm))


def analogy_map(p: SystemParams) -> OptomechAnalogue:
    if p.omega_L <= 0:
        raise DomainError("analogy requires omega_L > 0")
    dS_sql = float(np.sqrt(p.S / 2.0))
    z_ho = 1.0
    return OptomechAnalogue(
        omega_z=p.omega_L,
        dS_sql=dS_sql,
        z_ho=z_ho,
        p_ho=1.0 / (2.0 * z_ho),
        g_om=-p.omega_cpl * dS_sql,
        mass_equiv=1.0 / (2.0 * z_ho**2 * p.omega_L),
    )


def _rotate(v, axis, angle):
    """Rotate ``v`` (shape (..., 3)) about unit ``axis`` by ``angle``."""
    angle = np.asarray(angle)[..., None]
    c, s = np.cos(angle), np.sin(angle)
    return v * c + np.cross(axis, v) * s + np.outer(np.ones(angle.shape[:-1]), axis) * (
        axis @ v
    ) * (1 - c)


def analogy_equivalence_check(p: SystemParams, amplitude, duration=None,
                              photon_imbalance=0.0, n_samples=20001):
    """Compare spin precession on the sphere with the mapped oscillator.

    The spin starts at ``S (sqrt(1 - a**2) i + a k)`` with ``a = amplitude``
    and precesses about a constant field with photon imbalance
    ``photon_imbalance``.  The oscillator starts at the mapped point and
    evolves under the mapped constant force.  Both are exact closed-form
    solutions sampled on a uniform grid.

    Returns
    -------
    float
        ``max_t |mapped spin - oscillator|`` in ``(z/z_ho, p/p_ho)`` units,
        divided by the largest oscillator excursion.  Zero when both stay at
        the origin.
    """
    if not p.b_is_i:
        raise DomainError("the oscillator mapping assumes b = i")
    om = analogy_map(p)
    if duration is None:
        duration = 100 * 2 * np.pi / p.omega_L
    t = np.linspace(0.0, duration, n_samples)

    s0 = p.S * np.array([np.sqrt(1.0 - amplitude**2), 0.0, amplitude])
    w = np.array([p.omega_L, 0.0, p.omega_cpl * photon_imbalance])
    wn = np.linalg.norm(w)
    # dS/dt = S x w is a rotation about w by -|w| t
    spin = _rotate(s0, w / wn, -wn * t)
    z_spin = -om.z_ho * spin[:, 2] / om.dS_sql
    p_spin = om.p_ho * spin[:, 1] / om.dS_sql

    m, wz = om.mass_equiv, om.omega_z
    force = om.g_om * photon_imbalance / om.z_ho
    z_eq = force / (m * wz**2)
    z0 = -om.z_ho * s0[2] / om.dS_sql
    z_osc = z_eq + (z0 - z_eq) * np.cos(wz * t)
    p_osc = -m * wz * (z0 - z_eq) * np.sin(wz * t)

    dz = (z_spin - z_osc) / om.z_ho
    dp = (p_spin - p_osc) / om.p_ho
    scale = np.max(np.hypot(z_osc / om.z_ho, p_osc / om.p_ho))
    dev = np.max(np.hypot(dz, dp))
    if scale == 0.0:
        return float(dev)
    return float(dev / scale)
