"""Static spin-cavity configurations, their stability, and hysteresis sweeps.

A static spin lies in the i-k plane at polar angle ``theta0`` from the cavity
axis, ``S = S (sin(theta0) i + cos(theta0) k)``, and must be parallel (or
antiparallel) to the effective field.  That reduces to a scalar equation in
``theta0`` on ``(0, pi) U (pi, 2 pi)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from spinopto.errors import DomainError, SpinoptoError, UnsupportedConfigurationError
from spinopto.model import SystemParams

DEFAULT_GRID_N = 4096
CAPTURE_RADIUS = 0.2
MARGINAL_REL = 1e-9


@dataclass(frozen=True)
class FixedPoint:
    """A static configuration.

    ``lam`` is the feedback coefficient ``Omega_c d(n+ - n-)/dS_k`` and
    ``alpha = sgn(sin(theta0))``.  ``marginal`` is set when the stability
    test lies within the marginal band; such points are reported unstable.
    """

    theta0: float
    n_plus: float
    n_minus: float
    lam: float
    alpha: int
    stable: bool
    residual_value: float
    marginal: bool = False

    @property
    def S_k_fraction(self) -> float:
        return float(np.cos(self.theta0))

    def spin_vector(self, S) -> np.ndarray:
        return S * np.array([np.sin(self.theta0), 0.0, np.cos(self.theta0)])


@dataclass
class BranchTrace:
    """Result of a quasistatic detuning sweep."""

    detunings: np.ndarray
    fixed_points: list
    jump_indices: list = field(default_factory=list)

    @property
    def theta0(self) -> np.ndarray:
        return np.array([fp.theta0 for fp in self.fixed_points])

    @property
    def n_plus(self) -> np.ndarray:
        return np.array([fp.n_plus for fp in self.fixed_points])

    @property
    def n_minus(self) -> np.ndarray:
        return np.array([fp.n_minus for fp in self.fixed_points])

    @property
    def jump_detunings(self) -> np.ndarray:
        return np.asarray(self.detunings)[list(self.jump_indices)]


def _detunings(p: SystemParams, theta0):
    """Effective detunings of both modes at the static orientation."""
    shift = p.omega_cpl * p.S * np.cos(theta0)
    return p.delta_p_plus + shift, p.delta_p_minus - shift


def photon_numbers_static(p: SystemParams, theta0):
    """Lorentzian photon numbers with the spin frozen at ``theta0``."""
    dp, dm = _detunings(p, theta0)
    k2 = p.kappa**2
    n_plus = p.nmax_plus / (1.0 + dp**2 / k2)
    n_minus = p.nmax_minus / (1.0 + dm**2 / k2)
    return n_plus, n_minus


def _residual(p, theta0):
    n_plus, n_minus = photon_numbers_static(p, theta0)
    return p.omega_cpl * (n_plus - n_minus) - p.omega_L / np.tan(theta0)


def residual(p: SystemParams, theta0):
    """Fixed-point residual ``Omega_c (n+ - n-) - Omega_L cot(theta0)`` in rad/s."""
    theta0 = np.asarray(theta0, dtype=float)
    if np.any(np.abs(np.sin(theta0)) < 1e-15):
        raise DomainError("residual is singular for the spin along +-k (theta0 in {0, pi})")
    r = _residual(p, theta0)
    return float(r) if r.ndim == 0 else r


def lambda_response(p: SystemParams, theta0):
    """Closed-form feedback coefficient at ``S_k = S cos(theta0)``.

    With reduced detunings ``x+- = (Dp+- +- Oc S_k) / kappa``::

        lam = -(2 Oc**2 / kappa) * (nmax+ x+ / (1 + x+**2)**2
                                    + nmax- x- / (1 + x-**2)**2)

    Both modes enter with the same sign: ``n+`` tunes with ``+Oc S_k`` and
    enters ``n+ - n-`` positively, ``n-`` tunes with ``-Oc S_k`` and enters
    negatively.
    """
    dp, dm = _detunings(p, theta0)
    xp, xm = dp / p.kappa, dm / p.kappa
    total = p.nmax_plus * xp / (1 + xp**2) ** 2 + p.nmax_minus * xm / (1 + xm**2) ** 2
    lam = -2.0 * p.omega_cpl**2 / p.kappa * total
    return float(lam) if np.ndim(lam) == 0 else lam


def stability_threshold(p: SystemParams, theta0) -> float:
    """``Omega_L |csc(theta0)|**3 / S``, the bound on ``alpha * lam``."""
    return float(p.omega_L / abs(np.sin(theta0)) ** 3 / p.S)


def _classify(p, theta0, lam):
    alpha = 1 if np.sin(theta0) > 0 else -1
    gap = alpha * lam - stability_threshold(p, theta0)
    marginal = abs(gap) < MARGINAL_REL * abs(p.omega_L) / p.S
    return (gap <= 0) and not marginal, marginal


def classify(p: SystemParams, fp: FixedPoint) -> bool:
    """Static stability: ``alpha * lam <= Omega_L |csc(theta0)|**3 / S``.

    Marginal cases are reported unstable with a warning.
    """
    stable, marginal = _classify(p, fp.theta0, fp.lam)
    if marginal:
        warnings.warn(f"fixed point at theta0={fp.theta0:.6g} is marginally stable",
                      RuntimeWarning, stacklevel=2)
    return stable


def make_fixed_point(p: SystemParams, theta0) -> FixedPoint:
    theta0 = float(np.mod(theta0, 2 * np.pi))
    n_plus, n_minus = photon_numbers_static(p, theta0)
    lam = lambda_response(p, theta0)
    stable, marginal = _classify(p, theta0, lam)
    return FixedPoint(
        theta0=theta0,
        n_plus=float(n_plus),
        n_minus=float(n_minus),
        lam=lam,
        alpha=1 if np.sin(theta0) > 0 else -1,
        stable=stable,
        residual_value=float(_residual(p, theta0)),
        marginal=marginal,
    )


def _bisect(p, lo, hi, rlo, tol=1e-12):
    # vectorized over brackets; rlo carries the residual sign at lo
    slo = np.sign(rlo)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        rmid = _residual(p, mid)
        same = np.sign(rmid) == slo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
        exact = rmid == 0
        lo = np.where(exact, mid, lo)
        hi = np.where(exact, mid, hi)
    return 0.5 * (lo + hi)


def find_fixed_points(p: SystemParams, grid_n: int = DEFAULT_GRID_N) -> list:
    """All static configurations, sorted by ``theta0``.

    Each open half-interval ``(0, pi)`` and ``(pi, 2 pi)`` is scanned on
    ``grid_n`` uniform points; sign changes of :func:`residual` are refined
    by bisection to ``1e-12`` rad.  Only i-k plane solutions exist for
    ``b = i``; out-of-plane configurations are not searched for.
    """
    if not p.b_is_i:
        raise UnsupportedConfigurationError("fixed-point analysis requires b = i")
    if grid_n < 1000:
        raise DomainError("grid_n must be >= 1000")
    roots = []
    for start in (0.0, np.pi):
        g = start + np.linspace(0.0, np.pi, grid_n + 2)[1:-1]
        r = _residual(p, g)
        zero = r == 0
        roots.extend(g[zero])
        cross = np.nonzero((r[:-1] * r[1:] < 0))[0]
        if cross.size:
            roots.extend(_bisect(p, g[cross], g[cross + 1], r[cross]))
    return [make_fixed_point(p, t) for t in sorted(roots)]


def operating_point_drive(p: SystemParams, n_plus, effective_detuning, branch="high"):
    """Drive settings that place a sigma+ fixed point at a given operating point.

    Finds the bare detuning ``delta_p_plus`` and ``nmax_plus`` such that a
    fixed point on the requested hemisphere holds ``n_plus`` photons at
    effective detuning ``effective_detuning`` (``Dp+ + Oc S_k``).

    Parameters
    ----------
    p : SystemParams
        Base parameters; the sigma- mode must be undriven.
    n_plus : float
        Intracavity photon number at the operating point.
    effective_detuning : float
        Probe detuning from the spin-shifted resonance at the operating point.
    branch : {"high", "low"}
        ``"low"`` selects the orientation near +i (aligned with the field),
        ``"high"`` the one near -i.

    Returns
    -------
    params : SystemParams
    theta0 : float
    """
    if p.nmax_minus != 0:
        raise UnsupportedConfigurationError("operating point helper needs sigma- undriven")
    if branch not in ("high", "low"):
        raise DomainError("branch must be 'high' or 'low'")
    cot = p.omega_cpl * n_plus / p.omega_L
    sgn = -1.0 if branch == "high" else 1.0
    theta0 = float(np.mod(np.arctan2(sgn, sgn * cot), 2 * np.pi))
    S_k = p.S * np.cos(theta0)
    x = effective_detuning / p.kappa
    q = replace(
        p,
        delta_p_plus=float(effective_detuning - p.omega_cpl * S_k),
        nmax_plus=float(n_plus * (1 + x**2)),
    )
    return q, theta0


def _circ(a, b):
    d = np.mod(np.asarray(a) - b, 2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)


def _select(fps, prev, capture_radius):
    """Pick the followed branch among ``fps``; report whether it switched.

    The continuation of the previous branch is the fixed point of any
    stability nearest to ``prev``.  If it is stable and within the capture
    radius it is kept.  Otherwise the branch has been lost: the nearest
    stable point within the capture radius is taken (ties go to the one
    closer to ``theta0 = 0``), or failing that the stable point closest to
    ``theta0 = 0`` (ties, such as +-pi/2, go to the one nearer ``prev``).
    """
    thetas = np.array([fp.theta0 for fp in fps])
    stable = np.array([fp.stable for fp in fps])
    dist = _circ(thetas, prev)
    to_zero = _circ(thetas, 0.0)
    cont = int(np.argmin(dist))
    if stable[cont] and dist[cont] <= capture_radius:
        return cont, False
    cand = np.nonzero(stable & (dist <= capture_radius))[0]
    if cand.size:
        order = np.lexsort((to_zero[cand], np.round(dist[cand], 12)))
        return int(cand[order[0]]), True
    cand = np.nonzero(stable)[0]
    order = np.lexsort((dist[cand], np.round(to_zero[cand], 12)))
    return int(cand[order[0]]), True


def quasistatic_sweep(p: SystemParams, detuning_grid, direction="up", start_theta=np.pi / 2,
                      capture_radius=CAPTURE_RADIUS, grid_n=DEFAULT_GRID_N) -> BranchTrace:
    """Follow a stable branch while both probe detunings are swept together.

    At each step the stable fixed point nearest in ``theta0`` to the
    previous selection is kept.  A branch switch is recorded in
    ``jump_indices`` whenever the followed branch loses stability or
    disappears, whether through a fold (no stable point within
    ``capture_radius``, jump to the stable point closest to ``theta0 = 0``)
    or a pitchfork (stable branches split off continuously).
    """
    grid = np.asarray(detuning_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise DomainError("detuning grid must be a non-empty 1-D sequence")
    steps = np.diff(grid)
    if direction == "up":
        ok = np.all(steps > 0)
    elif direction == "down":
        ok = np.all(steps < 0)
    else:
        raise DomainError("direction must be 'up' or 'down'")
    if not ok:
        raise DomainError(f"detuning grid is not monotone in direction {direction!r}")

    prev = float(start_theta)
    selected, jumps = [], []
    for i, d in enumerate(grid):
        q = replace(p, delta_p_plus=float(d), delta_p_minus=float(d))
        fps = find_fixed_points(q, grid_n)
        if not any(fp.stable for fp in fps):
            raise SpinoptoError(f"no stable fixed point at detuning {d!r}")
        idx, jumped = _select(fps, prev, capture_radius)
        if jumped and i > 0:
            jumps.append(i)
        selected.append(fps[idx])
        prev = fps[idx].theta0
    return BranchTrace(detunings=grid, fixed_points=selected, jump_indices=jumps)
