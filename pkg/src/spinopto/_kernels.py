"""Compiled inner loop for the Strang-split spin-cavity integrator."""

import numpy as np
import numba as nb


@nb.njit(cache=True, nogil=True)
def _rotate_inplace(s, wx, wy, wz, h):
    # exact flow of dS/dt = S x w over time h: rotation about w by -|w| h
    wn = np.sqrt(wx * wx + wy * wy + wz * wz)
    if wn == 0.0:
        return
    ax, ay, az = wx / wn, wy / wn, wz / wn
    ang = -wn * h
    c = np.cos(ang)
    sn = np.sin(ang)
    sx, sy, sz = s[0], s[1], s[2]
    dot = ax * sx + ay * sy + az * sz
    cx = ay * sz - az * sy
    cy = az * sx - ax * sz
    cz = ax * sy - ay * sx
    s[0] = sx * c + cx * sn + ax * dot * (1.0 - c)
    s[1] = sy * c + cy * sn + ay * dot * (1.0 - c)
    s[2] = sz * c + cz * sn + az * dot * (1.0 - c)


@nb.njit(cache=True, nogil=True)
def _ou_update(c, a, drive, h, sig, z_re, z_im):
    # exact solution of dc/dt = a c + drive over h, plus the exact
    # Gaussian increment of variance sig**2 per real component
    e = np.exp(a * h)
    return c * e + drive * (e - 1.0) / a + sig * (z_re + 1j * z_im)


@nb.njit(cache=True, nogil=True)
def run_steps(spin, cav, t0, nsteps, dt, stride, rec_spin, rec_cav, rec_t,
              omega_L, bx, by, bz, omega_cpl, kappa,
              knot_t, dp_k, dm_k, ep_k, em_k,
              z, noise_plus, noise_minus):
    """Advance ``nsteps`` steps in place, recording every ``stride`` steps.

    ``z`` holds standard normal draws of shape (nsteps, 4) ordered
    (re+, im+, re-, im-); it may have zero rows when both noise flags are off.
    """
    sig = np.sqrt((1.0 - np.exp(-2.0 * kappa * dt)) / 4.0)
    half = 0.5 * dt
    ramped = knot_t.size > 1
    dp, dm, ep, em = dp_k[0], dm_k[0], ep_k[0], em_k[0]
    r = 0
    for n in range(nsteps):
        if ramped:
            tm = t0 + (n + 0.5) * dt
            dp = np.interp(tm, knot_t, dp_k)
            dm = np.interp(tm, knot_t, dm_k)
            ep = np.interp(tm, knot_t, ep_k)
            em = np.interp(tm, knot_t, em_k)

        imb = cav[0].real ** 2 + cav[0].imag ** 2 - cav[1].real ** 2 - cav[1].imag ** 2
        _rotate_inplace(spin, omega_L * bx, omega_L * by, omega_L * bz + omega_cpl * imb, half)

        shift = omega_cpl * spin[2]
        ap = complex(-kappa, dp + shift)
        am = complex(-kappa, dm - shift)
        if noise_plus:
            cav[0] = _ou_update(cav[0], ap, kappa * ep, dt, sig, z[n, 0], z[n, 1])
        else:
            cav[0] = _ou_update(cav[0], ap, kappa * ep, dt, 0.0, 0.0, 0.0)
        if noise_minus:
            cav[1] = _ou_update(cav[1], am, kappa * em, dt, sig, z[n, 2], z[n, 3])
        else:
            cav[1] = _ou_update(cav[1], am, kappa * em, dt, 0.0, 0.0, 0.0)

        imb = cav[0].real ** 2 + cav[0].imag ** 2 - cav[1].real ** 2 - cav[1].imag ** 2
        _rotate_inplace(spin, omega_L * bx, omega_L * by, omega_L * bz + omega_cpl * imb, half)

        if (n + 1) % stride == 0:
            rec_spin[r, 0] = spin[0]
            rec_spin[r, 1] = spin[1]
            rec_spin[r, 2] = spin[2]
            rec_cav[r, 0] = cav[0]
            rec_cav[r, 1] = cav[1]
            rec_t[r] = t0 + (n + 1) * dt
            r += 1
    return r
