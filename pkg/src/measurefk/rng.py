"""Counter-based random streams (Philox4x64-10) and inverse-normal sampling.

Every path owns an independent stream addressed by ``(seed, path_index)``;
draw ``j`` of a stream is a pure function of ``(seed, path_index, j)``.  This
makes batch simulation reproducible bit-for-bit regardless of scheduling:
workers never share generator state.

The compiled kernel (``_pathcore.pyx``) reimplements the same Philox rounds
and the same AS241 inverse normal CDF; ``tests/test_rng.py`` pins both to the
vectors frozen here.
"""

from __future__ import annotations

import numpy as np

# Philox4x64-10 round multipliers and Weyl key increments.
PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
PHILOX_M1 = np.uint64(0xCA5A826395121157)
PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)

_M32 = np.uint64(0xFFFFFFFF)
_U32 = np.uint64(32)
_U11 = np.uint64(11)
_INV53 = float(2.0 ** -53)
_HALF54 = float(2.0 ** -54)

# Substream ids (third counter word is the path index; the second word keeps
# independent draw families apart).
SUB_MAIN = 0          # per-step uniforms
SUB_CLOCK = 1         # one kill-clock uniform per path


def _mulhilo(mult: np.uint64, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full 64x64 -> 128 bit product of a constant with an uint64 array."""
    al = mult & _M32
    ah = mult >> _U32
    xl = x & _M32
    xh = x >> _U32
    ll = al * xl
    lh = al * xh
    hl = ah * xl
    mid = (ll >> _U32) + (lh & _M32) + (hl & _M32)
    hi = ah * xh + (lh >> _U32) + (hl >> _U32) + (mid >> _U32)
    lo = mult * x
    return hi, lo


def philox4x64(c0, c1, c2, c3, k0, k1):
    """One Philox4x64-10 block per counter; all arguments broadcast as uint64.

    Returns the four output words.  Matches numpy's ``Philox`` bit generator
    (which emits the block for ``counter + 1`` first).
    """
    x0 = np.asarray(c0, dtype=np.uint64)
    x1 = np.asarray(c1, dtype=np.uint64)
    x2 = np.asarray(c2, dtype=np.uint64)
    x3 = np.asarray(c3, dtype=np.uint64)
    x0, x1, x2, x3 = np.broadcast_arrays(x0, x1, x2, x3)
    x0, x1 = x0.copy(), x1.copy()
    x2, x3 = x2.copy(), x3.copy()
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    with np.errstate(over="ignore"):
        for rnd in range(10):
            if rnd > 0:
                k0 += PHILOX_W0
                k1 += PHILOX_W1
            hi0, lo0 = _mulhilo(PHILOX_M0, x0)
            hi1, lo1 = _mulhilo(PHILOX_M1, x2)
            x0 = hi1 ^ x1 ^ k0
            x1 = lo1
            x2 = hi0 ^ x3 ^ k1
            x3 = lo0
    return x0, x1, x2, x3


def _word_to_uniform(w: np.ndarray) -> np.ndarray:
    """Map an uint64 word to a double in the open interval (0, 1)."""
    return (w >> _U11).astype(np.float64) * _INV53 + _HALF54


def uniform_draw(seed: int, path_ids: np.ndarray, draw_index: int,
                 substream: int = SUB_MAIN) -> np.ndarray:
    """Uniform draw ``draw_index`` for each path in ``path_ids``."""
    block = np.uint64(draw_index >> 2)
    word = draw_index & 3
    ids = np.asarray(path_ids, dtype=np.uint64)
    out = philox4x64(block, np.uint64(substream), ids, np.uint64(0),
                     np.uint64(seed), np.uint64(0))
    return _word_to_uniform(out[word])


def uniform_block(seed: int, path_ids: np.ndarray, first_draw: int,
                  n_draws: int, substream: int = SUB_MAIN) -> np.ndarray:
    """``n_draws`` consecutive uniforms per path, shape (len(path_ids), n_draws)."""
    ids = np.asarray(path_ids, dtype=np.uint64)
    out = np.empty((ids.shape[0], n_draws))
    for j in range(n_draws):
        out[:, j] = uniform_draw(seed, ids, first_draw + j, substream)
    return out


# AS241 rational approximations for the inverse normal CDF (PPND16).
_A = (3.3871328727963666080e0, 1.3314166789178437745e+2,
      1.9715909503065514427e+3, 1.3731693765509461125e+4,
      4.5921953931549871457e+4, 6.7265770927008700853e+4,
      3.3430575583588128105e+4, 2.5090809287301226727e+3)
_B = (1.0, 4.2313330701600911252e+1, 6.8718700749205790830e+2,
      5.3941960214247511077e+3, 2.1213794301586595867e+4,
      3.9307895800092710610e+4, 2.8729085735721942674e+4,
      5.2264952788528545610e+3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0,
      5.76949722146069140550e0, 3.64784832476320460504e0,
      1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
      6.89767334985100004550e-1, 1.48103976427480074590e-1,
      1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0,
      1.78482653991729133580e0, 2.96560571828504891230e-1,
      2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
      1.48753612908506148525e-2, 7.86869131145613259100e-4,
      1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coeffs, r):
    acc = np.full_like(r, coeffs[7])
    for c in coeffs[6::-1]:
        acc = acc * r + c
    return acc


def normal_inv_cdf(p):
    """Inverse standard normal CDF, AS241 double-precision branch."""
    p = np.asarray(p, dtype=np.float64)
    scalar = p.ndim == 0
    p = np.atleast_1d(p)
    q = p - 0.5
    out = np.empty_like(p)

    central = np.abs(q) <= 0.425
    if np.any(central):
        r = 0.180625 - q[central] * q[central]
        out[central] = q[central] * _poly(_A, r) / _poly(_B, r)

    tails = ~central
    if np.any(tails):
        qt = q[tails]
        r = np.where(qt < 0.0, p[tails], 1.0 - p[tails])
        r = np.sqrt(-np.log(r))
        near = r <= 5.0
        val = np.empty_like(r)
        if np.any(near):
            rr = r[near] - 1.6
            val[near] = _poly(_C, rr) / _poly(_D, rr)
        if np.any(~near):
            rr = r[~near] - 5.0
            val[~near] = _poly(_E, rr) / _poly(_F, rr)
        out[tails] = np.where(qt < 0.0, -val, val)

    return out[0] if scalar else out
