"""Compiled inner loops. Thin wrappers in the public modules own validation."""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def ou_trace(phi_pre, phi_post, nu, sd_q, sd_state0, sd_meas, noise, j0, fixed_start, out):
    """Exact OU recursion, sampled through ``C = (0, 1)`` plus shot noise.

    ``noise`` is (n, 3) standard normal: two state columns, one measurement.
    Transition into sample k uses ``phi_post`` when ``k >= nu``.
    """
    n = out.shape[0]
    if fixed_start:
        jy = j0[0]
        jz = j0[1]
    else:
        jy = sd_state0 * noise[0, 0]
        jz = sd_state0 * noise[0, 1]
    out[0] = jz + sd_meas * noise[0, 2]
    for k in range(1, n):
        if k >= nu:
            p = phi_post
        else:
            p = phi_pre
        ny = p[0, 0] * jy + p[0, 1] * jz + sd_q * noise[k, 0]
        nz = p[1, 0] * jy + p[1, 1] * jz + sd_q * noise[k, 1]
        jy = ny
        jz = nz
        out[k] = jz + sd_meas * noise[k, 2]


@njit(cache=True, nogil=True)
def highpass(x, alpha, prev_in, prev_out, out):
    """``R_k = alpha R_{k-1} + sqrt(alpha) (I_k - I_{k-1})``; returns final (in, out)."""
    sa = math.sqrt(alpha)
    for k in range(x.shape[0]):
        r = alpha * prev_out + sa * (x[k] - prev_in)
        prev_in = x[k]
        prev_out = r
        out[k] = r
    return prev_in, prev_out


@njit(cache=True, nogil=True)
def riccati_schedule(phi, qd, G, p0, n, sig2, gain):
    """Data-independent innovation variances and Kalman gains (Joseph update)."""
    P = p0.copy()
    for k in range(n):
        # predict: Phi P Phi^T + Qd
        a00 = phi[0, 0] * P[0, 0] + phi[0, 1] * P[1, 0]
        a01 = phi[0, 0] * P[0, 1] + phi[0, 1] * P[1, 1]
        a10 = phi[1, 0] * P[0, 0] + phi[1, 1] * P[1, 0]
        a11 = phi[1, 0] * P[0, 1] + phi[1, 1] * P[1, 1]
        p00 = a00 * phi[0, 0] + a01 * phi[0, 1] + qd[0, 0]
        p01 = a00 * phi[1, 0] + a01 * phi[1, 1] + qd[0, 1]
        p10 = a10 * phi[0, 0] + a11 * phi[0, 1] + qd[1, 0]
        p11 = a10 * phi[1, 0] + a11 * phi[1, 1] + qd[1, 1]
        s = G + p11
        k0 = p01 / s
        k1 = p11 / s
        sig2[k] = s
        gain[k, 0] = k0
        gain[k, 1] = k1
        # Joseph form: (I - K C) P (I - K C)^T + K G K^T with C = (0, 1)
        b00 = p00 - k0 * p10
        b01 = p01 - k0 * p11
        b10 = p10 - k1 * p10
        b11 = p11 - k1 * p11
        P[0, 0] = b00 - b01 * k0 + G * k0 * k0
        P[0, 1] = b01 * (1.0 - k1) + G * k0 * k1
        P[1, 0] = b10 - b11 * k0 + G * k1 * k0
        P[1, 1] = b11 * (1.0 - k1) + G * k1 * k1
        sym = 0.5 * (P[0, 1] + P[1, 0])
        P[0, 1] = sym
        P[1, 0] = sym


@njit(cache=True, nogil=True)
def kalman_innovations(y, phi, gain, sig2, mu_out):
    """Predicted measurement for every sample of one filter."""
    m0 = 0.0
    m1 = 0.0
    ns = sig2.shape[0]
    for k in range(y.shape[0]):
        j = k if k < ns else ns - 1
        a = phi[0, 0] * m0 + phi[0, 1] * m1
        b = phi[1, 0] * m0 + phi[1, 1] * m1
        e = y[k] - b
        mu_out[k] = b
        m0 = a + gain[j, 0] * e
        m1 = b + gain[j, 1] * e


@njit(cache=True, nogil=True)
def dual_llr(y, phi0, gain0, sig0, phi1, gain1, sig1, state, out):
    """LLR increments of two filters fed the same samples.

    ``state`` holds (m0y, m0z, m1y, m1z, k) and is advanced in place so a
    stream can be processed block by block.
    """
    m00 = state[0]
    m01 = state[1]
    m10 = state[2]
    m11 = state[3]
    k = int(state[4])
    n0 = sig0.shape[0]
    n1 = sig1.shape[0]
    for i in range(y.shape[0]):
        # the two schedules may settle after different numbers of steps
        j0 = k if k < n0 else n0 - 1
        j1 = k if k < n1 else n1 - 1
        a0 = phi0[0, 0] * m00 + phi0[0, 1] * m01
        b0 = phi0[1, 0] * m00 + phi0[1, 1] * m01
        a1 = phi1[0, 0] * m10 + phi1[0, 1] * m11
        b1 = phi1[1, 0] * m10 + phi1[1, 1] * m11
        e0 = y[i] - b0
        e1 = y[i] - b1
        s0 = sig0[j0]
        s1 = sig1[j1]
        out[i] = 0.5 * math.log(s0 / s1) + e0 * e0 / (2.0 * s0) - e1 * e1 / (2.0 * s1)
        m00 = a0 + gain0[j0, 0] * e0
        m01 = b0 + gain0[j0, 1] * e0
        m10 = a1 + gain1[j1, 0] * e1
        m11 = b1 + gain1[j1, 1] * e1
        k += 1
    state[0] = m00
    state[1] = m01
    state[2] = m10
    state[3] = m11
    state[4] = k


@njit(cache=True, nogil=True)
def sprt_first_exit(cum, thresholds, stop_idx, accept_h1):
    """First index where ``cum`` leaves (-a, a) for each symmetric threshold a."""
    na = thresholds.shape[0]
    for t in range(na):
        stop_idx[t] = -1
        accept_h1[t] = False
    remaining = na
    for k in range(cum.shape[0]):
        v = cum[k]
        for t in range(na):
            if stop_idx[t] < 0:
                a = thresholds[t]
                if v >= a:
                    stop_idx[t] = k
                    accept_h1[t] = True
                    remaining -= 1
                elif v <= -a:
                    stop_idx[t] = k
                    accept_h1[t] = False
                    remaining -= 1
        if remaining == 0:
            break


@njit(cache=True, nogil=True)
def cusum_first_alarm(dl, thresholds, start, alarm_idx):
    """First alarm of the max-form recursion at or after ``start``, per threshold."""
    na = thresholds.shape[0]
    for t in range(na):
        alarm_idx[t] = -1
    m = 0.0
    remaining = na
    for k in range(start, dl.shape[0]):
        m = max(m, 0.0) + dl[k]
        for t in range(na):
            if alarm_idx[t] < 0 and m >= thresholds[t]:
                alarm_idx[t] = k
                remaining -= 1
        if remaining == 0:
            break


@njit(cache=True, nogil=True)
def cusum_count_alarms(dl, a, positive_part):
    """Alarms with reset-and-continue over one increment stream."""
    m = 0.0
    count = 0
    for k in range(dl.shape[0]):
        d = dl[k]
        if positive_part:
            if d > 0.0:
                m += d
        else:
            m = max(m, 0.0) + d
        if m >= a:
            count += 1
            m = 0.0
    return count


@njit(cache=True, nogil=True)
def decide_block(dl, cusum_mode, a_h0, a_h1, a_alarm, positive_part, reset, state, llr_out, stat_out, flag_out, est_out):
    """Decision layer over a block of increments.

    ``state`` holds (llr, cusum, running min of the zero-prepended LLR since
    the last reset, its index, next sample index). Flags: 0 continue,
    1 accept h0, 2 accept h1, 3 alarm. Returns the number of samples
    consumed; SPRT mode stops after the first terminal flag.
    """
    llr = state[0]
    m = state[1]
    mn = state[2]
    mn_n = state[3]
    n = state[4]
    count = 0
    for k in range(dl.shape[0]):
        d = dl[k]
        llr = llr + d
        llr_out[k] = llr
        est_out[k] = -1
        count += 1
        if not cusum_mode:
            stat_out[k] = 0.0
            if llr >= a_h1:
                flag_out[k] = 2
                n += 1
                break
            elif llr <= -a_h0:
                flag_out[k] = 1
                n += 1
                break
            flag_out[k] = 0
            n += 1
            continue
        if positive_part:
            if d > 0.0:
                m = m + d
        else:
            m = max(m, 0.0) + d
        stat_out[k] = m
        if llr < mn:
            mn = llr
            mn_n = n + 1
        if m >= a_alarm:
            flag_out[k] = 3
            est_out[k] = int(mn_n)
            if reset:
                m = 0.0
            mn = llr
            mn_n = n + 1
        else:
            flag_out[k] = 0
        n += 1
    state[0] = llr
    state[1] = m
    state[2] = mn
    state[3] = mn_n
    state[4] = n
    return count
