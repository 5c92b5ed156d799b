# cython: language_level=3
"""Compiled kernels for the simulator inner loop and recovery scans.

Mirrors _pure.py operation-for-operation; keep both in sync so results
stay bit-identical across backends.
"""

cimport numpy as cnp

__all__ = ["advance_seconds", "catchup_seconds"]


def advance_seconds(
    cnp.int64_t[::1] workload,
    cnp.float64_t[::1] shares,
    cnp.int64_t[::1] capacities,
    cnp.float64_t[:, ::1] noise,
    long long lag,
    long long down_remaining,
    long long ckpt_clock,
    long long ckpt_interval,
    long long processed_since_ckpt,
    long long cap_rate,
    double sustain,
    double base_latency,
    cnp.int64_t[::1] out_tput,
    cnp.int64_t[::1] out_lag,
    cnp.float64_t[::1] out_latency,
    cnp.float64_t[::1] out_cpu_mean,
    cnp.int64_t[::1] worker_tput_sum,
    cnp.float64_t[::1] worker_cpu_sum,
):
    """Advance the per-second processing loop over one chunk.

    See the pure-Python twin for the full contract.
    """
    cdef Py_ssize_t n = workload.shape[0]
    cdef Py_ssize_t nw = shares.shape[0]
    cdef Py_ssize_t s, w
    cdef long long arrived, avail, consumed, prev, q, proc
    cdef long long down_seconds = 0
    cdef double cum, cpu, cpu_total

    for s in range(n):
        arrived = workload[s]
        if down_remaining > 0:
            lag += arrived
            down_remaining -= 1
            down_seconds += 1
            out_tput[s] = 0
            out_lag[s] = lag
            out_latency[s] = lag / sustain + base_latency
            out_cpu_mean[s] = 0.0
            continue
        avail = lag + arrived
        consumed = avail if avail < cap_rate else cap_rate
        lag = avail - consumed
        prev = 0
        cum = 0.0
        cpu_total = 0.0
        for w in range(nw):
            if w < nw - 1:
                cum += shares[w]
                q = <long long> (cum * consumed)
                if q > consumed:
                    q = consumed
                if q < prev:
                    q = prev
                proc = q - prev
                prev = q
            else:
                proc = consumed - prev
            cpu = ((<double> proc) / (<double> capacities[w])) * noise[s, w]
            if cpu > 1.0:
                cpu = 1.0
            cpu_total += cpu
            worker_tput_sum[w] += proc
            worker_cpu_sum[w] += cpu
        ckpt_clock += 1
        processed_since_ckpt += consumed
        if ckpt_clock >= ckpt_interval:
            ckpt_clock = 0
            processed_since_ckpt = 0
        out_tput[s] = consumed
        out_lag[s] = lag
        out_latency[s] = lag / sustain + base_latency
        out_cpu_mean[s] = cpu_total / nw

    return lag, down_remaining, ckpt_clock, processed_since_ckpt, down_seconds


def catchup_seconds(double capacity, cnp.float64_t[::1] forecast, long long downtime, double backlog):
    """Seconds of catch-up needed after ``downtime``, or -1 if infeasible."""
    cdef Py_ssize_t n = forecast.shape[0]
    cdef Py_ssize_t s
    cdef double cum = 0.0
    cdef double extra
    if backlog <= 0.0:
        return 0
    for s in range(downtime, n):
        extra = capacity - forecast[s]
        if extra > 0.0:
            cum += extra
        if cum >= backlog:
            return s - downtime + 1
    return -1
