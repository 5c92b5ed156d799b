"""Pure-Python kernels, the fallback when the compiled extension is absent.

Both implementations must perform the same floating-point operations in the
same order so that runs are bit-identical regardless of backend.
"""

__all__ = ["advance_seconds", "catchup_seconds"]


def advance_seconds(
    workload,
    shares,
    capacities,
    noise,
    lag,
    down_remaining,
    ckpt_clock,
    ckpt_interval,
    processed_since_ckpt,
    cap_rate,
    sustain,
    base_latency,
    out_tput,
    out_lag,
    out_latency,
    out_cpu_mean,
    worker_tput_sum,
    worker_cpu_sum,
):
    """Advance the per-second processing loop over one chunk.

    The job consumes min(lag + arrivals, cap_rate) tuples per second from
    the source (backpressure from the bottleneck worker caps the whole
    pipeline); consumption is split across workers by cumulative key-weight
    share with exact integer rounding. Per-second cluster metrics go into
    the out_* arrays and per-worker sums accumulate for window averaging.
    Returns updated (lag, down_remaining, ckpt_clock, processed_since_ckpt,
    down_seconds).
    """
    n = len(workload)
    nw = len(shares)
    wl = workload.tolist()
    sh = shares.tolist()
    cap = capacities.tolist()
    nz = noise.tolist()
    down_seconds = 0

    for s in range(n):
        arrived = wl[s]
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
        # exact integer split of this second's consumption by cumulative share
        prev = 0
        cum = 0.0
        cpu_total = 0.0
        row = nz[s]
        for w in range(nw):
            if w < nw - 1:
                cum += sh[w]
                q = int(cum * consumed)
                if q > consumed:
                    q = consumed
                if q < prev:
                    q = prev
                proc = q - prev
                prev = q
            else:
                proc = consumed - prev
            cpu = (proc / cap[w]) * row[w]
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


def catchup_seconds(capacity, forecast, downtime, backlog):
    """Seconds of catch-up needed after ``downtime``, or -1 if infeasible.

    Scans the forecast from index ``downtime`` and accumulates spare
    capacity max(capacity - forecast[s], 0) until it covers ``backlog``.
    """
    if backlog <= 0.0:
        return 0
    fc = forecast.tolist()
    n = len(fc)
    cum = 0.0
    for s in range(downtime, n):
        extra = capacity - fc[s]
        if extra > 0.0:
            cum += extra
        if cum >= backlog:
            return s - downtime + 1
    return -1
