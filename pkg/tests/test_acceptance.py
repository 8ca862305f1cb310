"""Acceptance criteria, one test each, at their stated tolerances."""
import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest

from padshield.cli import main
from padshield.defenses.front import FrontParams, gen_maybenot_front, gen_pipelined_front, \
    rayleigh_schedule
from padshield.defenses.regulator import BOOT_STATES, RegulatorParams, gen_regulator_client, \
    gen_regulator_relay
from padshield.defenses.surakav import BurstSequence, burst_sequence, burst_thresholds, \
    gen_surakav_machines
from padshield.distributions import Distribution
from padshield.machine import (PROB_EPS, STATE_END, ActionType, Event, Machine, MachineRuntime,
                               State, check_machine, simple_padding_state)
from padshield.metrics import latency_overhead, lcss, pearson
from padshield.simulator import SimConfig, simulate
from padshield.trace_io import Direction, Trace, TraceEvent, save_trace, sort_events, \
    strip_trailing_padding

from conftest import random_machine, web_trace

pytestmark = pytest.mark.acceptance


def test_ac01_framework_semantics(verdict):
    start = time.perf_counter()
    failures = []
    for k in range(1000):
        rng = random.Random(k)
        machine = random_machine(rng)
        check_machine(machine)
        for i, state in enumerate(machine.states):
            for event, vector in state.transitions.items():
                if math.fsum(p for _, p in vector) > 1 + PROB_EPS:
                    failures.append(f"machine {k} state {i} {event.value}: sum")
        script = rng.choices(list(Event), k=200)
        logs = []
        for _ in range(2):
            rt = MachineRuntime(machine, random.Random(k), record=True)
            actions = []
            for event in script:
                was_terminated = rt.terminated
                actions.append(rt.transition(event))
                if rt.limit is not None and rt.count > rt.limit:
                    failures.append(f"machine {k}: count {rt.count} > limit {rt.limit}")
                if was_terminated and actions[-1] is not None:
                    failures.append(f"machine {k}: action after StateEnd")
            logs.append((actions, rt.log))
        if logs[0] != logs[1]:
            failures.append(f"machine {k}: nondeterministic")

        # exact limit count on a scripted self-loop
        limit = rng.randint(1, 40)
        pad = simple_padding_state(Distribution.point(10), Distribution.point(limit),
                                   {Event.PADDING_SENT: [(1, 1.0)],
                                    Event.LIMIT_REACHED: [(STATE_END, 1.0)]})
        rt = MachineRuntime(Machine((State(transitions={Event.NON_PADDING_SENT: [(1, 1.0)]}),
                                     pad)), random.Random(k))
        emitted = int(rt.transition(Event.NON_PADDING_SENT) is not None)
        while not rt.terminated:
            a = rt.transition(Event.PADDING_SENT)
            if a is not None and a.kind is ActionType.SCHEDULE_PADDING:
                emitted += 1
        if emitted != limit:
            failures.append(f"limit {limit}: {emitted} actions")
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 30
    verdict(1, ok, f"1000 random machines, {len(failures)} violations, {elapsed:.1f} s (< 30 s)")
    assert ok, failures[:5]


def test_ac02_front_budget_law(verdict):
    machine = gen_maybenot_front(FrontParams(1500, 1.0, 14.0, 30))
    base = Trace([TraceEvent(0.0, Direction.OUT), TraceEvent(0.02, Direction.IN)], "b")
    start = time.perf_counter()
    counts = np.empty(10_000, dtype=np.int64)
    for seed in range(10_000):
        out = simulate(base, SimConfig(client_machines=[machine], seed=seed))
        counts[seed] = sum(1 for e in out.events if e.is_padding)
    elapsed = time.perf_counter() - start
    expected = 30 * (1 + 50) / 2
    rel = abs(counts.mean() - expected) / expected
    ok = counts.min() >= 30 and counts.max() <= 1500 and rel < 0.02 and elapsed < 120
    verdict(2, ok, f"padding in [{counts.min()}, {counts.max()}], mean {counts.mean():.1f} vs "
                   f"{expected} ({100 * rel:.2f}% < 2%), {elapsed:.1f} s (< 120 s)")
    assert ok


def test_ac03_rayleigh_fidelity(verdict):
    w = 5.0
    times = np.array(rayleigh_schedule(100_000, w, random.Random(3)))
    n = len(times)
    cdf = 1.0 - np.exp(-times ** 2 / (2 * w * w))
    i = np.arange(1, n + 1)
    ks = max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n))
    ok = ks < 0.01
    verdict(3, ok, f"KS statistic {ks:.5f} (< 0.01) over 10^5 padding times")
    assert ok


def test_ac04_regulator_boot(verdict):
    p = RegulatorParams(rate=324, decay=0.86, threshold=3.75, upload_ratio=4.02)
    machine = gen_regulator_relay(p)
    send0 = 2 + BOOT_STATES
    noise = [Event.PADDING_SENT, Event.PADDING_RECV, Event.NON_PADDING_RECV, Event.BLOCKING_BEGIN]
    good = 0
    counts = []
    for run in range(100):
        rng = random.Random(run)
        rt = MachineRuntime(machine, random.Random(run))
        sent = 0
        while rt.current != send0 and sent < 1000:
            if rng.random() < 0.4:
                sent += 1
                action = rt.transition(Event.NON_PADDING_SENT)
            else:
                action = rt.transition(rng.choice(noise))
            # as a host does: enacting a block raises BlockingBegin at once
            if action is not None and action.kind is ActionType.SCHEDULE_BLOCKING:
                rt.transition(Event.BLOCKING_BEGIN)
        counts.append(sent)
        good += sent == 10
    ok = good == 100
    verdict(4, ok, f"{good}/100 runs sent exactly 10 non-padding cells before SEND_0")
    assert ok, counts


def test_ac05_regulator_client_ratio(verdict):
    p = RegulatorParams(rate=238, decay=0.94, threshold=3.55, upload_ratio=3.95)
    rt = MachineRuntime(gen_regulator_client(p), random.Random(5))
    sent = 0
    for k in range(100_000):
        kind = Event.PADDING_RECV if k % 2 else Event.NON_PADDING_RECV
        action = rt.transition(kind)
        while action is not None and action.kind is ActionType.SCHEDULE_PADDING:
            assert action.timeout == 0
            sent += 1
            action = rt.transition(Event.PADDING_SENT)
    ratio = sent / 100_000
    rel = abs(ratio - 1 / 3.95) / (1 / 3.95)
    ok = rel <= 0.02
    verdict(5, ok, f"sent/received {ratio:.5f} vs {1 / 3.95:.5f} ({100 * rel:.2f}% <= 2%)")
    assert ok


def test_ac06_surakav_exact_replay(verdict):
    matches = 0
    for k in range(100):
        rng = random.Random(k)
        pairs = tuple((rng.randint(1, 8), rng.randint(1, 40)) for _ in range(rng.randint(1, 50)))
        ref = BurstSequence(pairs)
        total_out = sum(o for o, _ in pairs)
        total_in = sum(i for _, i in pairs)
        # real traffic the reference can absorb: queued while both ends block
        events = [TraceEvent(0.0, Direction.OUT)]
        events += [TraceEvent(j * 1e-6, Direction.OUT)
                   for j in range(1, rng.randint(0, min(total_out - 1, 15)) + 1)]
        events += [TraceEvent(0.02 + j * 1e-6, Direction.IN)
                   for j in range(rng.randint(1, min(total_in, 30)))]
        base = Trace(sort_events(events), f"r{k}")
        client, relay = gen_surakav_machines(ref)
        out = simulate(base, SimConfig([client], [relay], seed=k))
        real = sum(1 for e in out if not e.is_padding)
        matches += burst_sequence(out) == ref and real == len(base)
    ok = matches == 100
    verdict(6, ok, f"{matches}/100 defended burst sequences equal their reference")
    assert ok


def test_ac07_surakav_thresholds(verdict):
    mismatches = 0
    for delta in (0.4, 0.6):
        tenths = int(Fraction(str(delta)) * 10)
        for b in range(1, 1001):
            oracle = ((10 - tenths) * b // 10, (10 + tenths) * b // 10)
            mismatches += burst_thresholds(b, delta) != oracle
    ok = mismatches == 0
    verdict(7, ok, f"{mismatches} mismatches over b in [1, 1000], delta in {{0.4, 0.6}}")
    assert ok


def _pearson_direct(x, y):
    n = len(x)
    mx, my = math.fsum(x) / n, math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def _lcs_dp(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            table[i + 1][j + 1] = table[i][j] + 1 if x == y else max(table[i][j + 1], table[i + 1][j])
    return table[-1][-1]


def test_ac08_metric_oracles(verdict):
    rng = random.Random(8)
    worst = 0.0
    for _ in range(1000):
        n = rng.randint(2, 400)
        x = [512 * rng.randint(0, 30) for _ in range(n)]
        y = [512 * rng.randint(0, 30) for _ in range(n)]
        worst = max(worst, abs(pearson(x, y) - _pearson_direct(x, y)))
    lcss_bad = 0
    for _ in range(500):
        a = [rng.randint(0, 3) for _ in range(rng.randint(1, 12))]
        b = [rng.randint(0, 3) for _ in range(rng.randint(1, 12))]
        lcss_bad += lcss(a, b) != _lcs_dp(a, b) / min(len(a), len(b))
    ok = worst <= 1e-12 and lcss_bad == 0
    verdict(8, ok, f"max Pearson deviation {worst:.2e} (<= 1e-12), {lcss_bad}/500 LCSS mismatches")
    assert ok


def test_ac09_zero_latency(verdict):
    machine = gen_pipelined_front(FrontParams(3000, 1.0, 14.0, 30), 30, 30)
    rng = random.Random(9)
    nonzero = 0
    for k in range(1000):
        base = web_trace(rng, rng.randint(20, 300), trace_id=f"z{k}")
        out = simulate(base, SimConfig([machine], [machine], seed=k, tail=0))
        nonzero += latency_overhead(strip_trailing_padding(out), base) != 0.0
    ok = nonzero == 0
    verdict(9, ok, f"{1000 - nonzero}/1000 pipelined FRONT traces with exactly 0% latency overhead")
    assert ok


def test_ac10_overhead_asymmetry(verdict):
    machine = gen_maybenot_front(FrontParams(1500, 1.0, 14.0, 30))
    rng = random.Random(10)
    pad = {Direction.OUT: 0, Direction.IN: 0}
    real = {Direction.OUT: 0, Direction.IN: 0}
    for k in range(150):
        base = web_trace(rng, rng.randint(800, 2400), down_share=15 / 16, trace_id=f"w{k}")
        out = strip_trailing_padding(simulate(base, SimConfig([machine], [machine], seed=k)))
        for e in out:
            (pad if e.is_padding else real)[e.direction] += 1
    send = 100 * pad[Direction.OUT] / real[Direction.OUT]
    recv = 100 * pad[Direction.IN] / real[Direction.IN]
    ratio = real[Direction.IN] / real[Direction.OUT]
    ok = send > 5 * recv
    verdict(10, ok, f"download:upload {ratio:.1f}:1, send {send:.1f}% vs receive {recv:.1f}% "
                    f"({send / recv:.1f}x > 5x)")
    assert ok


def test_ac11_end_to_end_determinism(verdict, tmp_path):
    start = time.perf_counter()
    base = tmp_path / "base"
    base.mkdir()
    rng = random.Random(11)
    for k in range(1000):
        save_trace(web_trace(rng, rng.randint(50, 400), trace_id=f"s{k:04d}"),
                   base / f"s{k:04d}.txt", defended=False)
    codes = []
    for run in ("a", "b"):
        codes.append(main(["defend", str(base), str(tmp_path / run), "--preset", "ft1-maybenot",
                           "--seed", "42"]))
    codes.append(main(["defend", str(base), str(tmp_path / "c"), "--preset", "ft1-maybenot",
                       "--seed", "43"]))
    codes.append(main(["evaluate", str(tmp_path / "a"), str(tmp_path / "c"), "--base", str(base),
                       "--out", str(tmp_path / "report")]))
    elapsed = time.perf_counter() - start
    a = {p.name: p.read_bytes() for p in (tmp_path / "a").iterdir()}
    b = {p.name: p.read_bytes() for p in (tmp_path / "b").iterdir()}
    identical = len(a) == 1000 and a == b
    ok = identical and codes == [0, 0, 0, 0] and elapsed < 300
    verdict(11, ok, f"byte-identical reruns: {identical}, exit codes {codes}, pipeline on 1000 "
                    f"traces {elapsed:.1f} s (< 300 s)")
    assert ok
