"""Command line entry point: generate machines, defend datasets, evaluate.

    padshield generate front --preset ft1-maybenot --out machines/
    padshield defend traces/ defended/ --preset ft1-maybenot --seed 7
    padshield evaluate defended/ other/ --base traces/ --windows 25,50 --out report/

Exit codes: 0 on full success, 1 if any trace or row failed, 2 on invalid
parameters or an empty dataset. ``PADSHIELD_LOG`` sets the log level.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import random
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import metrics
from .defenses.front import FrontParams, front_reference, gen_maybenot_front, gen_pipelined_front
from .defenses.regulator import (RegulatorParams, gen_regulator_client, gen_regulator_relay,
                                 regulator_reference)
from .defenses.surakav import (BurstSequence, SurakavParams, gen_surakav_machines, load_bursts,
                               surakav_reference)
from .machine import Machine, MachineError
from .mbn import deserialize, serialize
from .simulator import SimConfig, simulate
from .trace_io import Trace, list_dataset, load_trace, save_trace, strip_trailing_padding

logger = logging.getLogger("padshield")

DEFENSES = ("front", "regulator", "surakav")
EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Invalid parameters or inputs; reported with exit code 2."""


# -- presets -----------------------------------------------------------------

@dataclass
class RunConfig:
    defense: str
    variant: str                          # maybenot | pipelined | reference
    params: dict = field(default_factory=dict)
    seed: int = 0
    delay_us: int = 10_000
    tail_us: Optional[int] = None


def preset_names() -> list[str]:
    folder = resources.files(__package__) / "presets"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = Path(name)
    if not path.suffix == ".json":
        path = resources.files(__package__) / "presets" / f"{name}.json"
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"unknown preset {name!r}; available: {', '.join(preset_names())}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"preset {name!r} is not valid JSON: {exc}") from None
    for key in ("defense", "variant", "params"):
        if key not in data:
            raise UsageError(f"preset {name!r} lacks {key!r}")
    return data


# short names accepted by --set, mapped to parameter fields
ALIASES = {"N": "n_max", "psi": "states", "ψ": "states", "W_min": "w_min", "W_max": "w_max",
           "R": "rate", "D": "decay", "T": "threshold", "U": "upload_ratio", "C": "max_wait",
           "omega": "cells_per_state", "ω": "cells_per_state", "δ": "delta"}


def parse_overrides(items: Sequence[str]) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        try:
            number = float(value)
        except ValueError:
            raise UsageError(f"--set {key}: {value!r} is not a number") from None
        out[ALIASES.get(key, key)] = int(number) if number.is_integer() and "." not in value \
            else number
    return out


def build_config(args) -> RunConfig:
    if args.preset:
        data = load_preset(args.preset)
    elif getattr(args, "defense", None):
        data = {"defense": args.defense, "variant": "maybenot", "params": {}}
    else:
        raise UsageError("a --preset is required")
    cfg = RunConfig(data["defense"], data["variant"], dict(data["params"]),
                    seed=args.seed, delay_us=args.delay_us)
    cfg.params.update(parse_overrides(args.set or ()))
    if getattr(args, "defense", None) and args.defense != cfg.defense:
        raise UsageError(f"preset {args.preset!r} is for {cfg.defense}, not {args.defense}")
    reference = getattr(args, "reference", None)
    if reference:
        if reference != cfg.defense:
            raise UsageError(f"--reference {reference} does not match the {cfg.defense} preset")
        cfg.variant = "reference"
    if cfg.defense not in DEFENSES:
        raise UsageError(f"unknown defense {cfg.defense!r}")
    return cfg


def _construct(cls, params: dict, drop: Sequence[str] = ()):
    kwargs = {k: v for k, v in params.items() if k not in drop}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise UsageError(f"{cls.__name__}: {exc}") from None
    except (MachineError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def front_params(cfg: RunConfig) -> FrontParams:
    return _construct(FrontParams, cfg.params, drop=("pipelines",))


def regulator_params(cfg: RunConfig) -> RegulatorParams:
    return _construct(RegulatorParams, cfg.params)


def surakav_params(cfg: RunConfig) -> SurakavParams:
    params = dict(cfg.params)
    params.setdefault("one_way_delay", cfg.delay_us / 1e6)
    return _construct(SurakavParams, params, drop=("scale",))


# -- machines ------------------------------------------------------------------

def machines_for(cfg: RunConfig) -> tuple[list[Machine], list[Machine]]:
    """(client, relay) machine lists for FRONT and RegulaTor configurations."""
    try:
        if cfg.defense == "front":
            p = front_params(cfg)
            if cfg.variant == "pipelined":
                pipelines = int(cfg.params.get("pipelines", 2))
                machine = gen_pipelined_front(p, pipelines, p.states)
            else:
                machine = gen_maybenot_front(p)
            return [machine], [machine]
        if cfg.defense == "regulator":
            p = regulator_params(cfg)
            return [gen_regulator_client(p)], [gen_regulator_relay(p)]
    except MachineError as exc:
        raise UsageError(str(exc)) from None
    raise UsageError(f"{cfg.defense} machines are generated per reference trace")


def load_references(directory, scale: int) -> list[tuple[str, BurstSequence]]:
    paths = list_dataset(directory) if directory else []
    if not paths:
        raise UsageError(f"no reference burst files in {directory!r}")
    refs = []
    for path in paths:
        try:
            refs.append((path.stem, load_bursts(path).scaled(max(1, int(scale)))))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return refs


def cmd_generate(args) -> int:
    cfg = build_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if cfg.defense == "surakav":
        surakav_params(cfg)
        max_bursts = int(cfg.params.get("max_bursts", 8000))
        for ref_id, ref in load_references(args.bursts, cfg.params.get("scale", 1)):
            client, relay = gen_surakav_machines(ref, max_bursts)
            written += _write_machine(out / f"{ref_id}.client.mbn", client)
            written += _write_machine(out / f"{ref_id}.relay.mbn", relay)
    elif cfg.defense == "front":
        client, _ = machines_for(cfg)
        written += _write_machine(out / "front.mbn", client[0])
    else:
        client, relay = machines_for(cfg)
        written += _write_machine(out / "client.mbn", client[0])
        written += _write_machine(out / "relay.mbn", relay[0])
    for path in written:
        print(path)
    return EXIT_OK


def _write_machine(path: Path, machine: Machine) -> list[Path]:
    path.write_text(serialize(machine), encoding="utf-8")
    logger.info("wrote %s (%d states)", path, len(machine))
    return [path]


def _read_machines(paths: Sequence[str]) -> list[Machine]:
    machines = []
    for path in paths:
        try:
            machines.append(deserialize(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError) as exc:
            raise UsageError(f"{path}: {exc}") from None
    return machines


# -- defend ----------------------------------------------------------------------

def trace_seed(seed: int, trace_id: str) -> int:
    """Per-trace seed; independent of dataset order and worker count."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, zlib.crc32(trace_id.encode("utf-8"))])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class DefendJob:
    cfg: RunConfig
    client: list = field(default_factory=list)
    relay: list = field(default_factory=list)
    references: list = field(default_factory=list)


def defend_trace(job: DefendJob, base: Trace) -> Trace:
    cfg = job.cfg
    seed = trace_seed(cfg.seed, base.id)
    rng = random.Random(seed)
    if cfg.defense == "surakav":
        ref_id, ref = job.references[rng.randrange(len(job.references))]
        logger.debug("%s: reference %s", base.id, ref_id)
        if cfg.variant == "reference":
            return surakav_reference(base, ref, surakav_params(cfg), rng)
        client, relay = gen_surakav_machines(ref, int(cfg.params.get("max_bursts", 8000)))
        return simulate(base, SimConfig([client], [relay], cfg.delay_us, seed, tail=cfg.tail_us))
    if cfg.variant == "reference":
        if cfg.defense == "front":
            p = front_params(cfg)
            return front_reference(base, p, p, rng)
        return regulator_reference(base, regulator_params(cfg), rng)
    return simulate(base, SimConfig(job.client, job.relay, cfg.delay_us, seed, tail=cfg.tail_us))


def _defend_one(job: DefendJob, src: Path, dst: Path) -> Optional[str]:
    try:
        base = load_trace(src)
        defended = defend_trace(job, base)
        if job.cfg.variant != "reference":
            defended = strip_trailing_padding(defended)
        save_trace(defended, dst)
        return None
    except Exception as exc:        # one bad trace must not stop the run
        return f"{type(exc).__name__}: {exc}"


def cmd_defend(args) -> int:
    files = list_dataset(args.dataset) if Path(args.dataset).is_dir() else []
    if not files:
        raise UsageError(f"dataset {args.dataset!r} is empty or not a directory")
    cfg = build_config(args)
    cfg.tail_us = args.tail_us
    job = DefendJob(cfg)
    if cfg.defense == "surakav":
        surakav_params(cfg)
        job.references = load_references(args.bursts, cfg.params.get("scale", 1))
    elif cfg.variant == "reference":
        front_params(cfg) if cfg.defense == "front" else regulator_params(cfg)
    elif args.client or args.relay:
        job.client, job.relay = _read_machines(args.client or ()), _read_machines(args.relay or ())
    else:
        job.client, job.relay = machines_for(cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    targets = [out / f.name for f in files]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            errors = list(pool.map(_defend_one, [job] * len(files), files, targets, chunksize=8))
    else:
        errors = [_defend_one(job, f, t) for f, t in zip(files, targets)]
    failed = 0
    for f, err in zip(files, errors):
        if err is not None:
            failed += 1
            logger.error("%s: %s", f.name, err)
    logger.info("defended %d/%d traces into %s", len(files) - failed, len(files), out)
    return EXIT_FAILED if failed else EXIT_OK


# -- evaluate --------------------------------------------------------------------

SUMMARY_FIELDS = ("n", "mean", "lower_whisker", "lower_quartile", "median",
                  "upper_quartile", "upper_whisker")


def _load_set(directory) -> dict[str, Trace]:
    files = list_dataset(directory) if Path(directory).is_dir() else []
    if not files:
        raise UsageError(f"dataset {directory!r} is empty or not a directory")
    return {f.stem: load_trace(f) for f in files}


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def pair_rows(a: Trace, b: Trace, windows: Sequence[float]) -> list[dict]:
    rows = []
    for window in windows:
        sa, sb = metrics.aggregate(a, window), metrics.aggregate(b, window)
        for direction in ("upload", "download"):
            xa, xb = sa.series(direction), sb.series(direction)
            try:
                corr = metrics.pearson(xa, xb)
            except metrics.UndefinedMetric:
                corr = None
            rows.append({"id": a.id, "direction": direction, "window_ms": window,
                         "correlation": corr, "lcss": metrics.lcss(xa, xb)})
    return rows


def parse_windows(text: str) -> list[float]:
    try:
        windows = [float(w) for w in text.split(",") if w.strip()]
    except ValueError:
        raise UsageError(f"--windows expects comma-separated ms values, got {text!r}") from None
    if not windows or any(w <= 0 for w in windows):
        raise UsageError("--windows values must be > 0 ms")
    return windows


def _pair_job(a: Trace, b: Trace, windows: Sequence[float]):
    try:
        return pair_rows(a, b, windows), None
    except Exception as exc:
        return [], f"{type(exc).__name__}: {exc}"


def cmd_evaluate(args) -> int:
    windows = parse_windows(args.windows)
    set_a, set_b = _load_set(args.set_a), _load_set(args.set_b)
    base = _load_set(args.base) if args.base else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    matched = []
    for trace_id in set_a:
        if trace_id in set_b:
            matched.append(trace_id)
        else:
            logger.warning("%s: no matching trace in %s; skipped", trace_id, args.set_b)
    a_list = [set_a[i] for i in matched]
    b_list = [set_b[i] for i in matched]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            results = list(pool.map(_pair_job, a_list, b_list, [windows] * len(matched),
                                    chunksize=16))
    else:
        results = [_pair_job(a, b, windows) for a, b in zip(a_list, b_list)]
    failed = 0
    pairs = []
    for trace_id, (rows, err) in zip(matched, results):
        if err is not None:
            failed += 1
            logger.error("%s: %s", trace_id, err)
        pairs += rows
    for trace_id in set_b.keys() - set_a.keys():
        logger.warning("%s: no matching trace in %s; skipped", trace_id, args.set_a)

    with open(out / "pairs.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "direction", "window_ms", "correlation", "lcss"])
        for r in pairs:
            writer.writerow([r["id"], r["direction"], r["window_ms"], _fmt(r["correlation"]),
                             _fmt(r["lcss"])])

    summary = []
    for window in windows:
        for direction in ("upload", "download"):
            sel = [r for r in pairs if r["window_ms"] == window and r["direction"] == direction]
            for metric in ("correlation", "lcss"):
                stats = metrics.box_stats([r[metric] for r in sel])
                summary.append([metric, direction, window] + [_fmt(stats[k]) for k in SUMMARY_FIELDS])

    if base is not None:
        overheads = []
        for trace_id, a in set_a.items():
            if trace_id not in base:
                logger.warning("%s: no base trace; overhead skipped", trace_id)
                continue
            try:
                overheads.append((trace_id, metrics.overhead(a, base[trace_id])))
            except Exception as exc:
                failed += 1
                logger.error("%s: overhead: %s", trace_id, exc)
        with open(out / "overhead.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "send_bw", "recv_bw", "overall_bw", "latency"])
            for trace_id, rep in overheads:
                writer.writerow([trace_id, _fmt(rep.send_bw), _fmt(rep.recv_bw),
                                 _fmt(rep.overall_bw), _fmt(rep.latency)])
        for name in ("send_bw", "recv_bw", "overall_bw", "latency"):
            stats = metrics.box_stats([getattr(rep, name) for _, rep in overheads])
            summary.append(["overhead_" + name, "", ""] + [_fmt(stats[k]) for k in SUMMARY_FIELDS])

    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "direction", "window_ms", *SUMMARY_FIELDS])
        writer.writerows(summary)
    logger.info("%d pair rows written to %s", len(pairs), out)
    return EXIT_FAILED if failed else EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="padshield", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--preset", help="preset name or path to a preset JSON file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a preset parameter (e.g. psi=30, N=1500, delta=0.4)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--delay-us", type=int, default=10_000, help="one-way delay in µs")
        p.add_argument("--bursts", help="directory of reference burst files (surakav)")

    g = sub.add_parser("generate", help="write machines in MBN1 text form")
    g.add_argument("defense", choices=DEFENSES)
    common(g)
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("defend", help="defend every trace of a dataset directory")
    d.add_argument("dataset")
    d.add_argument("out")
    common(d)
    d.add_argument("--reference", choices=DEFENSES,
                   help="apply the original algorithm instead of simulating machines")
    d.add_argument("--client", nargs="*", help="MBN1 machine files for the client")
    d.add_argument("--relay", nargs="*", help="MBN1 machine files for the relay")
    d.add_argument("--workers", type=int, default=1)
    d.add_argument("--tail-us", type=int, default=None,
                   help="stop simulating this long after the last real cell")
    d.set_defaults(func=cmd_defend)

    e = sub.add_parser("evaluate", help="compare two defended datasets")
    e.add_argument("set_a")
    e.add_argument("set_b")
    e.add_argument("--base", help="undefended dataset for overhead")
    e.add_argument("--windows", default="25,50", help="window sizes in ms")
    e.add_argument("--out", default=".", help="report directory")
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(func=cmd_evaluate)
    return parser


def setup_logging() -> None:
    level = os.environ.get("PADSHIELD_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"padshield: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
