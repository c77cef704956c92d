"""Command-line driver for building models, sampling, decoding, and fitting.

Every command validates its configuration up front, writes its outputs
atomically (temp file, then rename), and records a line-oriented
``key=value`` manifest next to its primary output.  A manifest contains
everything needed to repeat the run: re-running a command from its
manifest reproduces the output files byte for byte, except for measured
timing columns in benchmark tables.

All randomness flows from ``--seed``; per-point streams inside sweeps are
derived from it by hashing the point coordinates, so reordering a sweep
list never changes any individual point.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import subprocess
import sys

import numpy as np

from .dem import build_memory_dem, dem_from_text, dem_to_text
from .engine import (basis_event_columns, decode_global, decode_parallel,
                     seam_scan, window_contexts)
from .graph import decompose_to_graph, graph_to_csv
from .mwpm import MatchContext
from .sampler import (build_sampler, read_events, read_labels,
                      read_predictions, sample_events, truncated_labels,
                      write_events, write_grouped_dataset, write_labels,
                      write_truncated_labels, write_window_dataset)
from .stats import fit_epsilon
from .windows import plan_windows

FORMAT_VERSION = "1"
_BLOCK = 20000


# ---------------------------------------------------------------------------
# Manifest and file plumbing.

def _git_describe() -> str:
    try:
        out = subprocess.run(
            ['git', 'describe', '--always', '--dirty'],
            capture_output=True, text=True, timeout=10,
            cwd=os.path.dirname(os.path.abspath(__file__)))
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return 'unknown'


def _atomic_bytes(path: str, data: bytes) -> None:
    tmp = path + '.tmp'
    with open(tmp, 'wb') as fh:
        fh.write(data)
    os.replace(tmp, path)


def _atomic_call(path: str, writer) -> None:
    """Run ``writer(tmp_path)`` and rename the result into place."""
    tmp = path + '.tmp'
    writer(tmp)
    os.replace(tmp, path)


def _write_manifest(command: str, args, outputs: dict) -> str:
    """Record the full configuration next to the primary output."""
    primary = next(iter(outputs.values()))
    lines = [f"command={command}",
             f"format_version={FORMAT_VERSION}",
             f"git={_git_describe()}"]
    for dest, value in sorted(vars(args).items()):
        if dest in ('func', 'command') or value is None:
            continue
        lines.append(f"arg.{dest}={value}")
    for dest, path in outputs.items():
        lines.append(f"output.{dest}={path}")
    path = primary + '.manifest'
    _atomic_bytes(path, ("\n".join(lines) + "\n").encode())
    return path


def _read_manifest(path: str) -> dict:
    fields = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                k, v = line.split("=", 1)
                fields[k] = v
    return fields


def _point_seed(seed: int, *parts) -> int:
    """Stable per-point stream seed derived from the run seed."""
    text = ":".join([str(seed)] + [str(p) for p in parts])
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, 'little') & (2 ** 63 - 1)


def _int_list(text: str):
    return [int(tok) for tok in text.split(',') if tok]


def _float_list(text: str):
    return [float(tok) for tok in text.split(',') if tok]


def _csv_bytes(header, rows) -> bytes:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row))
    return ("\n".join(lines) + "\n").encode()


# ---------------------------------------------------------------------------
# Shared measurement loops.

def _ler_point(dem, graph, plan, shots, seed, workers, mode,
               want_seams=False):
    """Sampled failure counts for one configuration, decoded in blocks.

    Returns (failures, global_failures or None, nonempty seam audits,
    seam opportunities).
    """
    arrays = build_sampler(dem, graph)
    cols = basis_event_columns(dem, dem.basis)
    ctxs = window_contexts(graph, plan) if mode != 'global' else None
    gctx = MatchContext(graph) if mode in ('global', 'both') else None
    fails = 0
    gfails = 0
    seam_hits = 0
    seam_total = 0
    for lo in range(0, shots, _BLOCK):
        n = min(_BLOCK, shots - lo)
        batch = sample_events(dem, graph, plan, n, seed, shot0=lo,
                              arrays=arrays)
        ev = np.ascontiguousarray(batch.events[:, cols])
        if mode in ('parallel', 'both'):
            res = decode_parallel(graph, plan, ev, workers=workers,
                                  ctxs=ctxs)
            fails += int(np.count_nonzero(res.parity ^ batch.y_global))
        if mode in ('global', 'both'):
            par = decode_global(graph, ev, gctx)
            gfails += int(np.count_nonzero(par ^ batch.y_global))
            if mode == 'global':
                fails = gfails
        if want_seams and plan.m > 1:
            counts = seam_scan(graph, plan, ev, ctxs)
            seam_hits += int(np.count_nonzero(counts))
            seam_total += counts.size
    return fails, (gfails if mode == 'both' else None), seam_hits, seam_total


def _build_pair(d, rounds, p, basis):
    dem = build_memory_dem(d, rounds, p, basis)
    graph = decompose_to_graph(dem, basis)
    return dem, graph


# ---------------------------------------------------------------------------
# Commands.

def cmd_build_dem(args) -> int:
    dem = build_memory_dem(args.distance, args.rounds, args.p, args.basis)
    _atomic_bytes(args.output, dem_to_text(dem).encode())
    outputs = {'output': args.output}
    if args.graph_csv:
        graph = decompose_to_graph(dem, args.basis)
        _atomic_bytes(args.graph_csv, graph_to_csv(graph).encode())
        outputs['graph_csv'] = args.graph_csv
    _write_manifest('build-dem', args, outputs)
    return 0


def cmd_sample(args) -> int:
    if args.dem:
        dem = dem_from_text(open(args.dem).read())
    else:
        dem = build_memory_dem(args.distance, args.rounds, args.p, args.basis)
    graph = decompose_to_graph(dem, dem.basis)
    plan = plan_windows(dem.rounds, args.buffer or dem.distance,
                        args.core or dem.distance)
    batch = sample_events(dem, graph, plan, args.shots, args.seed)
    _atomic_call(args.events, lambda t: write_events(t, batch, dem))
    _atomic_call(args.labels, lambda t: write_labels(t, batch, plan))
    _write_manifest('sample', args,
                    {'events': args.events, 'labels': args.labels})
    return 0


def cmd_decode(args) -> int:
    events, meta = read_events(args.events)
    yglob, _ywin, _lmeta = read_labels(args.labels)
    if yglob.shape[0] != events.shape[0]:
        raise ValueError("labels and events disagree on the shot count")
    d = int(meta['d'])
    rounds = int(meta['rounds'])
    p = float(meta['p'])
    dem, graph = _build_pair(d, rounds, p, meta['basis'])
    b = args.buffer or d
    c = args.core or d
    plan = plan_windows(rounds, b, c)
    cols = basis_event_columns(dem, dem.basis)
    ev = np.ascontiguousarray(events[:, cols])
    if args.predictions:
        probs = read_predictions(args.predictions)
        res = decode_parallel(graph, plan, ev, window_probs=probs)
        parity = res.parity
    elif args.mode == 'global':
        parity = decode_global(graph, ev)
    else:
        res = decode_parallel(graph, plan, ev, workers=args.workers)
        parity = res.parity
    failures = int(np.count_nonzero(parity ^ yglob))
    shots = events.shape[0]
    _atomic_bytes(args.output, _csv_bytes(
        ('d', 'p', 'N', 'shots', 'failures'),
        [(d, p, rounds, shots, failures)]))
    outputs = {'output': args.output}
    if args.seam_audit:
        if args.mode == 'global' and not args.predictions:
            raise ValueError("seam audits need parallel windows")
        counts = seam_scan(graph, plan, ev)
        rate = (float(np.count_nonzero(counts)) / counts.size
                if counts.size else 0.0)
        _atomic_bytes(args.seam_audit,
                      _csv_bytes(('b', 'rate'), [(b, rate)]))
        outputs['seam_audit'] = args.seam_audit
    _write_manifest('decode', args, outputs)
    return 0


def cmd_sweep(args) -> int:
    rows = []
    seam_rows = []
    if args.axis == 'p':
        plist = _float_list(args.p_list)
        for d in _int_list(args.distance_list):
            rounds = d if args.rounds == 'd' else int(args.rounds)
            for p in plist:
                dem, graph = _build_pair(d, rounds, p, args.basis)
                plan = plan_windows(rounds, d, d)
                seed = _point_seed(args.seed, 'p', d, rounds, repr(p))
                fails, _, _, _ = _ler_point(dem, graph, plan, args.shots,
                                            seed, args.workers, 'global')
                rows.append((d, p, rounds, args.shots, fails))
    elif args.axis == 'N':
        d = args.distance
        b = args.buffer or d
        c = args.core or d
        for rounds in _int_list(args.rounds_list):
            dem, graph = _build_pair(d, rounds, args.p, args.basis)
            plan = plan_windows(rounds, b, c)
            seed = _point_seed(args.seed, 'N', d, rounds, repr(args.p))
            fails, _, _, _ = _ler_point(dem, graph, plan, args.shots, seed,
                                        args.workers, 'parallel')
            rows.append((d, args.p, rounds, args.shots, fails))
    else:
        d = args.distance
        rounds = int(args.rounds)
        c = args.core or d
        dem, graph = _build_pair(d, rounds, args.p, args.basis)
        for b in _int_list(args.buffer_list):
            plan = plan_windows(rounds, b, c)
            seed = _point_seed(args.seed, 'b', d, rounds, repr(args.p))
            fails, gfails, hits, total = _ler_point(
                dem, graph, plan, args.shots, seed, args.workers, 'both',
                want_seams=True)
            rate = float(hits) / total if total else 0.0
            rows.append((d, args.p, rounds, b, args.shots, fails, gfails,
                         rate))
            seam_rows.append((b, rate))
    if args.axis == 'b':
        header = ('d', 'p', 'N', 'b', 'shots', 'failures',
                  'global_failures', 'seam_rate')
    else:
        header = ('d', 'p', 'N', 'shots', 'failures')
    _atomic_bytes(args.output, _csv_bytes(header, rows))
    outputs = {'output': args.output}
    if args.seam_output:
        if args.axis != 'b':
            raise ValueError("seam tables only come from the buffer axis")
        _atomic_bytes(args.seam_output, _csv_bytes(('b', 'rate'), seam_rows))
        outputs['seam_output'] = args.seam_output
    _write_manifest('sweep', args, outputs)
    return 0


def cmd_bench(args) -> int:
    from .engine import benchmark_throughput
    d = args.distance
    b = args.buffer or d
    c = args.core or d
    rows = []
    for nrounds in _int_list(args.rounds_list):
        detail = benchmark_throughput(d, [nrounds], args.p, b, c,
                                      shots=args.shots, seed=args.seed,
                                      reps=args.reps)[0]
        dem, graph = _build_pair(d, nrounds, args.p, args.basis)
        plan = plan_windows(nrounds, b, c)
        ctxs = window_contexts(graph, plan)
        cols = basis_event_columns(dem, dem.basis)
        ev = sample_events(dem, graph, plan, args.shots,
                           args.seed).events[:, cols]
        ev = np.ascontiguousarray(ev)
        for workers in _int_list(args.workers_list):
            decode_parallel(graph, plan, ev[:4], workers=workers, ctxs=ctxs)
            wall = min(_timed_parallel(graph, plan, ev, workers, ctxs)
                       for _ in range(args.reps))
            s_per_round = detail['makespan_seconds'] / (args.shots * c)
            rows.append((workers, plan.m, s_per_round, nrounds,
                         wall, detail['total_seconds'],
                         detail['makespan_seconds']))
    _atomic_bytes(args.output, _csv_bytes(
        ('workers', 'windows', 's_per_round', 'rounds', 'wall_seconds',
         'total_window_seconds', 'makespan_seconds'), rows))
    _write_manifest('bench', args, {'output': args.output})
    return 0


def _timed_parallel(graph, plan, ev, workers, ctxs):
    import time
    t0 = time.perf_counter()
    decode_parallel(graph, plan, ev, workers=workers, ctxs=ctxs)
    return time.perf_counter() - t0


def cmd_fit(args) -> int:
    points = []
    with open(args.points) as fh:
        header = fh.readline().strip().split(',')
        idx = {name: k for k, name in enumerate(header)}
        for line in fh:
            vals = line.strip().split(',')
            if not vals or vals == ['']:
                continue
            rounds = int(vals[idx['N']])
            shots = int(vals[idx['shots']]) if 'shots' in idx else 0
            if 'p_L' in idx:
                p_l = float(vals[idx['p_L']])
            else:
                p_l = int(vals[idx['failures']]) / shots
            points.append((rounds, p_l, shots))
    fit = fit_epsilon(points)
    _atomic_bytes(args.output, _csv_bytes(
        ('epsilon', 'C', 'residual', 'points', 'dropped'),
        [(fit.epsilon, fit.constant, fit.residual, len(fit.rounds),
          fit.dropped)]))
    _write_manifest('fit', args, {'output': args.output})
    return 0


def cmd_export_dataset(args) -> int:
    d = args.distance
    b = args.buffer or d
    c = args.core or d
    files = []
    for mult in _int_list(args.rounds_multiples):
        rounds = mult * d
        dem, graph = _build_pair(d, rounds, args.p, args.basis)
        plan = plan_windows(rounds, b, c)
        seed = _point_seed(args.seed, 'export', d, rounds)
        batch = sample_events(dem, graph, plan, args.shots, seed)
        prefix = f"{args.output_prefix}-N{rounds}"
        shards = {'initial': [0], 'final': [plan.m - 1],
                  'bulk': list(range(1, plan.m - 1))}
        for kind, wins in shards.items():
            if not wins:
                continue
            path = f"{prefix}-{kind}.wdt"
            _atomic_call(path, lambda t, w=wins: write_window_dataset(
                t, dem, plan, batch.events, batch.y_window, w))
            files.append(path)
        gpath = f"{prefix}-grouped.wdg"
        _atomic_call(gpath, lambda t: write_grouped_dataset(
            t, dem, plan, batch.events, batch.y_global))
        files.append(gpath)
        lpath = f"{prefix}-labels.wdl"
        _atomic_call(lpath, lambda t: write_labels(t, batch, plan))
        files.append(lpath)
        if args.truncated_labels:
            ytr = truncated_labels(dem, graph, plan, args.shots, seed)
            tpath = f"{prefix}-tlabels.wdtl"
            _atomic_call(tpath, lambda t: write_truncated_labels(
                t, plan, ytr, seed))
            files.append(tpath)
    _write_manifest('export-dataset', args,
                    {'output_prefix': args.output_prefix})
    # Informational list of produced shards, appended to the manifest.
    with open(args.output_prefix + '.manifest', 'a') as fh:
        fh.write(f"files={';'.join(files)}\n")
    return 0


def cmd_rerun(args) -> int:
    fields = _read_manifest(args.manifest)
    command = fields['command']
    outputs = {k[len('output.'):]: v for k, v in fields.items()
               if k.startswith('output.')}
    argv = [command]
    for key, value in fields.items():
        if not key.startswith('arg.'):
            continue
        dest = key[len('arg.'):]
        if dest in outputs:
            value = value + args.suffix
        argv.append(f"--{dest.replace('_', '-')}={value}")
    return main(argv)


# ---------------------------------------------------------------------------
# Parser.

def _add_code_flags(sp, rounds=True):
    sp.add_argument('--distance', type=int, default=3)
    if rounds:
        sp.add_argument('--rounds', type=int, default=3)
    sp.add_argument('--p', type=float, default=0.003)
    sp.add_argument('--basis', choices=('Z', 'X'), default='Z')


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog='windec',
        description='Window-parallel matching decoder for surface-code '
                    'memory experiments.')
    sub = ap.add_subparsers(dest='command', required=True)

    sp = sub.add_parser('build-dem', help='write a detector error model')
    _add_code_flags(sp)
    sp.add_argument('--output', required=True)
    sp.add_argument('--graph-csv', help='also export the decoding graph')
    sp.set_defaults(func=cmd_build_dem)

    sp = sub.add_parser('sample', help='sample shots into events + labels')
    _add_code_flags(sp)
    sp.add_argument('--dem', help='read the model from a file instead')
    sp.add_argument('--shots', type=int, default=10000)
    sp.add_argument('--seed', type=int, default=0)
    sp.add_argument('--buffer', type=int)
    sp.add_argument('--core', type=int)
    sp.add_argument('--events', required=True)
    sp.add_argument('--labels', required=True)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser('decode', help='decode an events file and score it')
    sp.add_argument('--events', required=True)
    sp.add_argument('--labels', required=True)
    sp.add_argument('--mode', choices=('global', 'parallel'),
                    default='parallel')
    sp.add_argument('--buffer', type=int)
    sp.add_argument('--core', type=int)
    sp.add_argument('--workers', type=int, default=os.cpu_count())
    sp.add_argument('--predictions',
                    help='per-window probabilities replacing the matcher')
    sp.add_argument('--seam-audit', help='also write a seam-rate table')
    sp.add_argument('--output', required=True)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser('sweep', help='failure counts along one axis')
    sp.add_argument('--axis', choices=('p', 'N', 'b'), required=True)
    sp.add_argument('--distance', type=int, default=3)
    sp.add_argument('--distance-list', default='3,5')
    sp.add_argument('--p', type=float, default=0.003)
    sp.add_argument('--p-list', default='0.002,0.003,0.004,0.005,0.006,'
                                        '0.007,0.008,0.009')
    sp.add_argument('--rounds', default='d')
    sp.add_argument('--rounds-list', default='')
    sp.add_argument('--buffer', type=int)
    sp.add_argument('--buffer-list', default='')
    sp.add_argument('--core', type=int)
    sp.add_argument('--basis', choices=('Z', 'X'), default='Z')
    sp.add_argument('--shots', type=int, default=100000)
    sp.add_argument('--seed', type=int, default=0)
    sp.add_argument('--workers', type=int, default=os.cpu_count())
    sp.add_argument('--seam-output')
    sp.add_argument('--output', required=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser('bench', help='time window decoding by length')
    _add_code_flags(sp, rounds=False)
    sp.add_argument('--rounds-list', default='20,40,80')
    sp.add_argument('--buffer', type=int)
    sp.add_argument('--core', type=int)
    sp.add_argument('--shots', type=int, default=512)
    sp.add_argument('--seed', type=int, default=7)
    sp.add_argument('--reps', type=int, default=3)
    sp.add_argument('--workers-list', default='1')
    sp.add_argument('--output', required=True)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser('fit', help='per-round error rate from a points CSV')
    sp.add_argument('--points', required=True)
    sp.add_argument('--output', required=True)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser('export-dataset',
                        help='training shards over mixed window counts')
    _add_code_flags(sp, rounds=False)
    sp.add_argument('--rounds-multiples', default='3,4,5',
                    help='memory lengths as multiples of the distance')
    sp.add_argument('--shots', type=int, default=4000)
    sp.add_argument('--seed', type=int, default=0)
    sp.add_argument('--buffer', type=int)
    sp.add_argument('--core', type=int)
    sp.add_argument('--truncated-labels', type=int, default=0,
                    choices=(0, 1),
                    help='also write per-truncation truth bits (.wdtl)')
    sp.add_argument('--output-prefix', required=True)
    sp.set_defaults(func=cmd_export_dataset)

    sp = sub.add_parser('rerun', help='repeat a command from its manifest')
    sp.add_argument('--manifest', required=True)
    sp.add_argument('--suffix', default='.rerun')
    sp.set_defaults(func=cmd_rerun)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        reason = str(exc).replace("\n", " ")
        print(f"error: command={args.command} reason={reason!r}",
              file=sys.stderr)
        return 2


if __name__ == '__main__':
    sys.exit(main())
