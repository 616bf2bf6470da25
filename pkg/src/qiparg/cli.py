"""Batch driver: ``python -m qiparg <command> [options]``.

Every command writes its results below ``--out-dir`` as sorted-key JSON
(plus state, circuit or Hamiltonian files) and prints a short text table.
Randomness comes from ``--seed``; the ``QIPARG_SEED`` environment variable
overrides it when set.  Work is split into fixed seed-indexed chunks, so
``--jobs`` changes wall time but never the results.

Exit codes: 0 success, 1 the protocol verdict rejected, 2 bad input or
usage, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from qiparg import commit as cm
from qiparg.clock import compile_circuit
from qiparg.errors import ParseError, QipArgError
from qiparg.flatten import accept_operator, flatten, interactive_accept_prob
from qiparg.instances import load_instance
from qiparg.mf import MFSampler, monte_carlo_decide, monte_carlo_vmf, mf_law, vmf_law
from qiparg.pauli import dumps_hamiltonian, loads_hamiltonian
from qiparg.protocol import (
    ProverStrategy,
    SessionConfig,
    good_set_experiment,
    predict,
    run_repeated,
)
from qiparg.sim import RealStateVector, dumps_circuit, dumps_state, loads_state

EXIT_OK, EXIT_REJECT, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3
SEED_ENV = "QIPARG_SEED"
MF_CHUNK = 10_000
PROVERS = ("honest", *sorted(cm.STRATEGIES.keys() - {"honest"}))


class UsageError(Exception):
    pass


# --- helpers ----------------------------------------------------------------------

def resolve_seed(args) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0 if args.seed is None else args.seed


def out_dir(args) -> Path:
    path = Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def table(rows: list[list[str]], header: list[str]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*header), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*row) for row in rows]
    return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# --- commands -------------------------------------------------------------------------

def cmd_compile(args) -> int:
    inst = load_instance(args.instance)
    bundle = compile_circuit(inst.verifier)
    dest = out_dir(args) / "hamiltonian"
    dest.mkdir(exist_ok=True)
    meta = {"data_qubits": bundle.data_qubits, "ancillas": bundle.ancilla_count,
            "clock_qubits": bundle.clock_qubits}
    rows, summary = [], {}
    for name, h in bundle.components().items():
        (dest / f"{name}.ham").write_text(dumps_hamiltonian(h, {"component": name, **meta}))
        summary[name] = {"words": len(h), "one_norm": h.one_norm}
        rows.append([name, str(len(h)), _fmt(h.one_norm)])
    q, T = bundle.ancilla_count, bundle.clock_qubits
    info = {**meta, "term_count": bundle.term_count, "term_count_upper": (q + 1) + 2 * T + 1,
            "one_norm_bound": bundle.one_norm_bound, "components": summary}
    write_json(dest / "compile.json", info)
    print(table(rows, ["component", "words", "one_norm"]), end="")
    print(f"term_count {bundle.term_count}  one_norm_bound {bundle.one_norm_bound:g}")
    return EXIT_OK


def cmd_witness(args) -> int:
    inst = load_instance(args.instance)
    if inst.manifest["witness"] != "brute-force":
        raise UsageError("witness search needs a brute-force instance")
    state, value = inst.witness()
    dest = out_dir(args)
    (dest / "witness.state").write_text(dumps_state(state))
    write_json(dest / "witness.json", {"experiment": "witness", "label": inst.label,
                                       "acceptance": value})
    print(f"acceptance {value:.12g}")
    return EXIT_OK


def cmd_history(args) -> int:
    inst = load_instance(args.instance)
    if args.witness:
        witness = loads_state(Path(args.witness).read_text(), args.witness)
    else:
        witness, _ = inst.witness()
    hist = inst.history(witness)
    bundle = inst.compile()
    energies = {name: h.expectation(hist.amplitudes) for name, h in bundle.components().items()}
    dest = out_dir(args)
    (dest / "history.state").write_text(dumps_state(hist))
    write_json(dest / "history.json", {"experiment": "history-state", "energies": energies,
                                       "num_qubits": hist.num_qubits})
    print(table([[k, _fmt(v)] for k, v in energies.items()], ["component", "energy"]), end="")
    return EXIT_OK


def _mf_chunk(job):
    ham_text, state_text, locality, mode, trials, seed = job
    h, _ = loads_hamiltonian(ham_text)
    state = loads_state(state_text)
    sampler = MFSampler(h, locality)
    run = monte_carlo_vmf if mode == "vmf" else monte_carlo_decide
    return run(sampler, state, trials, seed).accepts


def cmd_mf_run(args) -> int:
    ham_text = Path(args.hamiltonian).read_text()
    state_text = Path(args.state).read_text()
    h, _ = loads_hamiltonian(ham_text, args.hamiltonian)
    state = loads_state(state_text, args.state)
    sampler = MFSampler(h, args.locality)
    predicted = (vmf_law(sampler.hamiltonian, state, args.locality) if args.mode == "vmf"
                 else mf_law(sampler.hamiltonian, state))
    seeds = np.random.SeedSequence(resolve_seed(args)).spawn(math.ceil(args.trials / MF_CHUNK))
    jobs = []
    left = args.trials
    for s in seeds:
        n = min(MF_CHUNK, left)
        left -= n
        jobs.append((ham_text, state_text, args.locality, args.mode, n, s))
    accepts = sum(_map(_mf_chunk, jobs, args.jobs))
    rate = accepts / args.trials
    sigma = math.sqrt(max(predicted * (1 - predicted), 1e-300) / args.trials)
    result = {"experiment": "mf-run", "mode": args.mode, "trials": args.trials,
              "accepts": accepts, "rate": rate, "predicted": predicted, "sigma": sigma,
              "z": (rate - predicted) / sigma}
    write_json(out_dir(args) / "mf_run.json", result)
    print(table([[args.mode, str(args.trials), _fmt(rate), _fmt(predicted), _fmt(result["z"])]],
                ["mode", "trials", "rate", "predicted", "z"]), end="")
    return EXIT_OK


def cmd_flatten(args) -> int:
    inst = load_instance(args.instance)
    if inst.qip is None:
        raise UsageError("flatten needs a QIP instance")
    fv = flatten(inst.qip)
    witness, _ = inst.witness()
    interactive = interactive_accept_prob(inst.qip, witness)
    flat = fv.acceptance(witness)
    eig = None
    if fv.circuit.witness_qubits <= 4:
        eig = float(np.linalg.eigvalsh(accept_operator(fv.circuit))[-1])
    dest = out_dir(args)
    (dest / "flattened.circ").write_text(dumps_circuit(fv.circuit))
    write_json(dest / "flatten.json", {"experiment": "flatten", "interactive": interactive,
                                       "flattened": flat, "eigen_max": eig,
                                       "num_qubits": fv.circuit.num_qubits})
    print(table([[_fmt(interactive), _fmt(flat), _fmt(eig)]],
                ["interactive", "flattened", "eigen_max"]), end="")
    return EXIT_OK


def _strategy(name: str, refuse_prob: float) -> cm.CommitterStrategy:
    if name == "partial-refuse":
        return cm.partially_refusing(refuse_prob)
    if name not in cm.STRATEGIES:
        raise UsageError(f"unknown strategy {name!r}")
    return cm.STRATEGIES[name]()


def cmd_binding(args) -> int:
    seed = np.random.SeedSequence(resolve_seed(args))
    state_seed, run_seed = seed.spawn(2)
    sigma = RealStateVector.random(args.qubits, np.random.default_rng(state_seed))
    basis = tuple(int(ch) for ch in args.basis) if args.basis else (0,) * args.qubits
    if len(basis) != args.qubits or any(b not in (0, 1) for b in basis):
        raise UsageError("--basis must be a 0/1 string with one entry per qubit")
    strategy = _strategy(args.strategy, args.refuse_prob)
    report = cm.binding_experiment(strategy, args.lam, basis, sigma, args.runs,
                                   args.delta_samples, run_seed)
    data = {"experiment": "binding-exp", "basis": "".join(map(str, basis)), **report.as_dict()}
    write_json(out_dir(args) / f"binding_{strategy.name}.json", data)
    print(table([[strategy.name, _fmt(report.delta.delta_hat), _fmt(report.tv),
                  _fmt(report.bound)]], ["strategy", "delta_hat", "tv", "C*sqrt(delta)"]), end="")
    return EXIT_OK


def _protocol_setup(instance_dir, prover_name, lam, max_copies):
    inst = load_instance(instance_dir)
    sampler = inst.sampler()
    witness, _ = inst.witness()
    hist = inst.history(witness)
    config = SessionConfig.for_sampler(lam, inst.c, inst.s, sampler, max_copies)
    if prover_name == "honest":
        prover = ProverStrategy.honest(hist)
    else:
        prover = ProverStrategy.adversary(prover_name, hist)
    return inst, sampler, hist, config, prover


def _protocol_chunk(job):
    instance_dir, prover_name, lam, max_copies, reps, seeds = job
    _, sampler, _, config, prover = _protocol_setup(instance_dir, prover_name, lam, max_copies)
    results = []
    for vs, ps in seeds:
        transcripts, verdict = run_repeated(config, sampler, prover, reps, vs, ps)
        results.append((verdict, [t.dumps() for t in transcripts]))
    return results


def cmd_protocol(args) -> int:
    if args.prover not in PROVERS:
        raise UsageError(f"unknown prover {args.prover!r}; choose from {', '.join(PROVERS)}")
    inst, sampler, hist, config, prover = _protocol_setup(
        args.instance, args.prover, args.lam, args.max_copies)
    root = np.random.SeedSequence(resolve_seed(args))
    run_seq, good_seq = root.spawn(2)
    pairs = [tuple(s.spawn(2)) for s in run_seq.spawn(args.sessions)]
    chunk = max(1, math.ceil(args.sessions / max(args.jobs, 1) / 4))
    jobs = [(args.instance, args.prover, args.lam, args.max_copies, args.reps, pairs[i:i + chunk])
            for i in range(0, len(pairs), chunk)]
    results = [r for part in _map(_protocol_chunk, jobs, args.jobs) for r in part]

    dest = out_dir(args)
    tdir = dest / "transcripts"
    if args.transcripts != "none":
        tdir.mkdir(exist_ok=True)
    accepts = 0
    for i, (verdict, texts) in enumerate(results):
        accepts += verdict
        if args.transcripts == "all" or (args.transcripts == "first" and i == 0):
            for j, text in enumerate(texts):
                (tdir / f"session{i:05d}_rep{j:02d}.jsonl").write_text(text)
    rate = accepts / args.sessions
    predicted = None
    if args.prover == "honest":
        predicted = predict(config, sampler, hist).session ** args.reps
    sigma = z = None
    if predicted is not None:
        sigma = math.sqrt(max(predicted * (1 - predicted), 1e-300) / args.sessions)
        z = (rate - predicted) / sigma
    data = {"experiment": "protocol-run", "label": inst.label, "prover": args.prover,
            "sessions": args.sessions, "reps": args.reps, "accepts": accepts, "rate": rate,
            "predicted": predicted, "sigma": sigma, "z": z, "config": config.as_dict()}
    if args.good_set_seeds:
        report = good_set_experiment(config, sampler, prover, args.good_set_seeds,
                                     args.good_set_samples, args.good_set_samples * 4, good_seq)
        data["good_set"] = report.as_dict()
        data["good_fraction"] = report.good_fraction
    write_json(dest / "protocol.json", data)
    print(table([[inst.label, args.prover, str(args.sessions), _fmt(rate), _fmt(predicted),
                  _fmt(z)]], ["label", "prover", "sessions", "rate", "predicted", "z"]), end="")
    return EXIT_OK if rate >= 0.5 else EXIT_REJECT


REPORT_COLUMNS = ["file", "experiment", "subject", "rate", "predicted", "z", "good_fraction"]


def _report_row(name: str, data: dict) -> list[str]:
    if not isinstance(data, dict) or "experiment" not in data:
        raise ParseError("result file has no 'experiment' field", name)
    subject = data.get("prover") or data.get("strategy") or data.get("mode") or data.get("label")
    rate = data.get("rate", data.get("tv", data.get("acceptance", data.get("flattened"))))
    return [name, str(data["experiment"]), _fmt(subject), _fmt(rate),
            _fmt(data.get("predicted")), _fmt(data.get("z")), _fmt(data.get("good_fraction"))]


def cmd_report(args) -> int:
    files: list[Path] = []
    for item in args.inputs:
        p = Path(item)
        files.extend(sorted(p.rglob("*.json")) if p.is_dir() else [p])
    rows, records = [], []
    for f in files:
        if f.name in ("report.json", "compile.json", "manifest.json"):
            continue
        try:
            data = json.loads(f.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, f, exc.lineno) from exc
        if "experiment" not in data:
            continue
        rows.append(_report_row(f.name, data))
        records.append(dict(zip(REPORT_COLUMNS, rows[-1])))
    text = table(rows, REPORT_COLUMNS)
    dest = out_dir(args)
    (dest / "report.txt").write_text(text)
    write_json(dest / "report.json", {"rows": records})
    print(text, end="")
    return EXIT_OK


# --- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--out-dir", default="out", help="where results are written")

    parser = argparse.ArgumentParser(prog="qiparg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile-hamiltonian", parents=[common], help="compile a circuit instance")
    p.add_argument("--instance", required=True)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("witness", parents=[common], help="brute-force best witness")
    p.add_argument("--instance", required=True)
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("history-state", parents=[common], help="history state of a witness")
    p.add_argument("--instance", required=True)
    p.add_argument("--witness", help="state file (default: the instance's witness)")
    p.set_defaults(func=cmd_history)

    p = sub.add_parser("mf-run", parents=[common], help="Monte Carlo MF verification")
    p.add_argument("--hamiltonian", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--mode", choices=("vmf", "decide"), default="vmf")
    p.add_argument("--locality", type=int, default=6)
    p.set_defaults(func=cmd_mf_run)

    p = sub.add_parser("flatten", parents=[common], help="flatten a QIP instance")
    p.add_argument("--instance", required=True)
    p.set_defaults(func=cmd_flatten)

    p = sub.add_parser("binding-exp", parents=[common], help="Real vs Ideal commitment runs")
    p.add_argument("--strategy", default="honest",
                   choices=(*sorted(cm.STRATEGIES), "partial-refuse"))
    p.add_argument("--refuse-prob", type=float, default=0.3)
    p.add_argument("--qubits", type=int, default=3)
    p.add_argument("--basis", default="")
    p.add_argument("--lambda", dest="lam", type=int, default=cm.MIN_LAMBDA)
    p.add_argument("--runs", type=int, default=100_000)
    p.add_argument("--delta-samples", type=int, default=10_000)
    p.set_defaults(func=cmd_binding)

    p = sub.add_parser("protocol-run", parents=[common], help="run argument sessions")
    p.add_argument("--instance", required=True)
    p.add_argument("--prover", default="honest")
    p.add_argument("--lambda", dest="lam", type=int, default=8)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--sessions", type=int, default=100)
    p.add_argument("--max-copies", type=int, default=64)
    p.add_argument("--transcripts", choices=("all", "first", "none"), default="all")
    p.add_argument("--good-set-seeds", type=int, default=0)
    p.add_argument("--good-set-samples", type=int, default=50)
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("report", parents=[common], help="aggregate result files")
    p.add_argument("inputs", nargs="*")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, QipArgError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report, then signal an internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
