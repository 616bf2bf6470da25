"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line straight to the
terminal (bypassing capture) before asserting, so ``pytest -v`` shows the
measured numbers whether the criterion holds or not.
"""

import itertools
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import (
    random_circuit,
    random_hamiltonian,
    random_symmetric,
    random_toy_qip,
    random_yfree_matrix,
)
from qiparg import commit as cm
from qiparg.clock import compile_circuit, history_state
from qiparg.flatten import chernoff, flatten, interactive_accept_prob, threshold_amplify
from qiparg.instances import Instance, no_toy_circuit, toy_targets, yes_toy_circuit
from qiparg.mf import (
    MFSampler,
    consistency_probability,
    enumerate_decide_acceptance,
    enumerate_vmf_acceptance,
    monte_carlo_decide,
    monte_carlo_vmf,
    sample_basis,
)
from qiparg.pauli import ccz_decomposition, decompose_yfree, one_norm_bound_check, operator_norm
from qiparg.protocol import ProverStrategy, SessionConfig, predict, run_session
from qiparg.sim import RealStateVector, acceptance_probability, outcome_distribution

SEED = 20241019


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def coeffs(h):
    out = {}
    for c, w in h.terms:
        out[w.label()] = out.get(w.label(), 0.0) + c
    return {k: v for k, v in out.items() if abs(v) > 1e-15}


def padded(circuit, rng):
    psi = RealStateVector.random(circuit.witness_qubits, rng)
    if circuit.ancilla_count:
        psi = psi.tensor(RealStateVector.zero(circuit.ancilla_count))
    return psi


# ---------------------------------------------------------------------------
# Pauli algebra
# ---------------------------------------------------------------------------

def test_criterion_01_decomposition_exactness(verdict):
    rng = np.random.default_rng(SEED + 1)
    start = time.perf_counter()
    worst = 0.0
    for i in range(200):
        m = random_yfree_matrix(rng, 1 + i % 3)
        worst = max(worst, float(np.max(np.abs(decompose_yfree(m).to_matrix() - m))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 5
    verdict(1, ok, f"max error {worst:.2e}, {elapsed:.2f} s")
    assert ok


def test_criterion_02_closed_form_decompositions(verdict):
    s = 1 / math.sqrt(2)
    had = np.array([[s, s], [s, -s]])
    p11 = np.diag([0.0, 0.0, 0.0, 1.0])
    errs = []
    got = coeffs(decompose_yfree(had))
    errs.append(max(abs(got.get(k, 0) - v) for k, v in {"X": s, "Z": s}.items()))
    errs.append(len(got) - 2)
    want = {"II": 0.25, "IZ": -0.25, "ZI": -0.25, "ZZ": 0.25}
    got = coeffs(decompose_yfree(p11))
    errs.append(max(abs(got.get(k, 0) - v) for k, v in want.items()))
    errs.append(len(got) - 4)
    ccz = ccz_decomposition().to_matrix()
    errs.append(float(np.max(np.abs(ccz - np.diag([1.0] * 7 + [-1.0])))))
    worst = max(abs(e) for e in errs)
    ok = worst <= 1e-12
    verdict(2, ok, f"max deviation {worst:.2e}")
    assert ok


def test_criterion_03_one_norm_bounds(verdict):
    rng = np.random.default_rng(SEED + 3)
    violations = 0
    for k in (1, 2, 3):
        for _ in range(100):
            m = random_symmetric(rng, k)
            rep = one_norm_bound_check(m)
            # independent oracle for both sides
            norm = float(np.max(np.abs(np.linalg.eigvalsh(m))))
            ok_lo = norm / 2 ** (k / 2) <= rep.one_norm + 1e-12
            ok_hi = rep.one_norm <= 2 ** k * norm + 1e-12
            violations += not (rep.passed and ok_lo and ok_hi)
    verdict(3, violations == 0, f"{violations} violations over 300 matrices")
    assert violations == 0


# ---------------------------------------------------------------------------
# clock construction
# ---------------------------------------------------------------------------

def test_criterion_04_history_energy_ledger(verdict):
    rng = np.random.default_rng(SEED + 4)
    worst = 0.0
    for _ in range(50):
        ell = int(rng.integers(1, 4))
        T = int(rng.integers(2, 7))
        c = random_circuit(rng, ell, T, int(rng.integers(0, min(ell, 1) + 1)))
        b = compile_circuit(c)
        psi = padded(c, rng)
        phi = history_state(c, psi).state.amplitudes
        for part in (b.h_init, b.h_clock, b.h_prop):
            worst = max(worst, abs(part.expectation(phi)))
        want = (1 - acceptance_probability(c, psi)) / (T + 1)
        worst = max(worst, abs(b.h_final.expectation(phi) - want))
    ok = worst <= 1e-10
    verdict(4, ok, f"max deviation {worst:.2e}")
    assert ok


def test_criterion_05_projectors_norm_and_psd(verdict):
    rng = np.random.default_rng(SEED + 5)
    proj_err, min_eig, max_prop = 0.0, math.inf, 0.0
    worst_case = None
    for _ in range(24):
        ell = int(rng.integers(1, 4))
        T = int(rng.integers(2, 11 - ell))
        c = random_circuit(rng, ell, T, int(rng.integers(0, 2)))
        b = compile_circuit(c)
        for part in (*b.init_terms, *b.clock_terms, b.h_final):
            m = part.to_matrix()
            proj_err = max(proj_err, float(np.max(np.abs(m @ m - m))))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(b.h_total.to_matrix())[0]))
        norm = operator_norm(b.h_prop)
        if norm > max_prop:
            max_prop, worst_case = norm, (ell, T)
    ok_proj = proj_err <= 1e-9
    ok_psd = min_eig >= -1e-9
    ok_norm = max_prop <= 2 + 1e-9
    ok = ok_proj and ok_psd and ok_norm
    verdict(5, ok, f"projector error {proj_err:.1e}, min eigenvalue {min_eig:.1e}, "
                   f"max ||H_prop|| {max_prop:.4f} at (ell, T) = {worst_case}")
    assert ok_proj and ok_psd
    assert ok_norm, f"||H_prop|| = {max_prop:.6f} exceeds 2 at (ell, T) = {worst_case}"


# ---------------------------------------------------------------------------
# measurement-only verification
# ---------------------------------------------------------------------------

def test_criterion_06_exact_mf_laws(verdict):
    rng = np.random.default_rng(SEED + 6)
    mf_err = wrap_err = 0.0
    for _ in range(20):
        q = int(rng.integers(1, 5))
        h = random_hamiltonian(rng, q, int(rng.integers(1, 6)))
        s = MFSampler(h, locality=q)
        psi = RealStateVector.random(q, rng)
        energy = float(psi.amplitudes @ s.hamiltonian.to_matrix() @ psi.amplitudes)
        want = 0.5 - energy / (2 * s.hamiltonian.one_norm)
        mf_err = max(mf_err, abs(enumerate_decide_acceptance(s, psi) - want))
    for _ in range(20):
        h = random_hamiltonian(rng, 6, int(rng.integers(1, 5)))
        s = MFSampler(h)
        psi = RealStateVector.random(6, rng)
        energy = float(psi.amplitudes @ s.hamiltonian.to_matrix() @ psi.amplitudes)
        want = 127 / 128 - energy / (128 * s.hamiltonian.one_norm)
        wrap_err = max(wrap_err, abs(enumerate_vmf_acceptance(s, psi) - want))
    s = MFSampler(random_hamiltonian(rng, 8, 3, max_locality=3))
    probs = {consistency_probability(sample_basis(s, s.random_tape(rng))[1]) for _ in range(20)}
    ok = mf_err <= 1e-10 and wrap_err <= 1e-10 and probs == {1 / 64}
    verdict(6, ok, f"MF error {mf_err:.1e}, wrapper error {wrap_err:.1e}, "
                   f"consistency {sorted(probs)}")
    assert ok


def test_criterion_07_mf_monte_carlo(verdict):
    inst = Instance(Path("."), {"witness": "brute-force"}, yes_toy_circuit())
    sampler = inst.sampler()
    hist = inst.history()
    start = time.perf_counter()
    vres = monte_carlo_vmf(sampler, hist, 100_000, seed=SEED + 7)
    elapsed_v = time.perf_counter() - start
    rng = np.random.default_rng(SEED + 70)
    h = random_hamiltonian(rng, 6, 8)
    start = time.perf_counter()
    dres = monte_carlo_decide(MFSampler(h), RealStateVector.random(6, rng), 100_000,
                              seed=SEED + 71)
    elapsed_d = time.perf_counter() - start
    ok = (abs(vres.z_score) < 4 and abs(dres.z_score) < 4
          and elapsed_v < 30 and elapsed_d < 30)
    verdict(7, ok, f"vmf z {vres.z_score:+.2f} ({elapsed_v:.1f} s), "
                   f"decide z {dres.z_score:+.2f} ({elapsed_d:.1f} s)")
    assert ok


# ---------------------------------------------------------------------------
# flattening and amplification
# ---------------------------------------------------------------------------

def test_criterion_08_flattening_equivalence(verdict):
    rng = np.random.default_rng(SEED + 8)
    worst = 0.0
    for _ in range(20):
        qip = random_toy_qip(rng)
        aux = RealStateVector.random(qip.witness_qubits, rng)
        worst = max(worst, abs(flatten(qip).acceptance(aux) - interactive_accept_prob(qip, aux)))
    ok = worst <= 1e-10
    verdict(8, ok, f"max deviation {worst:.2e} over 20 QIPs")
    assert ok


def exact_tail(p, k, t):
    return math.fsum(math.comb(k, j) * p ** j * (1 - p) ** (k - j) for j in range(t, k + 1))


def test_criterion_09_amplification(verdict):
    bad = 0
    cases = 0
    for c in np.linspace(0.55, 1.0, 10):
        for s in np.linspace(0.0, 0.5, 10):
            for k in (1, 2, 5, 10, 33, 64, 200):
                c_, s_ = float(c), float(s)
                rep = threshold_amplify(c_, s_, k)
                t = math.ceil((c_ + s_) / 2 * k - 1e-9)
                yes, no = exact_tail(c_, k, t), exact_tail(s_, k, t)
                tail = math.exp(-k * (c_ - s_) ** 2 / 2)
                cases += 1
                bad += not (abs(rep.exact_yes - yes) < 1e-12 and abs(rep.exact_no - no) < 1e-12
                            and yes >= 1 - tail - 1e-12 and no <= tail + 1e-12)
    cher = max(abs(chernoff(p, e, n) - math.exp(-2 * e * e * n))
               for p, e, n in itertools.product((0.1, 0.5, 0.9), (0.01, 0.1, 0.3), (0, 10, 1000)))
    ok = bad == 0 and cher <= 1e-12
    verdict(9, ok, f"{bad} bound violations in {cases} cases, Chernoff error {cher:.1e}")
    assert ok


# ---------------------------------------------------------------------------
# commitments
# ---------------------------------------------------------------------------

def test_criterion_10_commitment_correctness(verdict):
    rng = np.random.default_rng(SEED + 10)
    worst = 0.0
    for trial in range(5):
        sigma = RealStateVector.random(3, rng)
        for b in itertools.product((0, 1), repeat=3):
            real = cm.real_distribution(16, b, sigma, seed=trial)
            worst = max(worst, cm.tv_distance(real, outcome_distribution(b, sigma)))
    ok = worst < 1e-9
    verdict(10, ok, f"max TV {worst:.1e} over 5 states x 8 bases")
    assert ok


def test_criterion_11_binding_harness(verdict):
    rng = np.random.default_rng(SEED + 11)
    sigma = RealStateVector.random(3, rng)
    b = (1, 0, 1)
    honest = cm.binding_experiment(cm.honest(), 16, b, sigma, runs=100_000,
                                   delta_samples=10_000, seed=SEED + 110)
    flip = cm.binding_experiment(cm.basis_dependent_flipper(), 16, (0, 1, 0), sigma,
                                 runs=20_000, delta_samples=2_000, seed=SEED + 111)
    ok = (honest.delta.delta_hat == 0 and honest.tv <= 0.01
          and flip.delta.delta_hat > 0.2 and flip.within_bound)
    verdict(11, ok, f"honest delta {honest.delta.delta_hat}, TV {honest.tv:.4f}; "
                    f"flipper delta {flip.delta.delta_hat:.3f}, TV {flip.tv:.3f} "
                    f"vs C*sqrt(delta) {flip.bound:.3f} (C = {cm.CALIBRATED_C})")
    assert ok


# ---------------------------------------------------------------------------
# protocol
# ---------------------------------------------------------------------------

def acceptance_rate(config, sampler, prover, n, seed):
    root = np.random.SeedSequence(seed)
    accepts = 0
    for child in root.spawn(n):
        vs, ps = child.spawn(2)
        accepts += run_session(config, sampler, prover, vs, ps).accept
    return accepts / n


def test_criterion_12_end_to_end_protocol(verdict):
    start = time.perf_counter()
    c, s = toy_targets()
    n = 1000
    yes = Instance(Path("."), {"witness": "brute-force"}, yes_toy_circuit())
    y_sampler, y_hist = yes.sampler(), yes.history()
    y_config = SessionConfig.for_sampler(8, c, s, y_sampler)
    y_pred = predict(y_config, y_sampler, y_hist).session
    y_rate = acceptance_rate(y_config, y_sampler, ProverStrategy.honest(y_hist), n, SEED + 12)
    y_sigma = math.sqrt(y_pred * (1 - y_pred) / n)

    no = Instance(Path("."), {"witness": "brute-force"}, no_toy_circuit())
    n_sampler, n_hist = no.sampler(), no.history()
    n_config = SessionConfig.for_sampler(8, c, s, n_sampler)
    n_pred = predict(n_config, n_sampler, n_hist).session
    wrong = ProverStrategy("honest-wrong-state", n_hist,
                           cm.honest_wrong_state((n_hist,) * n_config.copies))
    n_rate = acceptance_rate(n_config, n_sampler, wrong, n, SEED + 120)
    n_sigma = math.sqrt(n_pred * (1 - n_pred) / n)

    gap = y_pred - n_pred
    band = 4 * math.hypot(y_sigma, n_sigma)
    elapsed = time.perf_counter() - start
    ok_yes = abs(y_rate - y_pred) <= 4 * y_sigma
    ok_no = y_rate - n_rate >= gap - band
    ok = ok_yes and ok_no and elapsed < 300 and y_config.copies <= 64
    verdict(12, ok, f"YES {y_rate:.4f} vs predicted {y_pred:.4f} (sigma {y_sigma:.4f}); "
                    f"NO {n_rate:.4f} (predicted {n_pred:.4f}); analytic gap {gap:.5f}, "
                    f"4 sigma {band:.4f}; {elapsed:.0f} s")
    assert ok


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------

def run_pipeline(root: Path, seed: int) -> dict[str, bytes]:
    env = {k: v for k, v in os.environ.items() if k != "QIPARG_SEED"}
    inst = root / "instances"
    out = root / "out"
    script = (
        "import sys; from qiparg.instances import write_toy_instances; "
        "write_toy_instances(sys.argv[1])"
    )
    subprocess.run([sys.executable, "-c", script, str(inst)], check=True, env=env)
    steps = [
        ["compile-hamiltonian", "--instance", str(inst / "yes")],
        ["history-state", "--instance", str(inst / "yes")],
        ["mf-run", "--hamiltonian", str(out / "hamiltonian" / "total.ham"),
         "--state", str(out / "history.state"), "--trials", "20000"],
        ["flatten", "--instance", str(inst / "qip")],
        ["binding-exp", "--strategy", "basis-flipper", "--runs", "2000",
         "--delta-samples", "500"],
        ["protocol-run", "--instance", str(inst / "yes"), "--sessions", "30", "--reps", "2",
         "--jobs", "2"],
        ["report", str(out)],
    ]
    for step in steps:
        subprocess.run([sys.executable, "-m", "qiparg", *step, "--seed", str(seed),
                        "--out-dir", str(out)], check=True, env=env, capture_output=True)
    return {str(p.relative_to(out)): p.read_bytes()
            for p in sorted(out.rglob("*")) if p.is_file()}


def test_criterion_13_determinism(verdict, tmp_path):
    a = run_pipeline(tmp_path / "a", 7)
    b = run_pipeline(tmp_path / "b", 7)
    transcripts = [k for k in a if k.startswith("transcripts/")]
    diff = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    ok = not diff and len(transcripts) == 60 and "report.txt" in a
    verdict(13, ok, f"{len(a)} files compared ({len(transcripts)} transcripts), "
                    f"{len(diff)} differ")
    assert ok, diff[:5]
