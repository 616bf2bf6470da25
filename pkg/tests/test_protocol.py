import math

import numpy as np
import pytest

from qiparg.errors import ProtocolViolation, RangeError
from qiparg.mf import MFSampler, vmf_law
from qiparg.pauli import Hamiltonian
from qiparg.protocol import (
    BRANCHES,
    PREFIX,
    ProverStrategy,
    SessionConfig,
    Transcript,
    draw_seed,
    good_set_experiment,
    predict,
    prg_bytes,
    prg_expand,
    run_repeated,
    run_session,
    seed_bytes,
    validate,
)
from qiparg.sim import RealStateVector


def certain_sampler():
    # -Z on the first qubit: |0...0> sits at energy -D and passes every copy
    return MFSampler(Hamiltonian.from_terms(6, [(-1, "ZIIIII")]))


def certain_setup(lam=2):
    sampler = certain_sampler()
    config = SessionConfig.for_sampler(lam, 1.0, 0.5, sampler)
    return config, sampler, RealStateVector.zero(6)


def mixed_setup(lam=2):
    # a state whose per-copy law is strictly between 0 and 1
    sampler = MFSampler(Hamiltonian.from_terms(6, [(1, "ZIIIII"), (1, "IXIIII")]))
    config = SessionConfig.for_sampler(lam, 1.0, 0.5, sampler)
    return config, sampler, RealStateVector.zero(6)


# ---------------------------------------------------------------------------
# pseudorandom generator
# ---------------------------------------------------------------------------

class TestPRG:
    def test_pinned_vectors(self):
        assert prg_expand(b"\x00", 64) == (
            "0010001010001000101110011011000010001110010001001010010101110111")
        assert prg_expand(b"\x01", 16) == "1011011011110110"

    def test_matches_aes_ctr(self):
        from hashlib import sha256

        from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

        key = sha256(b"qiparg-prg" + b"\x07").digest()
        enc = Cipher(algorithms.AES(key), modes.CTR(bytes(16))).encryptor()
        assert prg_bytes(b"\x07", 48) == enc.update(bytes(48)) + enc.finalize()

    def test_prefix_property(self):
        for seed in (b"\x00", b"\xab", b"\x12\x34"):
            assert prg_expand(seed, 64).startswith(prg_expand(seed, 16))

    def test_deterministic_and_binary(self):
        a = prg_expand(b"\x05", 1000)
        assert a == prg_expand(b"\x05", 1000)
        assert set(a) <= {"0", "1"} and len(a) == 1000

    def test_rough_balance(self):
        bits = prg_expand(b"\x09", 20_000)
        ones = bits.count("1")
        assert abs(ones - 10_000) < 4 * math.sqrt(5_000)

    def test_length_checked(self):
        with pytest.raises(RangeError):
            prg_expand(b"\x00", 0)

    def test_seed_masking(self):
        rng = np.random.default_rng(3)
        assert seed_bytes(12) == 2
        for _ in range(20):
            s = draw_seed(12, rng)
            assert len(s) == 2 and s[-1] & 0x0F == 0


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

class TestSessionConfig:
    def test_parameters(self):
        cfg = SessionConfig(2, 0.9, 0.4, 6, 100)
        assert cfg.p == 2
        assert cfg.copies == 16
        assert cfg.threshold == pytest.approx(0.65)
        assert cfg.ell == 96
        assert cfg.prg_output_lens == (96, 1600)

    def test_copies_capped(self):
        assert SessionConfig(8, 0.9921875, 0.9921365, 6, 100).copies == 64

    def test_commitment_lambda_floor(self):
        assert SessionConfig(8, 1.0, 0.5, 6, 10).commitment_lambda == 16

    def test_rejects_no_gap(self):
        with pytest.raises(RangeError):
            SessionConfig(2, 0.5, 0.5, 6, 10)

    def test_as_dict(self):
        d = SessionConfig(2, 0.9, 0.4, 6, 100).as_dict()
        assert d["copies"] == 16 and d["p"] == 2


# ---------------------------------------------------------------------------
# transcripts
# ---------------------------------------------------------------------------

class TestTranscript:
    def test_order_enforced(self):
        t = Transcript()
        with pytest.raises(ProtocolViolation):
            t.send("P", "y", b"")
        t.send("V", "pk", b"k")
        with pytest.raises(ProtocolViolation):
            t.send("V", "challenge", b"\x00")

    def test_bad_challenge_byte(self):
        t = Transcript()
        t.send("V", "pk", b"k")
        t.send("P", "y", b"y")
        t.send("V", "challenge", b"\x02")
        with pytest.raises(ProtocolViolation):
            t.send("V", "h", b"\x00")

    def test_incomplete_transcript(self):
        t = Transcript()
        t.send("V", "pk", b"k")
        with pytest.raises(ProtocolViolation):
            _ = t.accept
        with pytest.raises(ProtocolViolation):
            validate(t)

    @pytest.mark.parametrize("b", [0, 1])
    def test_round_trip(self, b):
        cfg, sampler, state = certain_setup()
        t = run_session(cfg, sampler, ProverStrategy.honest(state), 1, 2, challenge=b)
        back = Transcript.loads(t.dumps())
        assert back == t
        order = tuple((m.sender, m.round_tag) for m in t.messages)
        assert order == PREFIX + BRANCHES[b]

    def test_loads_reports_line(self):
        cfg, sampler, state = certain_setup()
        text = run_session(cfg, sampler, ProverStrategy.honest(state), 1, 2).dumps()
        lines = text.splitlines()
        lines[1] = "{not json"
        with pytest.raises(ProtocolViolation, match="line 2"):
            Transcript.loads("\n".join(lines))


# ---------------------------------------------------------------------------
# sessions
# ---------------------------------------------------------------------------

class TestSessions:
    def test_replay_is_deterministic(self):
        cfg, sampler, state = mixed_setup()
        prover = ProverStrategy.honest(state)
        for s in range(5):
            a = run_session(cfg, sampler, prover, s, 100 + s)
            assert a.dumps() == run_session(cfg, sampler, prover, s, 100 + s).dumps()

    def test_honest_test_round_accepts(self):
        cfg, sampler, state = mixed_setup()
        for s in range(10):
            t = run_session(cfg, sampler, ProverStrategy.honest(state), s, s, challenge=0)
            assert t.accept == 1

    def test_certain_instance_always_accepts(self):
        cfg, sampler, state = certain_setup()
        for s in range(10):
            t = run_session(cfg, sampler, ProverStrategy.honest(state), s, s)
            assert t.accept == 1

    @pytest.mark.parametrize("b", [0, 1])
    def test_refuse_to_open_rejected(self, b):
        cfg, sampler, state = certain_setup()
        prover = ProverStrategy.adversary("refuse-to-open", state)
        for s in range(5):
            t = run_session(cfg, sampler, prover, s, s, challenge=b)
            assert t.accept == 0
            assert t.payload("verdict") == b"\x00"

    def test_unknown_adversary(self):
        with pytest.raises(ValueError):
            ProverStrategy.adversary("nonsense", RealStateVector.zero(6))

    def test_state_size_checked(self):
        cfg, sampler, _ = certain_setup()
        with pytest.raises(ProtocolViolation):
            run_session(cfg, sampler, ProverStrategy.honest(RealStateVector.zero(3)), 0, 0)

    def test_branch_balance(self):
        cfg, sampler, state = certain_setup()
        n = 400
        ones = sum(run_session(cfg, sampler, ProverStrategy.honest(state), s, s).challenge
                   for s in range(n))
        assert abs(ones - n / 2) <= 4 * math.sqrt(n / 4)

    def test_pinned_s1_is_used(self):
        cfg, sampler, state = certain_setup()
        t = run_session(cfg, sampler, ProverStrategy.honest(state), 0, 0, challenge=1,
                        s1=b"\x80")
        assert t.payload("s1") == b"\x80"


class TestRepeated:
    def test_single_rep_matches_session(self):
        cfg, sampler, state = mixed_setup()
        prover = ProverStrategy.honest(state)
        from qiparg.commit import seed_sequence

        ts, verdict = run_repeated(cfg, sampler, prover, 1, 5, 6)
        vs = seed_sequence(5).spawn(1)[0]
        ps = seed_sequence(6).spawn(1)[0]
        assert ts[0].dumps() == run_session(cfg, sampler, prover, vs, ps).dumps()
        assert verdict == ts[0].accept

    def test_conjunction(self):
        cfg, sampler, state = mixed_setup()
        for s in range(6):
            ts, verdict = run_repeated(cfg, sampler, ProverStrategy.honest(state), 4, s, s)
            assert len(ts) == 4
            assert verdict == int(all(t.accept for t in ts))

    def test_refuser_always_rejected(self):
        cfg, sampler, state = certain_setup()
        _, verdict = run_repeated(cfg, sampler,
                                  ProverStrategy.adversary("refuse-to-open", state), 3, 1, 1)
        assert verdict == 0

    def test_rep_limit(self):
        cfg, sampler, state = certain_setup()
        with pytest.raises(RangeError):
            run_repeated(cfg, sampler, ProverStrategy.honest(state), 17)


# ---------------------------------------------------------------------------
# predictions
# ---------------------------------------------------------------------------

class TestPredict:
    def test_certain_instance(self):
        cfg, sampler, state = certain_setup()
        pred = predict(cfg, sampler, state)
        assert pred.per_copy == pytest.approx(1.0)
        assert pred.session == pytest.approx(1.0)

    def test_composition(self):
        cfg, sampler, state = mixed_setup()
        pred = predict(cfg, sampler, state)
        assert pred.per_copy == pytest.approx(vmf_law(sampler.hamiltonian, state))
        k, t = cfg.copies, math.ceil(cfg.threshold * cfg.copies)
        q = pred.per_copy
        tail = sum(math.comb(k, j) * q ** j * (1 - q) ** (k - j) for j in range(t, k + 1))
        assert pred.measurement_round == pytest.approx(tail)
        assert pred.session == pytest.approx(0.5 + 0.5 * tail)

    @pytest.mark.parametrize("randomness", ["prg", "true"])
    def test_measurement_round_within_four_sigma(self, randomness):
        cfg, sampler, state = mixed_setup()
        prover = ProverStrategy.honest(state)
        n = 300
        acc = sum(run_session(cfg, sampler, prover, s, s, challenge=1,
                              randomness=randomness).accept for s in range(n))
        p = predict(cfg, sampler, state).measurement_round
        assert abs(acc / n - p) <= 4 * math.sqrt(p * (1 - p) / n)


# ---------------------------------------------------------------------------
# Good-set experiment
# ---------------------------------------------------------------------------

class TestGoodSet:
    def test_honest_all_good(self):
        cfg, sampler, state = certain_setup(lam=4)
        rep = good_set_experiment(cfg, sampler, ProverStrategy.honest(state), n_seeds=8,
                                  s2_samples=10, delta_sessions=20, seed=1)
        assert rep.delta_hat == 0
        assert rep.good_fraction == 1.0
        assert rep.markov_bound == pytest.approx(0.5)
        assert len(rep.as_dict()["per_seed"]) == 8

    def test_refuser_none_good(self):
        cfg, sampler, state = certain_setup(lam=4)
        rep = good_set_experiment(cfg, sampler,
                                  ProverStrategy.adversary("refuse-to-open", state),
                                  n_seeds=8, s2_samples=10, delta_sessions=20, seed=1)
        assert rep.good_fraction == 0.0
        assert all(r == 0.0 for r in rep.rates)

    def test_small_seed_space_is_enumerated(self):
        cfg, sampler, state = certain_setup(lam=2)
        rep = good_set_experiment(cfg, sampler, ProverStrategy.honest(state), n_seeds=8,
                                  s2_samples=3, delta_sessions=5, seed=0)
        assert len(set(rep.seeds)) == 4
