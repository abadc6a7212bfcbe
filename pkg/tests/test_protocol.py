import logging
import math
from collections import Counter
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from sixstate.errors import ConfigurationError, NoDataError
from sixstate.polarization import (
    BASIS_ORDER,
    STATE_ORDER,
    Basis,
    PolState,
    born_probability,
    classify,
    state_name,
    state_of,
)
from sixstate.protocol import (
    AttackModel,
    Detector,
    NoiseModel,
    ProtocolKind,
    PulseRecord,
    SessionConfig,
    SessionRunner,
    SiftSummary,
    alice_prepare,
    bob_measure,
    channel_apply,
    eve_intercept_resend,
    exact_benchmarks,
    merge_summaries,
    reprocess_with_eve,
    run_pulse,
    run_session,
    session_arrays,
    sift,
    sift_arrays,
    theoretical_benchmarks,
)
from sixstate.stats import CHI2_CRITICAL_0001, basis_pair_counts, chi_square_uniformity

# Central 99 % of a normal distribution.
Z_99 = 2.5758


# --- configuration ---

@pytest.mark.parametrize("n_pulses", [0, -3, True, 2.5])
def test_bad_pulse_counts(n_pulses):
    with pytest.raises(ConfigurationError):
        SessionConfig(n_pulses=n_pulses)


def test_bad_noise_and_seed():
    with pytest.raises(ConfigurationError):
        NoiseModel(flip_prob=1.5)
    with pytest.raises(ConfigurationError):
        NoiseModel(misalign_deg=math.inf)
    with pytest.raises(ConfigurationError):
        SessionConfig(seed=-1)
    with pytest.raises(ConfigurationError):
        SessionRunner(workers=0)


def test_runners_share_one_log_file_handler(tmp_path):
    log_file = str(tmp_path / "sessions.log")
    logger = logging.getLogger("sixstate.protocol")

    def file_handlers():
        return [h for h in logger.handlers if isinstance(h, logging.FileHandler)]

    before = len(file_handlers())
    with SessionRunner(log_file=log_file), SessionRunner(log_file=log_file):
        assert len(file_handlers()) == before + 1
    assert len(file_handlers()) == before


def test_defaults():
    config = SessionConfig()
    assert config.n_pulses == 2363
    assert config.noise.is_ideal
    assert config.to_dict()["protocol"] == "six-state"


def test_record_invariants():
    with pytest.raises(ValueError):
        PulseRecord(0, 0, Basis.HV, PolState.V, None, None, Basis.HV, 0, Detector.PD0)
    with pytest.raises(ValueError):
        PulseRecord(0, 0, Basis.HV, PolState.H, Basis.DA, None, Basis.HV, 0, Detector.PD0)
    with pytest.raises(ValueError):
        PulseRecord(0, 0, Basis.HV, PolState.H, None, None, Basis.HV, 1, Detector.PD0)


# --- per-pulse operations ---

def test_alice_prepares_six_states_uniformly(rng):
    counts = Counter(alice_prepare(ProtocolKind.SIX_STATE, rng).state_name for _ in range(30_000))
    result = chi_square_uniformity([counts[s] for s in STATE_ORDER], [1 / 6] * 6)
    assert result.statistic < CHI2_CRITICAL_0001[5]


def test_bb84_never_prepares_circular_states(rng):
    names = {alice_prepare(ProtocolKind.BB84, rng).state_name for _ in range(5_000)}
    assert names == {PolState.H, PolState.V, PolState.D, PolState.A}


def test_preparation_follows_bit_convention(rng):
    for _ in range(200):
        prep = alice_prepare(ProtocolKind.SIX_STATE, rng)
        assert prep.state == state_of(state_name(prep.basis, prep.bit))
        if (prep.bit, prep.basis) == (0, Basis.RL):
            assert prep.state_name is PolState.R


def test_ideal_channel_is_transparent(rng):
    h = state_of(PolState.H)
    assert channel_apply(h, NoiseModel(), rng) == h


def test_channel_misalignment_rotates(rng):
    out = channel_apply(state_of(PolState.H), NoiseModel(misalign_deg=10.0), rng)
    assert born_probability(out, state_of(PolState.H)) == pytest.approx(math.cos(math.radians(20.0)) ** 2)


def test_full_flip_replaces_uniformly(rng):
    noise = NoiseModel(flip_prob=1.0)
    counts = Counter(classify(channel_apply(state_of(PolState.H), noise, rng)) for _ in range(30_000))
    assert set(counts) == set(STATE_ORDER)
    result = chi_square_uniformity([counts[s] for s in STATE_ORDER], [1 / 6] * 6)
    assert result.statistic < CHI2_CRITICAL_0001[5]


def test_eve_collapses_onto_her_basis(rng):
    h = state_of(PolState.H)
    diagonal = []
    for _ in range(6_000):
        eve_basis, eve_bit, resent = eve_intercept_resend(h, rng)
        assert resent == state_of(state_name(eve_basis, eve_bit))
        if eve_basis is Basis.HV:
            assert eve_bit == 0
        elif eve_basis is Basis.DA:
            diagonal.append(eve_bit)
    p = 0.5
    assert sum(diagonal) / len(diagonal) == pytest.approx(p, abs=4 * math.sqrt(p * (1 - p) / len(diagonal)))


def test_eve_uses_protocol_bases(rng):
    bases = {eve_intercept_resend(state_of(PolState.D), rng, ProtocolKind.BB84).eve_basis for _ in range(500)}
    assert bases == {Basis.HV, Basis.DA}


def test_bob_reads_matching_basis_without_error(rng):
    d = state_of(PolState.D)
    for _ in range(500):
        bob = bob_measure(d, ProtocolKind.SIX_STATE, rng)
        assert bob.detector is Detector.for_bit(bob.bit)
        if bob.basis is Basis.DA:
            assert bob.bit == 0


# --- sessions ---

def test_session_has_every_pulse_in_order():
    records = run_session(SessionConfig(n_pulses=1000, seed=4))
    assert len(records) == 1000
    assert [r.index for r in records] == list(range(1000))
    for r in records:
        assert r.alice_state is state_name(r.alice_basis, r.alice_bit)
        assert r.detector is Detector.for_bit(r.bob_bit)
        assert r.eve_basis is None and r.eve_bit is None


def test_identical_configs_give_identical_sessions():
    config = SessionConfig(n_pulses=3000, seed=21, attack=AttackModel.INTERCEPT_RESEND)
    assert run_session(config) == run_session(config)
    assert run_session(config) != run_session(SessionConfig(n_pulses=3000, seed=22, attack=config.attack))


def test_worker_count_does_not_change_results():
    config = SessionConfig(n_pulses=20_000, seed=8, attack=AttackModel.INTERCEPT_RESEND)
    single = SessionRunner(workers=1).run_arrays(config)
    threaded = SessionRunner(workers=8, chunk_pulses=999).run_arrays(config)
    for name in ("index", "alice_bit", "alice_basis", "eve_basis", "eve_bit", "bob_basis", "bob_bit"):
        assert np.array_equal(getattr(single, name), getattr(threaded, name))


@pytest.mark.parametrize(
    "config",
    [
        SessionConfig(n_pulses=300, seed=31),
        SessionConfig(n_pulses=300, seed=32, attack=AttackModel.INTERCEPT_RESEND),
        SessionConfig(n_pulses=300, seed=33, noise=NoiseModel(flip_prob=0.3)),
        SessionConfig(
            n_pulses=300,
            seed=34,
            protocol=ProtocolKind.BB84,
            attack=AttackModel.INTERCEPT_RESEND,
            noise=NoiseModel(flip_prob=0.2),
        ),
    ],
)
def test_scalar_pipeline_matches_session_kernel(config):
    records = run_session(config)
    assert [run_pulse(config, i) for i in range(config.n_pulses)] == records


def test_bb84_uses_two_bases():
    records = run_session(SessionConfig(n_pulses=2000, seed=5, protocol=ProtocolKind.BB84))
    assert {r.alice_basis for r in records} == {Basis.HV, Basis.DA}
    assert {r.bob_basis for r in records} == {Basis.HV, Basis.DA}


def test_ideal_channel_has_no_errors(six_state_clean):
    summary = sift_arrays(six_state_clean)
    assert summary.n_errors_sifted == 0
    assert summary.qber == 0.0
    assert summary.n_compromised == 0


def test_clean_sift_fraction(six_state_clean):
    assert sift_arrays(six_state_clean).sift_fraction == pytest.approx(1 / 3, abs=0.006)


def test_intercept_resend_fractions(six_state_attacked):
    summary = sift_arrays(six_state_attacked)
    assert summary.sift_fraction == pytest.approx(1 / 3, abs=0.006)
    assert summary.compromised_fraction == pytest.approx(1 / 9, abs=0.005)
    assert summary.qber == pytest.approx(1 / 3, abs=0.01)
    assert summary.undisturbed_fraction == pytest.approx(2 / 9, abs=0.006)


def test_bb84_intercept_resend_qber(bb84_attacked):
    summary = sift_arrays(bb84_attacked)
    assert summary.sift_fraction == pytest.approx(0.5, abs=0.006)
    assert summary.qber == pytest.approx(0.25, abs=0.01)
    assert summary.compromised_fraction == pytest.approx(0.25, abs=0.006)


def test_eve_basis_independent_of_alice(six_state_attacked):
    counts = basis_pair_counts(six_state_attacked)
    assert counts.sum() == len(six_state_attacked)
    result = chi_square_uniformity(counts.ravel(), [1 / 9] * 9)
    assert result.dof == 8
    assert result.statistic < CHI2_CRITICAL_0001[8] == 26.124


def test_eve_basis_independence_holds_across_seeds():
    failures = 0
    for seed in range(100):
        arrays = session_arrays(
            SessionConfig(n_pulses=100_000, seed=1000 + seed, attack=AttackModel.INTERCEPT_RESEND)
        )
        failures += chi_square_uniformity(basis_pair_counts(arrays).ravel(), [1 / 9] * 9).exceeds()
    assert failures <= 1


def test_full_depolarization_gives_half_errors():
    summary = sift_arrays(session_arrays(SessionConfig(n_pulses=30_000, seed=6, noise=NoiseModel(flip_prob=1.0))))
    assert summary.qber == pytest.approx(0.5, abs=0.025)


def test_quarter_turn_misalignment_flips_linear_bases():
    # A 90 degree rotation swaps H/V and D/A but leaves circular states alone.
    summary = sift_arrays(session_arrays(SessionConfig(n_pulses=30_000, seed=9, noise=NoiseModel(misalign_deg=45.0))))
    assert summary.qber == pytest.approx(2 / 3, abs=0.025)


def test_lab_sized_runs_cover_the_tabletop_measurements():
    sifts, compromised = [], []
    for seed in range(200):
        clean = session_arrays(SessionConfig(n_pulses=2363, seed=seed))
        attacked = session_arrays(SessionConfig(n_pulses=2363, seed=seed, attack=AttackModel.INTERCEPT_RESEND))
        sifts.append(sift_arrays(clean).sift_fraction)
        compromised.append(sift_arrays(attacked).compromised_fraction)
    for values, measured in ((sifts, 0.313), (compromised, 0.104)):
        mean, spread = np.mean(values), np.std(values, ddof=1)
        assert mean - Z_99 * spread <= measured <= mean + Z_99 * spread


# --- sifting ---

def test_sift_matches_sift_arrays(six_state_attacked):
    assert sift(six_state_attacked.records()) == sift_arrays(six_state_attacked)


def test_sift_rejects_empty_input():
    with pytest.raises(NoDataError):
        sift([])
    with pytest.raises(NoDataError):
        merge_summaries([])


def test_qber_undefined_without_sifted_pulses():
    summary = SiftSummary.from_counts(n_total=5, n_sifted=0, n_errors_sifted=0, n_compromised=0)
    assert summary.qber is None
    assert summary.sift_fraction == 0.0


def test_summaries_merge_over_disjoint_parts():
    records = run_session(SessionConfig(n_pulses=3000, seed=17, attack=AttackModel.INTERCEPT_RESEND))
    parts = [sift(records[:1000]), sift(records[1000:2200]), sift(records[2200:])]
    assert merge_summaries(parts) == sift(records)
    assert merge_summaries(reversed(parts)) == sift(records)


def test_summary_fractions_are_consistent():
    summary = sift(run_session(SessionConfig(n_pulses=2363, seed=2, attack=AttackModel.INTERCEPT_RESEND)))
    assert summary.n_undisturbed + summary.n_errors_sifted == summary.n_sifted
    assert summary.undisturbed_fraction + summary.errors_fraction == pytest.approx(summary.sift_fraction)
    assert summary.n_compromised <= summary.n_undisturbed


# --- analytic benchmarks ---

@pytest.mark.parametrize("protocol", list(ProtocolKind))
@pytest.mark.parametrize("attack", list(AttackModel))
def test_enumeration_agrees_with_closed_form(protocol, attack):
    assert exact_benchmarks(protocol, attack) == theoretical_benchmarks(protocol, attack)


def test_six_state_theory_values():
    clean = theoretical_benchmarks(ProtocolKind.SIX_STATE, AttackModel.NONE)
    attacked = theoretical_benchmarks(ProtocolKind.SIX_STATE, AttackModel.INTERCEPT_RESEND)
    assert (clean.sift_fraction, clean.qber) == (Fraction(1, 3), Fraction(0))
    assert attacked.undisturbed_fraction == Fraction(2, 9)
    assert attacked.compromised_fraction == Fraction(1, 9)
    assert attacked.qber == Fraction(1, 3)
    assert attacked.as_floats()["qber"] == pytest.approx(1 / 3)


# --- reprocessing ---

def test_reprocess_keeps_alice_and_bob_bases(six_state_clean):
    records = six_state_clean.records()[:5000]
    reprocessed = reprocess_with_eve(records, seed=3)
    assert len(reprocessed) == len(records)
    for before, after in zip(records, reprocessed):
        assert after.index == before.index
        assert after.alice_state is before.alice_state
        assert after.bob_basis is before.bob_basis
        assert after.eve_basis in BASIS_ORDER
    assert reprocess_with_eve(records, seed=3) == reprocessed
    assert reprocess_with_eve(records, seed=4) != reprocessed


def test_reprocess_reaches_intercept_resend_statistics(six_state_clean):
    summary = sift(reprocess_with_eve(six_state_clean.records(), seed=1))
    assert summary.sift_fraction == sift_arrays(six_state_clean).sift_fraction
    assert summary.compromised_fraction == pytest.approx(1 / 9, abs=0.005)
    assert summary.qber == pytest.approx(1 / 3, abs=0.01)


def test_reprocess_handles_sparse_indices(six_state_clean):
    head = six_state_clean.records()[:3]
    sparse = [replace(r, index=i) for r, i in zip(head, (0, 5_000_000, 10**12))]
    reprocessed = reprocess_with_eve(sparse, seed=8)
    assert [r.index for r in reprocessed] == [0, 5_000_000, 10**12]
    for record, alone in zip(reprocessed, sparse):
        assert reprocess_with_eve([alone], seed=8) == [record]


def test_reprocess_rejects_empty_input():
    with pytest.raises(NoDataError):
        reprocess_with_eve([], seed=0)
