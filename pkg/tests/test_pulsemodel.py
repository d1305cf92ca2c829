import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rydecho.hilbert import LevelScheme, basis_state, build_product_basis
from rydecho.pulsemodel import (
    GeometryState,
    InteractionSpec,
    PulseSpec,
    Sequence,
    Stage,
    WaitSpec,
    pair_interaction,
    run_sequence,
    run_sequence_batch,
    stage_hamiltonian,
)

TWO_PI = 2 * np.pi


def pair_basis():
    return build_product_basis([LevelScheme(0, ("0", "1", "r")), LevelScheme(1, ("0", "1", "r"))])


def geo(L):
    return GeometryState.of({(0, 1): L})


def blockade_sequence(L=8.0, omega=TWO_PI * 10):
    b = pair_basis()
    inter = (InteractionSpec((0, 1), 56.2, ("r", "r")),)
    stages = (
        Stage(PulseSpec(0, ("1", "r"), omega, np.pi / omega, label="a"), geo(L)),
        Stage(PulseSpec(1, ("1", "r"), omega * np.exp(0.3j), 2 * np.pi / omega, label="b"), geo(L)),
        Stage(WaitSpec(0.01, label="w"), geo(L * 1.01)),
        Stage(PulseSpec(0, ("1", "r"), omega, np.pi / omega, detuning=0.5, label="c"), geo(L)),
    )
    return Sequence(b, stages, inter)


def test_pair_interaction_reference_values():
    # C6/2pi in THz um^6 -> MHz via 1e6 / L^6
    np.testing.assert_allclose(pair_interaction(56.2, 8.0) / TWO_PI, 56.2e6 / 8.0**6, rtol=1e-15)
    np.testing.assert_allclose(pair_interaction(56.2, 8.0) / TWO_PI, 214.386, rtol=1e-5)
    np.testing.assert_allclose(pair_interaction(56.2, 16.0) / TWO_PI, 3.3498, rtol=1e-4)
    assert pair_interaction(-25.6, 8.0) < 0
    with pytest.raises(ValueError):
        pair_interaction(1.0, 0.0)


@given(
    c6=st.floats(min_value=0.1, max_value=1e3),
    L=st.floats(min_value=1.0, max_value=30.0),
    s=st.floats(min_value=1.0001, max_value=3.0),
)
def test_pair_interaction_scaling_and_monotonicity(c6, L, s):
    v = pair_interaction(c6, L)
    np.testing.assert_allclose(pair_interaction(c6, s * L), v / s**6, rtol=1e-13)
    assert pair_interaction(c6, s * L) < v


@pytest.mark.parametrize("k", [1, 2, 3])
def test_pair_interaction_power_of_two_scaling_is_exact(k):
    v = pair_interaction(56.2, 8.0)
    assert pair_interaction(56.2, 8.0 * 2**k) == v / 2 ** (6 * k)


def test_spec_validation():
    with pytest.raises(ValueError):
        PulseSpec(0, ("1", "r"), 1.0, 0.0)
    with pytest.raises(ValueError):
        PulseSpec(0, ("1", "r"), 0.0, 1.0)
    with pytest.raises(ValueError):
        WaitSpec(-1.0)
    with pytest.raises(ValueError):
        InteractionSpec((0, 0), 1.0, ("r", "r"))
    with pytest.raises(ValueError):
        GeometryState.of({(0, 1): -1.0})
    assert geo(5.0).spacing(1, 0) == 5.0


def test_stage_hamiltonian_elements():
    b = pair_basis()
    inter = (InteractionSpec((0, 1), 56.2, ("r", "r")),)
    rabi = 3.0 * np.exp(0.7j)
    st_ = Stage(PulseSpec(1, ("1", "r"), rabi, 1.0, detuning=2.5), geo(8.0))
    H = stage_hamiltonian(st_, b, inter).matrix
    i_lo, i_up = b.index("0,1"), b.index("0,r")
    np.testing.assert_allclose(H[i_up, i_lo], rabi / 2)
    np.testing.assert_allclose(H[i_lo, i_up], np.conj(rabi) / 2)
    np.testing.assert_allclose(H[i_up, i_up], 2.5)
    np.testing.assert_allclose(H[b.index("r,r"), b.index("r,r")], pair_interaction(56.2, 8.0) + 2.5)
    # nothing else on the diagonal
    diag = np.real(np.diag(H)).copy()
    diag[[i_up, b.index("r,r"), b.index("1,r")]] = 0
    assert not np.any(diag)


def test_missing_spacing_is_reported_with_stage_label():
    b = pair_basis()
    inter = (InteractionSpec((0, 1), 56.2, ("r", "r")),)
    st_ = Stage(WaitSpec(1.0, label="idle"), GeometryState())
    with pytest.raises(KeyError, match="idle"):
        stage_hamiltonian(st_, b, inter)


def test_wait_advances_phase_by_interaction_only():
    b = pair_basis()
    inter = (InteractionSpec((0, 1), -25.6, ("r", "r")),)
    T = 0.00512
    seq = Sequence(b, (Stage(WaitSpec(T, "w"), geo(8.0)),), inter)
    psi = run_sequence(seq, basis_state(b, "r,r")).final
    np.testing.assert_allclose(psi.amplitude("r,r"), np.exp(-1j * pair_interaction(-25.6, 8.0) * T), atol=1e-13)
    untouched = run_sequence(seq, basis_state(b, "1,r")).final
    np.testing.assert_allclose(untouched.amplitude("1,r"), 1.0, atol=1e-15)


def test_blockaded_two_pi_pulse_closed_form():
    # with the control in r, the target sees a detuned drive of detuning V
    L, omega = 8.0, TWO_PI * 10
    seq = blockade_sequence(L, omega)
    b = seq.basis
    psi = run_sequence(Sequence(b, seq.stages[1:2], seq.interactions), basis_state(b, "r,1")).final
    V = pair_interaction(56.2, L)
    w = np.hypot(omega, V)
    t = 2 * np.pi / omega
    expected = (omega / w) ** 2 * np.sin(w * t / 2) ** 2
    np.testing.assert_allclose(abs(psi.amplitude("r,r")) ** 2, expected, atol=1e-12)


def test_boundaries_and_labels():
    seq = blockade_sequence()
    np.testing.assert_allclose(seq.boundaries[-1], seq.duration)
    assert seq.labels() == ["a", "b", "w", "c"]
    assert seq.stage("w").duration == 0.01
    with pytest.raises(KeyError):
        seq.stage("nope")


def test_json_roundtrip_preserves_dynamics():
    seq = blockade_sequence()
    text = json.dumps(seq.to_dict())
    back = Sequence.from_dict(json.loads(text))
    assert back.to_dict() == seq.to_dict()
    psi = basis_state(seq.basis, "1,1")
    np.testing.assert_array_equal(run_sequence(seq, psi).final.amplitudes, run_sequence(back, psi).final.amplitudes)


def test_run_is_deterministic_and_substeps_do_not_change_final():
    seq = blockade_sequence()
    psi = basis_state(seq.basis, "1,1")
    a = run_sequence(seq, psi)
    b = run_sequence(seq, psi)
    np.testing.assert_array_equal(a.final.amplitudes, b.final.amplitudes)
    traced = run_sequence(seq, psi, substeps=50)
    np.testing.assert_allclose(traced.final.amplitudes, a.final.amplitudes, atol=1e-13)
    tr = traced.trajectory
    assert len(tr.times) == 1 + 4 * 50
    assert np.all(np.diff(tr.times) > 0)
    np.testing.assert_allclose(tr.times[-1], seq.duration)
    np.testing.assert_allclose(np.sum(np.abs(tr.amplitudes) ** 2, axis=1), 1.0, atol=1e-12)
    for k, state in enumerate(a.stage_states):
        np.testing.assert_allclose(state.norm, 1.0, atol=1e-12)
    np.testing.assert_allclose(a.after(seq, "c").amplitudes, a.final.amplitudes)


def test_trajectory_window_and_integral():
    b = build_product_basis([LevelScheme(0, ("g", "e")), LevelScheme(1, ("g", "e"))])
    stages = (
        Stage(WaitSpec(1.0, "w1"), GeometryState()),
        Stage(WaitSpec(2.0, "w2"), GeometryState()),
    )
    tr = run_sequence(Sequence(b, stages), basis_state(b, "e,g"), substeps=10).trajectory
    pop = tr.level_population(0, "e")
    np.testing.assert_allclose(tr.integrate(pop), 3.0)
    np.testing.assert_allclose(tr.integrate(pop, tr.window("w2")), 2.0)
    np.testing.assert_allclose(tr.integrate(pop, tr.window("w1", "w2")), 3.0)


def test_batch_matches_single_runs():
    base = blockade_sequence()
    seqs = [base.with_spacings({"b": L, "w": L + 0.1}, (0, 1)) for L in (6.0, 7.5, 9.0)]
    init = basis_state(base.basis, "1,1")
    batch = run_sequence_batch(seqs, init.amplitudes)
    for row, s in zip(batch, seqs):
        np.testing.assert_allclose(row, run_sequence(s, init).final.amplitudes, atol=1e-12)
    other = Sequence(base.basis, base.stages[:2], base.interactions)
    with pytest.raises(ValueError):
        run_sequence_batch([base, other], init.amplitudes)
