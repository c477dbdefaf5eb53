import numpy as np
import pytest

from varqsim.circuit import Gate, ParameterizedCircuit, build_ansatz, initial_parameters
from varqsim.evolve import (BuresMetrics, DualParams, EvolutionConfig,
                            EvolutionTrace, SaqiteParams, bures_metrics,
                            dualqte_evolve, evolve, realtime_error_bound,
                            saqite_evolve, varqte_evolve)
from varqsim.oracle import exact_imag_evolve, exact_real_evolve
from varqsim.pauli import PauliSum, build_model
from varqsim.state import Statevector


def single_ry():
    return ParameterizedCircuit(1, 1, [Gate("RY", (1,), index=0)])


def single_rx():
    return ParameterizedCircuit(1, 1, [Gate("RX", (1,), index=0)])


X1 = PauliSum([(1.0, "X")])


def test_grid():
    assert EvolutionConfig(t_total=1.5, dt=0.01).grid() == (150, pytest.approx(0.01))
    n, dt = EvolutionConfig(t_total=1.0, dt=0.3).grid()
    assert n == 4 and dt == pytest.approx(0.25)


def test_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(mode="sideways")
    with pytest.raises(ValueError):
        EvolutionConfig(engine="magic")
    with pytest.raises(ValueError):
        EvolutionConfig(dt=0.0)
    with pytest.raises(ValueError):
        EvolutionConfig(t_total=-1.0)


def test_varqte_imaginary_tracks_exact_ite():
    # the one-parameter RY manifold contains the exact imaginary-time
    # trajectory of H = X, so the variational path must coincide with it
    c = single_ry()
    cfg = EvolutionConfig(mode="imaginary", t_total=1.0, dt=1e-3)
    tr = varqte_evolve(c, X1, np.zeros(1), cfg)
    refs = exact_imag_evolve(X1, Statevector(1, np.array([1.0, 0.0], complex)),
                             tr.times)
    m = bures_metrics(tr, c, refs)
    assert np.all(m.fidelities > 1.0 - 1e-5)
    assert m.i_b < 1e-2
    # energies decrease monotonically toward the ground energy -1
    assert np.all(np.diff(tr.energies) < 1e-12)
    assert tr.energies[-1] < -0.95


def test_varqte_real_tracks_exact_schroedinger():
    # RX(theta)|0> with H = X: exact solution is theta(t) = 2t
    c = single_rx()
    cfg = EvolutionConfig(mode="real", t_total=1.0, dt=1e-3)
    tr = varqte_evolve(c, X1, np.zeros(1), cfg)
    assert tr.thetas[-1, 0] == pytest.approx(2.0, abs=1e-6)
    refs = exact_real_evolve(X1, Statevector(1, np.array([1.0, 0.0], complex)),
                             tr.times)
    m = bures_metrics(tr, c, refs)
    assert np.all(m.fidelities > 1.0 - 1e-10)
    # energy is conserved under real-time evolution
    assert np.max(np.abs(tr.energies - tr.energies[0])) < 1e-10


def test_varqte_trace_shapes_and_observables():
    c = build_ansatz("efficient_su2", n=2, reps=1)
    h = build_model("tfim", 2, J=0.5, h=-1.0)
    obs = {"zz": PauliSum([(1.0, "ZZ")]), "x1": PauliSum([(1.0, "IX")])}
    cfg = EvolutionConfig(mode="imaginary", t_total=0.05, dt=0.01,
                          observables=obs, store_matrices=True)
    theta0 = initial_parameters(c, "plus")
    tr = varqte_evolve(c, h, theta0, cfg)
    assert tr.times.shape == (6,)
    assert tr.thetas.shape == (6, c.d)
    assert tr.theta_dots.shape == (5, c.d)
    assert set(tr.extras) == {"zz", "x1"}
    assert len(tr.gs) == 5 and len(tr.bs) == 5
    state = c.simulate(tr.thetas[3])
    from varqsim.state import expectation
    assert tr.extras["zz"][3] == pytest.approx(expectation(state, obs["zz"]))
    # without store_matrices the matrix lists stay empty
    cfg2 = EvolutionConfig(mode="imaginary", t_total=0.05, dt=0.01)
    tr2 = varqte_evolve(c, h, theta0, cfg2)
    assert tr2.gs == [] and tr2.bs == []


def test_varqte_sampled_imaginary_runs():
    c = build_ansatz("efficient_su2", n=2, reps=1)
    h = build_model("tfim", 2, J=0.5, h=-1.0)
    cfg = EvolutionConfig(mode="imaginary", t_total=0.03, dt=0.01,
                          shots=2000, seed=7)
    tr = varqte_evolve(c, h, initial_parameters(c, "plus"), cfg)
    assert np.all(np.isfinite(tr.energies))
    assert np.all(np.isfinite(tr.thetas))
    # recorded energies are exact diagnostics even on the sampled route
    from varqsim.state import expectation
    assert tr.energies[0] == pytest.approx(
        expectation(c.simulate(tr.thetas[0]), h))


def test_varqte_sampled_real_not_implemented():
    c = single_rx()
    cfg = EvolutionConfig(mode="real", t_total=0.1, dt=0.05, shots=100)
    with pytest.raises(NotImplementedError):
        varqte_evolve(c, X1, np.zeros(1), cfg)


def test_saqite_single_parameter_matches_varqte():
    # with d = 1 every SPSA sample is exact up to O(eps^2), so SA-QITE with
    # no momentum reproduces the linear-solve trajectory
    c = single_ry()
    cfg_exact = EvolutionConfig(mode="imaginary", t_total=0.5, dt=0.01)
    ref = varqte_evolve(c, X1, np.zeros(1), cfg_exact)
    cfg = EvolutionConfig(mode="imaginary", t_total=0.5, dt=0.01, engine="saqite",
                          saqite=SaqiteParams(samples=1, tau1=0.0, tau2=0.0,
                                              perturbation=1e-4))
    tr = saqite_evolve(c, X1, np.zeros(1), cfg)
    assert abs(tr.thetas[-1, 0] - ref.thetas[-1, 0]) < 1e-4


def test_saqite_runs_with_momentum_and_decay():
    c = build_ansatz("efficient_su2", n=2, reps=1)
    h = build_model("tfim", 2, J=0.5, h=-1.0)
    cfg = EvolutionConfig(mode="imaginary", t_total=0.1, dt=0.02, engine="saqite",
                          seed=3,
                          saqite=SaqiteParams(samples=4, tau1=0.9, tau2=0.5,
                                              perturbation=1e-2, exact_init=True,
                                              m_decay=0.5))
    tr = saqite_evolve(c, h, initial_parameters(c, "plus"), cfg)
    assert tr.thetas.shape == (6, c.d)
    assert np.all(np.isfinite(tr.energies))
    # same seed, same trajectory
    tr2 = saqite_evolve(c, h, initial_parameters(c, "plus"), cfg)
    assert np.array_equal(tr.thetas, tr2.thetas)


def test_saqite_rejects_real_mode():
    cfg = EvolutionConfig(mode="real", t_total=0.1, dt=0.05, engine="saqite")
    with pytest.raises(ValueError):
        saqite_evolve(single_ry(), X1, np.zeros(1), cfg)


def test_dualqte_matches_varqte_small_step():
    c = single_ry()
    cfg_ref = EvolutionConfig(mode="imaginary", t_total=0.2, dt=0.01)
    ref = varqte_evolve(c, X1, np.zeros(1), cfg_ref)
    cfg = EvolutionConfig(
        mode="imaginary", t_total=0.2, dt=0.01, engine="dualqte",
        dual=DualParams(eta=0.5, first_iters=400, iters=200, loss_tol=1e-14))
    tr = dualqte_evolve(c, X1, np.zeros(1), cfg)
    assert abs(tr.thetas[-1, 0] - ref.thetas[-1, 0]) < 1e-3
    assert len(tr.inner_iters) == 20
    assert len(tr.dual_losses) == 20


def test_dualqte_warmstart_reduces_inner_iterations():
    c = single_ry()
    common = dict(mode="imaginary", t_total=0.3, dt=0.05, engine="dualqte")
    warm = dualqte_evolve(c, X1, np.zeros(1), EvolutionConfig(
        **common, dual=DualParams(eta=0.5, first_iters=300, iters=300,
                                  warmstart=True, loss_tol=1e-12)))
    cold = dualqte_evolve(c, X1, np.zeros(1), EvolutionConfig(
        **common, dual=DualParams(eta=0.5, first_iters=300, iters=300,
                                  warmstart=False, loss_tol=1e-12)))
    assert sum(warm.inner_iters[1:]) < sum(cold.inner_iters[1:])
    assert abs(warm.thetas[-1, 0] - cold.thetas[-1, 0]) < 1e-4


def test_dualqte_decoupled_dtau_matches_coupled():
    # the time perturbation of the dual loss can be chosen independently of
    # the integration step; both settings must approximate the same theta_dot
    c = single_ry()
    cfg_ref = EvolutionConfig(mode="imaginary", t_total=0.2, dt=0.01)
    ref = varqte_evolve(c, X1, np.zeros(1), cfg_ref)
    cfg = EvolutionConfig(
        mode="imaginary", t_total=0.2, dt=0.01, engine="dualqte",
        dual=DualParams(eta=0.5, first_iters=400, iters=200, loss_tol=1e-16,
                        dtau=1e-3))
    tr = dualqte_evolve(c, X1, np.zeros(1), cfg)
    assert tr.dual_dtau == 1e-3
    assert abs(tr.thetas[-1, 0] - ref.thetas[-1, 0]) < 1e-3

    coupled = dualqte_evolve(c, X1, np.zeros(1), EvolutionConfig(
        mode="imaginary", t_total=0.2, dt=0.01, engine="dualqte",
        dual=DualParams(eta=0.5, first_iters=400, iters=200, loss_tol=1e-16)))
    assert coupled.dual_dtau == pytest.approx(0.01)

    with pytest.raises(ValueError):
        dualqte_evolve(c, X1, np.zeros(1), EvolutionConfig(
            mode="imaginary", t_total=0.2, dt=0.01, engine="dualqte",
            dual=DualParams(dtau=-1.0)))


def test_realtime_bound_dual_route_uses_dtau():
    # hand-built trace: one step of size 0.1, loss L at perturbation dtau,
    # variance v -> bound = 0.1 * sqrt(v + 2 L / dtau^2)
    v, L, dtau = 0.3, 2e-7, 1e-3
    tr = EvolutionTrace(mode="real", times=np.array([0.0, 0.1]),
                        thetas=np.zeros((2, 1)), energies=np.zeros(2),
                        variances=np.array([v, v]),
                        theta_dots=np.zeros((1, 1)),
                        dual_losses=[L], dual_dtau=dtau)
    bound = realtime_error_bound(tr)
    assert bound[1] == pytest.approx(0.1 * np.sqrt(v + 2 * L / dtau**2))


def test_dual_inner_divergence_guard():
    # a stiff quadratic with an overshooting step: the loss rises every
    # iteration and the runaway trip must fire
    from varqsim.evolve import _dual_step
    fid = lambda a, b: 1.0 - 50.0 * float((b - a) @ (b - a))
    with pytest.raises(RuntimeError):
        _dual_step(np.eye(1), np.zeros(1), np.array([1.0]), 0.01, fid,
                   DualParams(eta=1.0), np.zeros(1), 100)


def test_evolve_dispatcher():
    c = single_ry()
    cfg = EvolutionConfig(mode="imaginary", t_total=0.05, dt=0.01)
    a = evolve(c, X1, np.zeros(1), cfg)
    b = varqte_evolve(c, X1, np.zeros(1), cfg)
    assert np.array_equal(a.thetas, b.thetas)


def test_bures_metrics_self_reference():
    c = single_ry()
    cfg = EvolutionConfig(mode="imaginary", t_total=0.05, dt=0.01)
    tr = varqte_evolve(c, X1, np.zeros(1), cfg)
    refs = [c.simulate(th) for th in tr.thetas]
    m = bures_metrics(tr, c, refs)
    assert isinstance(m, BuresMetrics)
    assert np.allclose(m.fidelities, 1.0)
    # D_B amplifies fidelity roundoff to sqrt scale
    assert np.allclose(m.d_b, 0.0, atol=1e-7)
    assert m.i_b == pytest.approx(0.0, abs=1e-7)
    with pytest.raises(ValueError):
        bures_metrics(tr, c, refs[:-1])


def test_bures_metrics_hand_value():
    # distance to a fixed orthogonal reference: F = 0, D_B = sqrt(2)
    c = single_ry()
    cfg = EvolutionConfig(mode="imaginary", t_total=0.02, dt=0.01)
    tr = varqte_evolve(c, X1, np.zeros(1), cfg)
    refs = []
    for th in tr.thetas:
        amps = c.simulate(th).amps
        refs.append(Statevector(1, np.array([-np.conj(amps[1]),
                                             np.conj(amps[0])])))
    m = bures_metrics(tr, c, refs)
    assert np.allclose(m.fidelities, 0.0, atol=1e-14)
    assert np.allclose(m.d_b, np.sqrt(2.0))
    assert m.i_b == pytest.approx(np.sqrt(2.0))


def test_realtime_error_bound_matrix_route():
    c = single_rx()
    cfg = EvolutionConfig(mode="real", t_total=0.5, dt=0.01,
                          store_matrices=True)
    tr = varqte_evolve(c, X1, np.zeros(1), cfg)
    bound = realtime_error_bound(tr)
    assert bound.shape == tr.times.shape
    assert bound[0] == 0.0
    assert np.all(np.diff(bound) >= -1e-15)
    # exact tracking: the bound stays at the roundoff floor
    assert bound[-1] < 1e-6
    # hand-check the accumulation against the stored matrices
    want = 0.0
    for i in range(len(tr.times) - 1):
        td = tr.theta_dots[i]
        quad = td @ tr.gs[i] @ td - 2.0 * (td @ tr.bs[i])
        want += (tr.times[i + 1] - tr.times[i]) * np.sqrt(
            max(tr.variances[i] + quad, 0.0))
    assert bound[-1] == pytest.approx(want)


def test_realtime_error_bound_dual_route():
    c = single_rx()
    cfg = EvolutionConfig(mode="real", t_total=0.2, dt=0.02, engine="dualqte",
                          dual=DualParams(eta=0.5, first_iters=300, iters=300,
                                          loss_tol=1e-14))
    tr = dualqte_evolve(c, X1, np.zeros(1), cfg)
    bound = realtime_error_bound(tr)
    assert np.all(np.diff(bound) >= 0.0)
    assert np.all(np.isfinite(bound))


def test_realtime_error_bound_guards():
    c = single_ry()
    cfg = EvolutionConfig(mode="imaginary", t_total=0.02, dt=0.01)
    tr = varqte_evolve(c, X1, np.zeros(1), cfg)
    with pytest.raises(ValueError):
        realtime_error_bound(tr)
    cfg = EvolutionConfig(mode="real", t_total=0.02, dt=0.01)
    tr = varqte_evolve(single_rx(), X1, np.zeros(1), cfg)
    with pytest.raises(ValueError):
        realtime_error_bound(tr)  # no stored matrices, no dual losses


def test_trace_to_csv():
    c = single_ry()
    cfg = EvolutionConfig(mode="imaginary", t_total=0.02, dt=0.01)
    tr = varqte_evolve(c, X1, np.zeros(1), cfg)
    text = tr.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "t,theta_0,energy,variance,D_B,bound"
    assert len(lines) == 4
    assert lines[1].split(",")[4] == "nan"
    text2 = tr.to_csv(d_b=np.arange(3.0), bound=np.arange(3.0) * 2)
    row = text2.strip().split("\n")[2].split(",")
    assert float(row[4]) == 1.0 and float(row[5]) == 2.0
