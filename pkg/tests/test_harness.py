import math

import numpy as np
import pytest

from exitlab.chain import sigma_law
from exitlab.errors import ExitlabError
from exitlab.harness import (
    ComparisonReport,
    Prediction,
    derive_seed,
    emit_plot_data,
    exit_point_stats,
    ks_distance,
    levy_distance,
    run_convergence_study,
    write_study_outputs,
)
from exitlab.model import ChainSpec
from exitlab.sde import ExitSample

from conftest import make_model

SYM = ChainSpec(np.array([[-1.0, 1.0], [1.0, -1.0]]), np.array([1.0, 0.0]))


def atom_law(at=0.5):
    return sigma_law(ChainSpec.single(), [at])


def test_ks_against_single_atom():
    law = atom_law()
    assert ks_distance([0.5, 0.5, 0.5], law) == 0.0
    assert ks_distance([0.2, 0.8], law) == pytest.approx(0.5)
    # any continuous sample is at least half a jump away from an atomic law
    x = np.random.default_rng(0).uniform(0.49, 0.51, 1000)
    assert ks_distance(x, law) >= 0.5 - 1e-12


def test_ks_is_exact_supremum():
    law = sigma_law(SYM, [0.3, 0.6])
    x = np.random.default_rng(2).uniform(0.0, 1.0, 200)
    grid = np.unique(np.concatenate([np.linspace(-0.1, 1.1, 20001), x, [0.3, 0.6]]))
    emp = np.searchsorted(np.sort(x), grid, side="right") / x.size
    brute = np.max(np.abs(emp - law.cdf(grid)))
    ks = ks_distance(x, law)
    assert ks >= brute - 1e-12 and ks <= brute + 0.01


def test_ks_input_checks():
    with pytest.raises(ValueError):
        ks_distance([], atom_law())
    with pytest.raises(ExitlabError):
        ks_distance([1.0, 1.0], atom_law(), censored=np.array([True, True]))


def test_levy_distance_sees_closeness_ks_misses():
    law = atom_law()
    x = np.random.default_rng(0).uniform(0.49, 0.51, 1000)
    assert levy_distance(x, law) <= 0.0101
    assert levy_distance([0.5] * 10, law) < 1e-5


def test_hit_rate_of_uniform_circle_exits():
    n = 100_000
    th = np.random.default_rng(4).uniform(0, 2 * math.pi, n)
    samples = [ExitSample(i, 0, False, 1.0, 0.5, np.array([math.cos(t), math.sin(t)]), 0) for i, t in enumerate(th[:20000])]
    stats = exit_point_stats(samples, np.array([[1.0, 0.0]]), 0.2)
    oracle = 2 * math.asin(0.1) / math.pi
    assert oracle == pytest.approx(0.063769, abs=1e-6)
    assert stats.hit_rate == pytest.approx(oracle, abs=4 * math.sqrt(oracle / 20000))
    assert stats.n == 20000


def test_confusion_table_and_censoring():
    targets = np.array([[1.0, 0.0], [0.0, 1.0]])
    samples = [
        ExitSample(0, 0, False, 1.0, 0.3, np.array([1.0, 0.05]), 0),
        ExitSample(1, 0, False, 1.0, 0.3, np.array([0.1, 0.99]), 0),
        ExitSample(2, 0, False, 1.0, 0.3, np.array([0.0, 1.0]), 1),
        ExitSample(3, 0, True, 1.0, 1.0, np.array([0.0, 0.0]), 1),
    ]
    stats = exit_point_stats(samples, targets, 0.2)
    assert stats.n == 3
    assert stats.hit_rate == pytest.approx(2 / 3)
    assert stats.confusion.tolist() == [[1, 1], [0, 1]]
    assert stats.per_state_hit == {0: 0.5, 1: 1.0}
    with pytest.raises(ValueError):
        exit_point_stats(samples, targets, 0.0)


def test_seed_derivation_is_stable_and_distinct():
    assert derive_seed(7, 0, 0) == derive_seed(7, 0, 0)
    assert len({derive_seed(7, i, r) for i in range(3) for r in range(5)}) == 15


def _offset_prediction():
    model = make_model("offset_disk")
    law = sigma_law(model.chain, [0.32])
    return model, Prediction(np.array([0.32]), np.array([[1.0, 0.0]]), law, {0: 1.0})


def test_single_eps_study_has_undefined_trends(tmp_path):
    model, pred = _offset_prediction()
    rep = run_convergence_study(model, [0.5], 40, seed=1, replications=2, h=0.02, prediction=pred)
    assert rep.verdicts["ks_nonincreasing"] is None and rep.verdicts["hit_nondecreasing"] is None
    assert rep.verdicts["low_power"] is True
    assert len(rep.ks) == 1 and len(rep.ks[0]) == 2


def test_study_outputs_are_deterministic(tmp_path):
    model, pred = _offset_prediction()
    outs = []
    for run in range(2):
        rep = run_convergence_study(model, [0.5, 0.45], 30, seed=3, replications=2, h=0.02, prediction=pred)
        d = write_study_outputs(rep, tmp_path / f"r{run}")
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]
    assert set(outs[0]) == {"summary.json", "cdf_overlay.csv", "cdf_overlay.svg", "exit_points.csv"}
    assert outs[0]["cdf_overlay.csv"].startswith(b"lambda,law_cdf,emp_eps_0.5,emp_eps_0.45\n")


def test_unsorted_eps_grid_rejected():
    model, pred = _offset_prediction()
    with pytest.raises(ValueError):
        run_convergence_study(model, [0.4, 0.5], 10, seed=0, prediction=pred)


def test_empty_report_plot_data(tmp_path):
    csv_path, svg_path = emit_plot_data(ComparisonReport(eps=[], n=0, eta=0.2, replications=0), tmp_path)
    assert csv_path.read_text() == "lambda,law_cdf\n"
    assert svg_path.read_text().startswith("<svg")


def test_all_exits_at_prediction_and_huge_eta():
    pts = [np.array([1.0, 0.0])] * 5 + [np.array([-1.0, 0.0])] * 5
    samples = [ExitSample(i, 0, False, 1.0, 0.3, p, 0) for i, p in enumerate(pts)]
    assert exit_point_stats(samples[:5], np.array([[1.0, 0.0]]), 0.01).hit_rate == 1.0
    assert exit_point_stats(samples, np.array([[1.0, 0.0]]), 2.0).hit_rate == 1.0


def test_ks_of_exact_draws_obeys_dkw():
    from exitlab.chain import sample_sigma_mc

    law = sigma_law(SYM, [0.3, 0.6])
    for seed in range(5):
        draws = sample_sigma_mc(SYM, [0.3, 0.6], 10_000, seed=seed).sigma
        assert ks_distance(draws, law) <= 1.36 / math.sqrt(10_000) + 0.005


def test_frozen_chain_targets_single_atom():
    """With Q = 0 the chain never leaves its initial state k0 = 1."""
    from exitlab.sde import SimConfig, simulate_batch

    model = make_model("two_state", Q=[[0.0, 0.0], [0.0, 0.0]])
    law = sigma_law(model.chain, [0.3, 0.6])
    assert len(law.atoms) == 2 and law.atoms[0].mass == 1.0 and law.atoms[1].mass == 0.0
    assert law.cdf(0.3) == 1.0 and law.cdf_left(0.3) == 0.0
    batch = simulate_batch(model, SimConfig(eps=0.45, seed=2), 200)
    assert np.all(batch.state == 0) and np.all(batch.jumps == 0)
    pred = Prediction(np.array([0.3, 0.6]), np.array([[0.9761, 0.2173], [0.2173, 0.9761]]), law, {0: 1.0, 1: 0.0})
    rep = run_convergence_study(model, [0.45], 100, seed=0, replications=3, prediction=pred)
    assert rep.hit_median[0] > 0.3


def test_study_with_one_sample_is_low_power():
    model, pred = _offset_prediction()
    rep = run_convergence_study(model, [0.5, 0.45], 1, seed=0, replications=2, h=0.02, prediction=pred)
    assert rep.verdicts["low_power"] and len(rep.ks) == 2


def test_predict_single_state_offset_model():
    from exitlab.harness import predict

    pred = predict(make_model("offset_disk"), lambda_grid=np.linspace(0.0, 1.0, 8))
    assert pred.m[0] == pytest.approx(0.32, abs=1e-3)
    assert np.allclose(pred.x[0], [1.0, 0.0], atol=1e-3)
    assert len(pred.law.atoms) == 1 and pred.law.atoms[0].location == pytest.approx(pred.m[0])


def test_predict_symmetric_model_raises():
    from exitlab.errors import AmbiguousMinimizerError
    from exitlab.harness import predict

    model = make_model("ou_disk")
    with pytest.raises(AmbiguousMinimizerError):
        predict(model)
    lenient = predict(model, allow_ambiguous=True)
    assert lenient.ambiguous == (0,) and np.all(np.isnan(lenient.x))
