import math

import pytest

import bip


def test_boltzmann_and_w2s():
    p = bip.boltzmann([0.0, math.log(2.0)], 1.0)
    assert p == pytest.approx([1 / 3, 2 / 3], abs=1e-12)
    out = bip.w2s_combine([0.6, 0.4], [0.9, 0.1], [0.5, 0.5])
    assert out == pytest.approx([0.93103, 0.06897], abs=1e-5)
    same = bip.w2s_combine([0.2, 0.3, 0.5], [0.1, 0.6, 0.3], [0.1, 0.6, 0.3])
    assert same == pytest.approx([0.2, 0.3, 0.5], abs=1e-12)
    with pytest.raises(bip.StructuralError):
        bip.w2s_combine([0.5, 0.5], [1.0], [1.0])


def test_gradient_and_bound():
    g = bip.ce_gradient([0.0, 0.0], 0)
    assert g == pytest.approx([-0.5, 0.5])
    r = bip.kl_bound_trial([0.0, 0.0], 0, 0.1)
    assert r["bound"] == pytest.approx(1.25e-3, rel=1e-9)
    assert r["kl"] <= r["bound"]
    t = bip.theorem(trials=20, seed=3)
    assert t["violations"] == 0
    assert t["csv"].startswith("k,eta,")


def test_suite_inference_and_retheme():
    suite = bip.generate_suite(seed=7, n_questions=14)
    assert len(suite) == 14
    assert suite == bip.generate_suite(seed=7, n_questions=14)
    run = bip.evaluate(suite, bip.oracle(0.5), parallelism=2)
    assert len(run["results"]) == 14
    assert run["table_csv"].startswith("metric,1.1,")
    assert 0.0 <= run["accuracy"] <= 1.0

    a = bip.answer_question(suite[0])
    assert a["chosen"] in ("A", "B")
    assert math.log(sum(math.exp(x) for x in a["log_posteriors"])) == pytest.approx(0.0, abs=1e-9)

    assert "wild-west" in bip.theme_ids()
    west = bip.retheme(suite, "wild-west")
    assert bip.retheme(west, "wild-west", inverse=True) == suite
    assert bip.evaluate(west)["accuracy"] == run["accuracy"]


def test_w2s_trace_and_episode():
    suite = bip.generate_suite(seed=1, n_questions=7)
    policy = bip.w2s(bip.oracle(2.0), bip.oracle(0.3), bip.oracle(2.0))
    a = bip.answer_question(suite[-1], policy)
    assert len(a["w2s_delta"]) == len(suite[-1]["episode_prefix"]["steps"])
    assert all(d >= 0.0 for d in a["w2s_delta"])

    ep = suite[0]["episode_prefix"]
    replay = bip.simulate_episode(ep["world"], ep["true_goal"], ep["initial_state"], 0.5, 10, 42)
    assert replay == bip.simulate_episode(ep["world"], ep["true_goal"], ep["initial_state"], 0.5, 10, 42)


def test_errors():
    with pytest.raises(bip.ConfigError):
        bip.evaluate([], {"magic": {}})
    with pytest.raises(bip.SuiteError):
        bip.evaluate([{"id": 1}])
