"""Quick end-to-end check of the Python bindings."""

import json
import math

import mpg_lab_py as m


def main():
    assert abs(m.utility_f(1) - 1.0) < 1e-12
    assert abs(m.utility_f(2) - (math.e - 2) / (math.e - 1)) < 1e-12

    ce = m.analyze_counterexample()
    assert abs(ce["markov_poa"] - 7 / 16) < 1e-9
    ne = m.analyze_2x2([[2.0, 0.0], [0.0, 2.0]])
    assert abs(ne["poa"] - 0.5) < 1e-12

    game = m.Game.preset("tiny-3x3-us")
    assert game.validate() == []
    assert game.num_agents == 2 and game.has_potential
    pi = game.uniform_policy()
    assert pi.probs(0, 0, 0) == [0.25] * 4
    gap = game.ne_gap(pi)
    assert gap["ne_gap_total"] >= -1e-9
    assert game.verify_potential(trials=20)["stage_exhaustive"]
    cert = game.check_smoothness(1.0, 1.0 / (math.e - 1))
    assert cert["certified"]

    final, result = m.run_spi(game, 20, exact_q=True)
    assert len(result["logs"]) == 20
    assert result["final_evaluation"]["ne_gap_total"] < gap["ne_gap_total"]
    back = m.Policy.from_json(final.to_json())
    assert back.num_agents == 2

    report = json.loads(m.run_experiment('experiment = "counterexample"\n'))
    assert report["seed"] == 1234

    try:
        m.Game.preset("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown preset accepted")
    print("python smoke test passed")


if __name__ == "__main__":
    main()
