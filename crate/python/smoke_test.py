"""Smoke test for the rtlab Python module: sample, detect, weigh, test."""

import math

import rtlab


def main():
    # last zero before time 1 follows the arcsine law
    p = rtlab.sample_bm(1e-3, 1.0, seed=7, index=3)
    assert len(p) == 1001 and p.times[-1] == 1.0
    t = rtlab.detect("S7", p)
    assert 0.0 <= t.sigma_time <= 1.0 and not t.censored
    w = rtlab.weight("abs_b1", p, t)
    assert math.isclose(w, abs(p.values[-1]) / math.sqrt(2 / math.pi))

    cfg = rtlab.RunConfig(1e-3, horizon_cap=50.0)
    q = rtlab.sample_to_level_one(cfg, seed=11)
    assert q.bridge_monitored and max(q.running_max()) == 1.0
    s2 = rtlab.detect("S2", q)
    if not s2.censored:
        b = rtlab.azema_bundle(q, s2)
        assert all(abs(z + a - m) < 1e-9 for z, a, m in zip(b["z"], b["a"], b["m"]))
        rho = rtlab.weight("f_of_a_pseudo", q, s2, profile=lambda x: 2 * x)
        assert rho >= 0.0

    try:
        rtlab.weight("f_of_a_pseudo", q, s2, profile=lambda x: 3 * x)
    except ValueError:
        pass
    else:
        raise AssertionError("unnormalized profile accepted")

    # arcsine law of the last zero; plain grids detect it early by O(sqrt(dt))
    times = rtlab.sigma_times("S7", 4000, seed=5, dt=1e-4)
    arcsine = [2 / math.pi * math.asin(math.sqrt(s)) for s in times]
    ks = rtlab.weighted_ks(arcsine, "uniform01", threshold=0.03)
    assert ks["pass"], ks
    mean, se, n_eff = rtlab.weighted_mean(times)
    assert abs(mean - 0.5) < 4 * se and n_eff == 4000

    names = [e["id"] for e in rtlab.list_experiments()]
    assert names[0] == "E1" and len(names) == 10
    art = rtlab.run_experiment("E9", n_paths=1000, seed=3)
    assert art["verdict"] is True, [r for r in art["reports"] if not r["pass"]]
    try:
        rtlab.run_experiment("E8", overrides={"no_such_key": "1"})
    except ValueError:
        pass
    else:
        raise AssertionError("bad override accepted")
    print(f"rtlab {rtlab.__version__} smoke test ok ({len(art['reports'])} E9 reports)")


if __name__ == "__main__":
    main()
