"""Smoke test for the pyscenmon extension.

    pip install -e crates/python --no-build-isolation
    python python/smoke.py
"""

import math

import pyscenmon as sm


def const_speed_csv(v, seconds=5.0, dt=0.5):
    rows = ["time,id,s,v,a,d,theta,length,width"]
    for k in range(int(seconds / dt) + 1):
        t = k * dt
        rows.append(f"{t},SV,{10 + v * t},{v},0,5.25,0,4.5,1.8")
    return "\n".join(rows) + "\n"


def main():
    f = sm.parse("G[2,3](v_gt(SV, 5))")
    assert f.kind == "globally", f.kind
    assert sm.parse(str(f)) == f
    assert len(f.preorder()) == 2

    try:
        sm.parse("G[3,2] p")
    except sm.ParseError as e:
        assert "malformed interval" in e.args[0]
    else:
        raise AssertionError("malformed interval accepted")

    trace = sm.Trace.from_csv(const_speed_csv(6.0))
    assert trace.vehicles == ["SV"] and len(trace) == 11
    res = sm.evaluate(f, trace)
    assert res["verdict"] is True
    assert math.isclose(res["robustness"], 1.0)
    assert len(res["nodes"][0]["robustness"]) == len(trace.times)

    try:
        sm.evaluate("foo(SV)", trace)
    except sm.EvalError as e:
        assert "aheadOf" in str(e)
    else:
        raise AssertionError("unknown atom accepted")

    assert abs(sm.d_rss_lon(27.78, 27.78) - 48.29) < 0.01
    assert abs(sm.d_rss_lat(0.0, 0.0) - 1.08) < 0.01
    assert sm.d_rss_lon(27.78, 27.78, rho=1.0) > sm.d_rss_lon(27.78, 27.78)
    assert "aheadOf(vehicle, vehicle)" in sm.atoms()

    entries = sm.catalog("ext")
    assert len(entries) == 24
    for e in entries:
        sm.parse(e["formula"])

    for index in (1, 2, 13, 20):
        g = sm.generate(index, seed=3)
        s = sm.scenario_formula(index, "base")
        out = sm.evaluate(s, g["trace"], road=g["road"], vehicles=g["vehicles"], lanes=g["lanes"])
        assert out["verdict"], f"scenario {index} does not hold on its generated trace"

    found = sm.exemplify("F(v_gt(SV, 30))", duration=5.0, seed=5)
    assert found is not None
    example, rob = found
    assert rob > 0 and max(v for v in example.channel("SV", "v") if v is not None) > 30
    assert sm.Trace.from_csv(example.to_csv()).times == example.times
    assert sm.exemplify("v_gt(SV, 5) & !v_gt(SV, 5)", budget=40) is None

    print("pyscenmon smoke test passed")


if __name__ == "__main__":
    main()
