"""Smoke test for the pseudotex_py extension module.

Build and install it first, e.g. `maturin develop -m crates/py/Cargo.toml
--features extension-module`, then run `python python/smoke_test.py`.
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import pseudotex_py as pt


def check_distortion():
    offsets = pt.distortion_offsets(alpha=2.0, speed=90.0, n=20000, seed=1)
    flat = [v for pair in offsets for v in pair]
    assert max(abs(v) for v in flat) <= 1.8
    var = sum(v * v for v in flat) / len(flat)
    assert abs(var / 1.08 - 1) < 0.03, var


def check_signal():
    wave = pt.synthesize(1.0, 0.2, 90.0, 2.0, 48000.0)
    flips = sum(1 for a, b in zip(wave, wave[1:]) if (a < 0) != (b < 0))
    assert abs(flips - 36) <= 1, flips


def check_staircase():
    s = pt.Staircase(1.0)
    s.press("increase")
    s.press("slight_decrease")
    assert math.isclose(s.multiplier, 10 ** 0.03, rel_tol=1e-12)
    try:
        s.press("sideways")
    except ValueError:
        pass
    else:
        raise AssertionError("bad button accepted")


def check_stats():
    gof = pt.chisq_gof([80, 20], [50, 50])
    assert gof["statistic"] == 36.0 and gof["p_value"] < 1e-8
    anova = pt.oneway_anova([[1, 2, 3], [2, 3, 4], [5, 6, 7.5]])
    assert (anova["df_between"], anova["df_within"]) == (2, 6)
    assert len(pt.tukey_hsd([[1, 2, 3], [2, 3, 4], [5, 6, 7.5]])) == 3
    assert abs(pt.studentized_range_sf(3.5, 6, 54.0) - 0.1499093) < 1e-6


def check_pipeline():
    obs = pt.ObserverModel(sigma=0.02)
    assert math.isclose(obs.mean_roughness(1.0, 3.0), 1.05)
    with tempfile.TemporaryDirectory() as tmp:
        rows = pt.simulate("comparison", participants=2, seed=3, observer=obs, out=tmp)
        assert len(rows) == 240
        assert (Path(tmp) / "logs" / "p02.jsonl").exists()
        report = pt.analyze(str(Path(tmp) / "summary.csv"), out=tmp)
        chosen = sum(c["oscillatory"] for c in report["comparison"]["conditions"])
        assert chosen == sum(1 for r in rows if r["chose_oscillatory"])
        assert (Path(tmp) / "tests.csv").exists()


def check_protocol():
    conn = pt.Connection(base_seed=5)
    create = {"seq": 1, "type": "session_create",
              "payload": {"participant_id": "p01", "study": "adjustment"}}
    replies = [json.loads(f) for f in conn.handle_frame(json.dumps(create))]
    assert replies[0]["type"] == "session_created"
    assert replies[0]["payload"]["trials"] == 60
    sample = {"seq": 2, "type": "pointer_sample", "payload": {"t": 0.0, "x": -5.0, "y": -5.0}}
    replies = [json.loads(f) for f in conn.handle_frame(json.dumps(sample))]
    assert replies[0]["type"] == "render_update"
    bad = [json.loads(f) for f in conn.handle_frame("{")]
    assert bad[0]["payload"]["code"] == "malformed"
    assert [d for d, _ in conn.wire_log()][:3] == ["in", "out", "out"]


def main():
    checks = [check_distortion, check_signal, check_staircase, check_stats, check_pipeline, check_protocol]
    for check in checks:
        check()
        print(f"ok  {check.__name__}")
    print(f"{len(checks)} checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
