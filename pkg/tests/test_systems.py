"""Stock-holding systems: buffer store, raw source, energy source."""

import pytest

from batchflow.kernel import Engine, KernelError
from batchflow.systems import BufferStore, StockSource
from conftest import drive, out_series, out_ticks


# -- BufferStore (sSepA) ----------------------------------------------------

def test_buffer_bootstrap_request_on_first_tick():
    """Starting empty and below LL, the very first tick asks for stock."""
    eng = drive("sSepA", {"RT": [0.0] * 3}, 3)
    utp = out_series(eng, "UTP")
    assert utp == [(0, 1.0)]            # one request, then outstanding


def test_buffer_request_fires_on_downward_crossing():
    # Start above LL, drain below it via demand; request fires exactly when
    # the level first reads below 1.2.
    eng = drive("sSepA", {"ZT": [0.0, 0.3, 0.0, 0.0]}, 4,
                overrides={"SL": 1.4, "LL": 1.2, "INT": 0.2})
    cl = dict(out_series(eng, "CL"))
    assert cl[1] == pytest.approx(1.2)          # released 0.2 of the 0.3
    assert cl[2] == pytest.approx(1.1)          # remainder drains next tick
    assert out_ticks(eng, "UTP") == [2]


def test_buffer_latch_blocks_repeat_requests_until_restock_done():
    rt = [0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0]
    eng = drive("sSepA", {"RT": rt}, 7)
    # Bootstrap request at 0 stays outstanding through the restock run
    # (ticks 3..4); the run end at tick 5 clears it, and with the level
    # still below LL a fresh request fires the same tick.
    assert out_ticks(eng, "UTP") == [0, 5]


def test_buffer_clips_at_high_level_and_logs_overflow():
    eng = drive("sSepA", {"RT": [1.5, 1.5, 0.0]}, 3,
                overrides={"HL": 2.0})
    cl = dict(out_series(eng, "CL"))
    ovf = [(r.tick, r.value) for r in eng.trace
           if r.obj == "dut" and r.section == "OVF"]
    assert cl[0] == 1.5
    assert cl[1] == 2.0
    assert ovf == [(1, pytest.approx(1.0))]
    assert eng.objects["dut"].mech.overflow_total == pytest.approx(1.0)


def test_buffer_releases_at_rate_until_remainder_gone():
    eng = drive("sSepA", {"ZT": [0.25, 0, 0, 0, 0]}, 5,
                overrides={"SL": 1.0, "INT": 0.1, "LL": 0.0})
    pt = out_series(eng, "PT")
    assert pt == [(0, pytest.approx(0.1)), (1, pytest.approx(0.1)),
                  (2, pytest.approx(0.05))]
    assert eng.objects["dut"].mech.pending == 0.0


def test_buffer_release_limited_by_stock():
    eng = drive("sSepA", {"ZT": [1.0] + [0.0] * 4}, 5,
                overrides={"SL": 0.15, "INT": 0.1, "LL": 0.0})
    pt = out_series(eng, "PT")
    # 0.1 then the last 0.05; the unmet remainder stays pending.
    assert pt == [(0, pytest.approx(0.1)), (1, pytest.approx(0.05))]
    mech = eng.objects["dut"].mech
    assert mech.stock == 0.0
    assert mech.pending == pytest.approx(0.85)


def test_buffer_negative_demand_warned_and_ignored():
    eng = drive("sSepA", {"ZT": [-0.5, 0.0]}, 2, overrides={"SL": 1.0})
    warns = [r.section for r in eng.trace
             if r.obj == "dut" and r.section.startswith("WRN:")]
    assert warns == ["WRN:ZT_NEGATIVE"]
    assert eng.objects["dut"].mech.pending == 0.0


def test_buffer_validates_settings():
    eng = Engine()
    with pytest.raises(KernelError, match="INT"):
        eng.add_object("b", BufferStore(), {"INT": 0.0})
    with pytest.raises(KernelError, match="HL"):
        eng.add_object("b2", BufferStore(), {"HL": -1.0})


# -- StockSource (sSrcA) ----------------------------------------------------

def test_source_drains_assignment_at_rate():
    eng = drive("sSrcA", {"ZT": [0.03] + [0.0] * 4}, 5,
                overrides={"SL": 1.0, "INT": 0.01})
    pt = out_series(eng, "PT")
    assert [t for t, _ in pt] == [0, 1, 2]
    assert sum(v for _, v in pt) == pytest.approx(0.03)
    assert eng.objects["dut"].mech.stock == pytest.approx(0.97)


def test_source_whole_stock_release_is_exact():
    """Thirty unit portions drain a 30-unit stock to exactly zero."""
    zt = []
    for _ in range(30):
        zt += [1.0] + [0.0] * 99
    eng = drive("sSrcA", {"ZT": zt}, len(zt) + 200,
                overrides={"SL": 30.0, "INT": 0.01})
    mech = eng.objects["dut"].mech
    assert mech.stock == 0.0            # snapped clean, no residue
    assert mech.pending == 0.0
    total = sum(v for _, v in out_series(eng, "PT"))
    assert total == pytest.approx(30.0, abs=1e-9)


def test_source_stop_flag_halts_on_unservable_assignment():
    eng = drive("sSrcA", {"ZT": [0.02, 0.0, 0.0, 0.02, 0.0, 0.0, 0.0]}, 7,
                overrides={"SL": 0.03, "INT": 0.01, "STP": 1.0})
    # Stock 0.03 serves the first assignment and part of the second; the
    # moment stock hits zero with demand still pending, the run stops.
    assert eng.stop_requested
    assert eng.stop_reason == "stock_empty"
    assert eng.tick == 4                # stopped after the tick that drained it


def test_source_without_stop_flag_keeps_running():
    eng = drive("sSrcA", {"ZT": [0.02, 0, 0, 0.02, 0, 0, 0]}, 7,
                overrides={"SL": 0.03, "INT": 0.01, "STP": 0.0})
    assert not eng.stop_requested
    assert eng.tick == 7


def test_source_validates_settings():
    eng = Engine()
    with pytest.raises(KernelError, match="INT"):
        eng.add_object("s", StockSource(), {"INT": -1.0})
    with pytest.raises(KernelError, match="SL"):
        eng.add_object("s2", StockSource(), {"SL": -5.0})


# -- EnergySource (sSrcP) ---------------------------------------------------

def test_energy_source_window():
    """Switch on at tick 2 with amplitude 120, off at tick 6."""
    zp = [0, 0, 120.0, 0, 0, 0, 0, 0]
    zof = [0, 0, 0, 0, 0, 0, 1.0, 0]
    eng = drive("sSrcP", {"ZP": zp, "ZOF": zof}, 8)
    pp = out_series(eng, "PP")
    assert pp == [(2, 120.0), (3, 120.0), (4, 120.0), (5, 120.0)]
    assert eng.objects["dut"].mech.delivered_total == pytest.approx(480.0)


def test_energy_source_ignores_nonpositive_start():
    eng = drive("sSrcP", {"ZP": [-5.0, 0.0, 0.0]}, 3)
    assert out_series(eng, "PP") == []
    warns = [r.section for r in eng.trace if r.section.startswith("WRN:")]
    assert warns == ["WRN:ZP_IGNORED"]


def test_energy_source_overwrite_logged():
    eng = drive("sSrcP", {"ZP": [100.0, 0, 150.0, 0]}, 4)
    pp = out_series(eng, "PP")
    assert pp == [(0, 100.0), (1, 100.0), (2, 150.0), (3, 150.0)]
    warns = [(r.tick, r.section) for r in eng.trace
             if r.section.startswith("WRN:")]
    assert warns == [(2, "WRN:ZP_OVERWRITE")]


def test_energy_source_off_and_on_same_tick_restarts():
    # ZOF is processed before ZP, so a simultaneous pair means restart.
    eng = drive("sSrcP", {"ZP": [80.0, 0, 90.0, 0], "ZOF": [0, 0, 1.0, 0]},
                4)
    pp = out_series(eng, "PP")
    assert pp == [(0, 80.0), (1, 80.0), (2, 90.0), (3, 90.0)]
    # No overwrite warning: the off arrived first.
    assert [r for r in eng.trace if r.section.startswith("WRN:")] == []
