import io

import pytest

from vanetsec.sim import Mode, MetricsRecord, report


def row(load, mode, storage):
    return MetricsRecord(load, mode, 8.25, 1460.0, 0.95, storage, int(storage * 2), 100, 95)


def table(rows):
    return report.read_csv(io.StringIO(report.csv_text(rows)))


def test_csv_header_and_format():
    text = report.csv_text([row(1.0, Mode.DSDV, 880.0)])
    lines = text.splitlines()
    assert lines[0] == ("load,mode,avg_e2e_delay_ms,avg_auth_delay_ms,delivery_ratio,"
                        "avg_storage_bytes,max_storage_bytes,packets_sent,packets_delivered")
    assert lines[1] == "1,DSDV,8.2500,1460.0000,0.9500,880.00,1760,100,95"


def test_fractional_load():
    assert report.csv_text([row(0.5, Mode.GPSR, 1.0)]).splitlines()[1].startswith("0.5,GPSR,")


def test_merge_two_modes():
    sec = table([row(1.0, Mode.SECURE_PRIMITIVES, 100.0), row(2.0, Mode.SECURE_PRIMITIVES, 101.0)])
    dsdv = table([row(1.0, Mode.DSDV, 880.0), row(2.0, Mode.DSDV, 881.0)])
    header, body = report.pivot([sec, dsdv])
    assert header[:3] == ["load", "storage_secure", "storage_dsdv"]
    assert "delay_secure" in header and "delivered_dsdv" in header
    assert body[0][:3] == ["1", "100.00", "880.00"]
    assert [r[0] for r in body] == ["1", "2"]


def test_single_input_passthrough():
    t = table([row(1.0, Mode.GPSR, 200.0), row(1.0, Mode.BMFR, 201.0)])
    header, body = report.pivot([t])
    assert header[1:3] == ["storage_gpsr", "storage_bmfr"]
    assert len(body) == 1 and body[0][1:3] == ["200.00", "201.00"]


def test_mismatched_grids():
    a = table([row(1.0, Mode.GPSR, 1.0)])
    b = table([row(2.0, Mode.DSDV, 1.0)])
    with pytest.raises(report.ReportError, match="grid"):
        report.pivot([a, b])


def test_duplicate_rows():
    a = table([row(1.0, Mode.GPSR, 1.0)])
    with pytest.raises(report.ReportError, match="duplicate"):
        report.pivot([a, a])


def test_missing_cell():
    t = table([row(1.0, Mode.GPSR, 1.0), row(2.0, Mode.GPSR, 1.0), row(1.0, Mode.DSDV, 1.0)])
    with pytest.raises(report.ReportError, match="no row"):
        report.pivot([t])


def test_bad_header():
    with pytest.raises(report.ReportError):
        report.read_csv(io.StringIO("a,b\n1,2\n"))


def test_default_sweep_pivot_keeps_secure_below_dsdv(default_sweep):
    result, _ = default_sweep
    header, body = report.pivot([table(result.rows)])
    s, d = header.index("storage_secure"), header.index("storage_dsdv")
    assert len(body) == 10
    assert all(float(r[s]) < float(r[d]) for r in body)
