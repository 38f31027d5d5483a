import logging

import numpy as np
import pytest

from cgae.data import IngestError, SiteSeries, SynthConfig, align, export_csv, ingest_csv, synth_generate
from cgae.forecasting import persistence_ensemble

HEADER = "site_id,latitude,longitude,timestamp,ghi\n"


def write(tmp_path, body, name="in.csv"):
    path = tmp_path / name
    path.write_text(HEADER + body, encoding="utf-8")
    return path


def test_empty_file_warns(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        assert ingest_csv(write(tmp_path, "")) == []
    assert "no data rows" in caplog.text


def test_grouping_two_sites(tmp_path):
    body = ("a,40,-80,2016-01-01T00:00,0\n"
            "b,41,-81,2016-01-01T00:00,5\n"
            "a,40,-80,2016-01-01T00:30,1\n"
            "b,41,-81,2016-01-01T00:30,6\n")
    sites = ingest_csv(write(tmp_path, body))
    assert [s.site_id for s in sites] == ["a", "b"]
    assert [len(s) for s in sites] == [2, 2]
    np.testing.assert_array_equal(sites[1].values, [5.0, 6.0])


def test_duplicate_row_named(tmp_path):
    body = "a,40,-80,2016-01-01T00:00,0\na,40,-80,2016-01-01T00:00,3\n"
    with pytest.raises(IngestError, match="duplicate row for site 'a' at 2016-01-01T00:00"):
        ingest_csv(write(tmp_path, body))


def test_negative_rows_rejected_with_warning(tmp_path, caplog):
    body = "a,40,-80,2016-01-01T00:00,1\na,40,-80,2016-01-01T00:30,-4\na,40,-80,2016-01-01T01:00,2\n"
    with caplog.at_level(logging.WARNING):
        (site,) = ingest_csv(write(tmp_path, body))
    assert "negative GHI" in caplog.text
    assert site.values[0] == 1.0 and np.isnan(site.values[1]) and site.values[2] == 2.0


def test_off_grid_timestamps_listed(tmp_path):
    body = "a,40,-80,2016-01-01T00:00,1\na,40,-80,2016-01-01T00:40,2\n"
    with pytest.raises(IngestError, match="2016-01-01T00:40"):
        ingest_csv(write(tmp_path, body))


def test_sub_minute_timestamps_rejected(tmp_path):
    with pytest.raises(IngestError, match="whole minute"):
        ingest_csv(write(tmp_path, "a,40,-80,2016-01-01T00:00:10,1\n"))


def test_gaps_become_missing(tmp_path):
    body = "a,40,-80,2016-01-01T00:00,1\na,40,-80,2016-01-01T01:30,2\n"
    (site,) = ingest_csv(write(tmp_path, body))
    assert len(site) == 4 and site.missing == 2


def test_utc_offsets_resolved(tmp_path):
    body = "a,40,-80,2016-01-01T02:00+02:00,1\na,40,-80,2016-01-01T00:30Z,2\n"
    (site,) = ingest_csv(write(tmp_path, body))
    assert str(site.timestamps[0]) == "2016-01-01T00:00"
    np.testing.assert_array_equal(site.values, [1.0, 2.0])


def test_bad_header(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("site,lat,lon,time,value\n")
    with pytest.raises(IngestError, match="expected header"):
        ingest_csv(path)


def test_export_ingest_round_trip(tmp_path):
    sites, _ = synth_generate(SynthConfig(nodes=3, days=3, seed=4))
    sites[1].values[10:14] = np.nan
    export_csv(sites, tmp_path / "a.csv")
    back = ingest_csv(tmp_path / "a.csv")
    for s, b in zip(sites, back):
        assert (s.site_id, s.latitude, s.longitude) == (b.site_id, b.latitude, b.longitude)
        np.testing.assert_array_equal(s.timestamps, b.timestamps)
        np.testing.assert_array_equal(s.values, b.values)
    export_csv(back, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_align_pads_shorter_sites():
    t = np.datetime64("2016-01-01T00:00") + np.timedelta64(30, "m") * np.arange(4)
    a = SiteSeries("a", 0, 0, t, [1, 2, 3, 4])
    b = SiteSeries("b", 0, 0, t[1:3], [5, 6])
    grid, values = align([a, b])
    assert grid.size == 4
    np.testing.assert_array_equal(values[1], [np.nan, 5, 6, np.nan])


def test_site_series_validates():
    t = np.datetime64("2016-01-01T00:00") + np.timedelta64(30, "m") * np.arange(2)
    with pytest.raises(ValueError):
        SiteSeries("a", 0, 0, t, [1.0, -1.0])
    with pytest.raises(ValueError):
        SiteSeries("a", 0, 0, t + np.array([0, 10], dtype="timedelta64[m]"), [1.0, 1.0])


# --- synthetic generator -------------------------------------------------

def test_noiseless_synth_is_periodic_and_persistence_exact():
    sites, _ = synth_generate(SynthConfig(nodes=2, days=4, noise=0.0))
    x = np.vstack([s.values for s in sites])
    np.testing.assert_array_equal(x[:, 48:], x[:, :-48])
    t = 48 * 2 + 17
    for days in (1, 2):
        ens = persistence_ensemble(x, t, 1, member_days=days)
        np.testing.assert_array_equal(ens.samples, np.tile(x[:, t + 1], (days, 1)))


def test_nights_are_dark():
    sites, desc = synth_generate(SynthConfig(nodes=3, days=5, seed=2))
    night = desc["clear_sky"] == 0
    assert night.any()
    for s in sites:
        assert np.all(s.values[night] == 0.0)


def test_colocated_nodes_are_highly_correlated():
    sites, _ = synth_generate(SynthConfig(nodes=3, days=20, seed=5, colocated=(1,)))
    assert np.corrcoef(sites[0].values, sites[1].values)[0, 1] > 0.99


def test_synth_is_seeded_and_documented():
    a, desc = synth_generate(SynthConfig(nodes=2, days=2, seed=8))
    b, _ = synth_generate(SynthConfig(nodes=2, days=2, seed=8))
    np.testing.assert_array_equal(a[0].values, b[0].values)
    assert desc["cloud_state"].shape == (96, 2) and desc["spatial_covariance"].shape == (2, 2)


def test_synth_rejects_tiny_configs():
    with pytest.raises(ValueError):
        synth_generate(SynthConfig(nodes=1, days=5))
    with pytest.raises(ValueError):
        synth_generate(SynthConfig(nodes=2, days=1))
