import json
import tempfile
from pathlib import Path

import pytest

import twinbeam.store as store_module
from twinbeam.store import SweepStore
from twinbeam.sweeps import SweepRecord


@pytest.fixture
def temp_store():
    with tempfile.TemporaryDirectory() as tmpdir:
        store_path = Path(tmpdir) / "test_store.duckdb"
        store = SweepStore(path=store_path)
        yield store
        store.close()


def make_record(
    value: float = 1e-3,
    config_hash: str = "0123456789abcdef",
    K: float = 12.5,
    error: str | None = None,
) -> SweepRecord:
    if error is not None:
        return SweepRecord(parameter_value=value, metrics={}, units={}, error=error, config_hash=config_hash)
    return SweepRecord(
        parameter_value=value,
        metrics={"K_kphi": K, "w_p_a": 2.778e-4},
        units={"K_kphi": "1", "w_p_a": "m"},
        config_hash=config_hash,
    )


def test_store_creation(temp_store):
    assert temp_store.path.exists()
    assert temp_store.get_record_count() == 0


def test_put_and_get_record(temp_store):
    record = make_record()
    temp_store.put_record("pump_radius_w_p", record, {"pump": {"w_p": 1e-3}})

    stored = temp_store.get_record(record.config_hash, "pump_radius_w_p", 1e-3)
    assert stored is not None
    assert stored.metrics == record.metrics
    assert stored.units == record.units
    assert stored.ok

    config = temp_store.get_config(record.config_hash, "pump_radius_w_p", 1e-3)
    assert config == {"pump": {"w_p": 1e-3}}


def test_get_missing_record(temp_store):
    assert temp_store.get_record("ffffffffffffffff", "pump_radius_w_p", 1e-3) is None
    assert temp_store.get_config("ffffffffffffffff", "pump_radius_w_p", 1e-3) is None


def test_metrics_keep_full_precision(temp_store):
    K = 1.0 / 3.0
    temp_store.put_record("filter_width", make_record(value=2e-9, K=K), {})
    stored = temp_store.get_record("0123456789abcdef", "filter_width", 2e-9)
    assert stored.metrics["K_kphi"] == K


def test_put_replaces_existing(temp_store):
    temp_store.put_record("pump_radius_w_p", make_record(K=10.0), {})
    temp_store.put_record("pump_radius_w_p", make_record(K=11.0), {})

    assert temp_store.get_record_count() == 1
    assert temp_store.get_record("0123456789abcdef", "pump_radius_w_p", 1e-3).metrics["K_kphi"] == 11.0


def test_failed_records_are_not_stored(temp_store):
    temp_store.put_record("pump_radius_w_p", make_record(error="NormalizationError: no signal"), {})
    assert temp_store.get_record_count() == 0


def test_version_mismatch_is_a_miss(temp_store, monkeypatch):
    temp_store.put_record("pump_radius_w_p", make_record(), {})
    monkeypatch.setattr(store_module, "__version__", "0.0.0-other")
    assert temp_store.get_record("0123456789abcdef", "pump_radius_w_p", 1e-3) is None


def test_count_by_parameter(temp_store):
    for value in (1e-3, 2e-3, 3e-3):
        temp_store.put_record("pump_radius_w_p", make_record(value=value), {})
    temp_store.put_record("filter_width", make_record(value=5e-9), {})

    assert temp_store.get_record_count() == 4
    assert temp_store.get_record_count("pump_radius_w_p") == 3
    assert temp_store.get_record_count("filter_width") == 1


def test_query_records_ordered(temp_store):
    for value in (3e-3, 1e-3, 2e-3):
        temp_store.put_record("pump_radius_w_p", make_record(value=value), {"w_p": value})

    rows = temp_store.query_records("pump_radius_w_p")
    assert [row["value"] for row in rows] == [1e-3, 2e-3, 3e-3]
    assert json.loads(rows[0]["config"]) == {"w_p": 1e-3}
    assert rows[0]["code_version"] == store_module.__version__


def test_store_size(temp_store):
    temp_store.put_record("pump_radius_w_p", make_record(), {})
    assert temp_store.get_store_size_bytes() > 0


def test_store_as_context_manager():
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "nested" / "store.duckdb"
        with SweepStore(path) as store:
            store.put_record("pump_radius_w_p", make_record(), {})

        with SweepStore(path) as store:
            assert store.get_record_count() == 1
