"""Engine lifecycle tests: phase machine, two-stage classification,
counters, concurrency, persistence and reset."""

import os
import threading

import pytest

from apiward import _kernels
from apiward.config import EngineConfig
from apiward.engine import Engine, InsufficientData, Phase, PhaseError
from apiward.eval_harness import parse_label
from apiward.request_model import RawRequest, parse_request
from apiward.schema_graph import ReasonCode

from conftest import small_config


def _benign_test_records(corpus):
    return [r for r in corpus.test if parse_label(r.label)[0] == "benign"]


def _train_engine(corpus, **overrides):
    cfg_kwargs = dict(ae_epochs=6, ae_batch_size=64)
    cfg_kwargs.update(overrides)
    engine = Engine(EngineConfig(**cfg_kwargs))
    for rec in corpus.train:
        engine.ingest(rec)
    engine.baseline()
    return engine


# ---------------------------------------------------------------------------
# phase machine


def test_initial_phase_and_classify_guard(fresh_engine):
    assert fresh_engine.phase == Phase.TRAINING
    assert fresh_engine.schema_version is None
    assert fresh_engine.active_schema() is None
    with pytest.raises(PhaseError):
        fresh_engine.classify(parse_request(RawRequest("GET", "/users/1")))


def test_training_ingest_learns(fresh_engine):
    assert fresh_engine.ingest(RawRequest("GET", "/users/123")) is None
    assert fresh_engine.counters["ingested"] == 1
    assert fresh_engine.counters["learned"] == 1
    assert fresh_engine.tree.total_requests == 1


def test_set_phase_guards(fresh_engine):
    # same-phase transition is a no-op
    assert fresh_engine.set_phase("training") == Phase.TRAINING
    # detection needs a baseline
    with pytest.raises(PhaseError):
        fresh_engine.set_phase("detection")
    # updating is always reachable; without a snapshot it learns into
    # the main tree rather than the delta
    assert fresh_engine.set_phase(Phase.UPDATING) == Phase.UPDATING
    fresh_engine.ingest(RawRequest("GET", "/users/5"))
    assert fresh_engine.tree.total_requests == 1
    assert fresh_engine.delta.total_requests == 0


def test_set_phase_training_requires_reset(baselined_engine):
    with pytest.raises(PhaseError):
        baselined_engine.set_phase("training")


def test_baseline_requires_data(fresh_engine):
    with pytest.raises(InsufficientData):
        fresh_engine.baseline()
    for i in range(10):
        fresh_engine.ingest(RawRequest("GET", f"/users/{i}"))
    with pytest.raises(InsufficientData, match="64"):
        fresh_engine.baseline()


def test_baseline_enters_detection(tiny_corpus):
    engine = _train_engine(tiny_corpus)
    assert engine.phase == Phase.DETECTION
    assert engine.schema_version == 1
    assert engine.active_schema() is not None
    assert engine.schema_by_version(1) is engine.active_schema()
    assert engine.schema_by_version(99) is None


def test_rebaseline_bumps_version(tiny_corpus):
    engine = _train_engine(tiny_corpus)
    engine.baseline()
    assert engine.schema_version == 2
    assert [s.version for s in engine.schema_history] == [1, 2]


# ---------------------------------------------------------------------------
# classification


def test_training_replay_is_clean(baselined_engine, tiny_corpus):
    # every learned request must be accepted by the model it trained
    for rec in tiny_corpus.train:
        verdict = baselined_engine.classify(parse_request(rec))
        assert not verdict.is_anomalous, (rec.url, verdict.to_dict())


def test_accepted_verdict_carries_content_score(baselined_engine, tiny_corpus):
    rec = _benign_test_records(tiny_corpus)[0]
    verdict = baselined_engine.classify(parse_request(rec))
    assert verdict.outcome == "accepted"
    assert verdict.score is not None and verdict.score >= 0.0
    assert verdict.schema_version == 1


def test_structural_anomaly_short_circuits(baselined_engine):
    verdict = baselined_engine.ingest(RawRequest("GET", "/zzz-no-such-root/1"))
    assert verdict.is_anomalous and verdict.stage == "structural"
    assert verdict.reasons[0].code == ReasonCode.UNKNOWN_ROOT_PATH
    assert verdict.score is None  # content stage never ran


def test_content_stage_verdict_wiring(tiny_corpus):
    # force the content stage to fire by dropping the threshold; this
    # tests the plumbing, not the detection margins
    engine = _train_engine(tiny_corpus)
    engine._snapshot.model.threshold.value = -1.0
    rec = _benign_test_records(tiny_corpus)[0]
    verdict = engine.classify(parse_request(rec))
    assert verdict.is_anomalous and verdict.stage == "content"
    [reason] = verdict.reasons
    assert reason.code == ReasonCode.CONTENT_RECONSTRUCTION_ERROR
    assert "threshold" in reason.detail
    assert verdict.score is not None and verdict.score > -1.0


def test_malformed_url_all_phases(fresh_engine, tiny_corpus):
    verdict = fresh_engine.ingest(RawRequest("GET", "/a/%zz"))
    assert verdict.is_anomalous
    assert verdict.reasons[0].code == ReasonCode.MALFORMED_URL
    assert "offset" in verdict.reasons[0].token
    assert fresh_engine.counters["malformed"] == 1
    assert fresh_engine.counters["learned"] == 0
    assert fresh_engine.tree.total_requests == 0

    engine = _train_engine(tiny_corpus)
    verdict = engine.ingest(RawRequest("GET", "/a/%zz"))
    assert verdict.is_anomalous and verdict.stage == "structural"
    assert engine.counters["malformed"] == 1
    assert engine.counters["anomalous"] == 1
    assert engine.by_reason == {"MalformedUrl": 1}


def test_counter_partition_identities(tiny_corpus):
    engine = _train_engine(tiny_corpus)
    for rec in tiny_corpus.test:
        engine.ingest(rec)
    engine.ingest(RawRequest("GET", "/b/%"))  # malformed, in detection
    c = engine.counters
    assert c["ingested"] == c["learned"] + c["classified"]
    assert c["classified"] == c["accepted"] + c["anomalous"]
    assert sum(engine.by_reason.values()) == c["anomalous"]
    # malformed verdicts skip the timed classify path
    assert len(engine.latencies) == c["classified"] - c["malformed"]


# ---------------------------------------------------------------------------
# updating phase


def test_update_cycle_folds_delta(tiny_corpus):
    engine = _train_engine(tiny_corpus)
    engine.set_phase("updating")
    before = engine.tree.total_requests
    for i in range(5):
        assert engine.ingest(RawRequest("GET", f"/brand-new/{i}")) is None
    assert engine.delta.total_requests == 5
    assert engine.tree.total_requests == before  # main tree untouched so far
    # the merged view already shows the new branch...
    labels = {c["segment"] for c in engine.tree_snapshot()["children"]}
    assert "brand-new" in labels
    # ...but the active schema does not yet
    assert "brand-new" not in engine.active_schema().root.children

    engine.set_phase("detection")
    assert engine.phase == Phase.DETECTION
    assert engine.schema_version == 2
    assert engine.delta.total_requests == 0
    assert engine.tree.total_requests == before + 5
    verdict = engine.classify(parse_request(RawRequest("GET", "/brand-new/3")))
    assert verdict.outcome == "accepted", verdict.to_dict()


def test_update_without_baseline_raises(fresh_engine):
    with pytest.raises(PhaseError):
        fresh_engine.apply_update()


def test_classify_rejected_during_updating(tiny_corpus):
    engine = _train_engine(tiny_corpus)
    engine.set_phase("updating")
    with pytest.raises(PhaseError):
        engine.classify(parse_request(RawRequest("GET", "/users/1")))


# ---------------------------------------------------------------------------
# tolerance propagation


def test_allow_extra_query_config(tiny_corpus):
    rec = _benign_test_records(tiny_corpus)[0]
    url = rec.url + ("&" if "?" in rec.url else "?") + "zzqq=1"
    extra = RawRequest(rec.method, url, headers=rec.headers, body=rec.body)

    strict = _train_engine(tiny_corpus)
    verdict = strict.classify(parse_request(extra))
    assert verdict.is_anomalous
    assert verdict.reasons[0].code == ReasonCode.UNDOCUMENTED_QUERY_PARAM

    lenient = _train_engine(tiny_corpus, allow_extra_query=True)
    assert not lenient.classify(parse_request(extra)).is_anomalous


def test_policy_reflects_config():
    engine = Engine(EngineConfig(length_slack=0.25, allow_extra_query=True))
    assert engine.policy.length_slack == 0.25
    assert engine.policy.allow_extra_query is True


# ---------------------------------------------------------------------------
# stats and latency


def test_latency_summary_shapes(tiny_corpus):
    engine = _train_engine(tiny_corpus)
    assert engine.latency_summary() == {"count": 0}
    engine.classify(parse_request(tiny_corpus.train[0]))
    one = engine.latency_summary()
    assert one["count"] == 1 and one["std"] == 0.0
    for rec in tiny_corpus.train[:40]:
        engine.classify(parse_request(rec))
    summary = engine.latency_summary()
    assert summary["count"] == 41
    assert (
        0.0
        <= summary["min"]
        <= summary["p25"]
        <= summary["median"]
        <= summary["p75"]
        <= summary["max"]
    )
    assert summary["std"] >= 0.0 and summary["mean"] > 0.0


def test_stats_keys(baselined_engine):
    stats = baselined_engine.stats()
    assert stats["phase"] == "detection"
    assert stats["schema_version"] == 1
    assert stats["kernel"] == _kernels.IMPL
    assert set(stats) == {
        "phase",
        "schema_version",
        "tree_requests",
        "delta_requests",
        "counters",
        "by_reason",
        "latency",
        "kernel",
    }


# ---------------------------------------------------------------------------
# concurrency: reads stay responsive while a baseline runs


def test_reads_do_not_block_during_baseline(tiny_corpus):
    engine = Engine(small_config())
    for rec in tiny_corpus.train:
        engine.ingest(rec)
    errors = []

    def run_baseline():
        try:
            engine.baseline()
        except Exception as exc:  # pragma: no cover - surfaced via errors
            errors.append(exc)

    worker = threading.Thread(target=run_baseline)
    worker.start()
    # while the trainer holds the writer lock, stat reads keep answering
    while worker.is_alive():
        stats = engine.stats()
        assert stats["phase"] in ("training", "detection")
        snapshot = engine.tree_snapshot()
        assert snapshot["hit_count"] == len(tiny_corpus.train)
    worker.join()
    assert not errors
    assert engine.phase == Phase.DETECTION


# ---------------------------------------------------------------------------
# persistence and reset


def test_save_load_roundtrip_detection(tmp_path, tiny_corpus):
    engine = _train_engine(tiny_corpus)
    probe = parse_request(_benign_test_records(tiny_corpus)[0])
    want = engine.classify(probe).to_dict()
    state = str(tmp_path / "state")
    engine.save_state(state)

    loaded = Engine.load_state(state)
    assert loaded.phase == Phase.DETECTION
    assert loaded.schema_version == engine.schema_version
    assert loaded.tree.total_requests == engine.tree.total_requests
    assert loaded.counters == engine.counters
    got = loaded.classify(probe).to_dict()
    assert got == want


def test_save_load_roundtrip_training(tmp_path, fresh_engine):
    fresh_engine.ingest(RawRequest("GET", "/users/42"))
    state = str(tmp_path / "state")
    fresh_engine.save_state(state)
    loaded = Engine.load_state(state)
    assert loaded.phase == Phase.TRAINING
    assert loaded.tree.total_requests == 1
    assert len(loaded._vectors) == 1


def test_load_degrades_without_snapshot_files(tmp_path, tiny_corpus):
    engine = _train_engine(tiny_corpus)
    state = str(tmp_path / "state")
    engine.save_state(state)
    os.remove(os.path.join(state, "schema.json"))
    os.remove(os.path.join(state, "model.npz"))
    loaded = Engine.load_state(state)
    # detection phase without a snapshot is not a usable state
    assert loaded.phase == Phase.TRAINING
    assert loaded.active_schema() is None


def test_reset_clears_everything(tiny_corpus):
    engine = _train_engine(tiny_corpus)
    engine.classify(parse_request(tiny_corpus.train[0]))
    engine.reset()
    assert engine.phase == Phase.TRAINING
    assert engine.tree.total_requests == 0
    assert engine.counters == {}
    assert engine.latencies == []
    assert engine.active_schema() is None
    assert engine.schema_history == []
    with pytest.raises(PhaseError):
        engine.classify(parse_request(RawRequest("GET", "/users/1")))
    # config survives
    assert engine.config.ae_epochs == 6
