"""Engine: the three-phase lifecycle and the two-stage detection pipeline.

Lifecycle: requests ingested during Training build the working tree (and
a pool of hashed content vectors); `baseline` freezes that into a
reduced schema + validation graph + trained/thresholded autoencoder and
enters Detection. Updating collects post-baseline traffic in a delta
tree, folded into the active schema when returning to Detection. `reset`
drops everything but configuration.

Classification is two-staged: structural graph validation first (cheap,
short-circuits), then content scoring of the serialized headers, query
parameters and body. The active snapshot (schema, graph, model) is a
single immutable object replaced atomically, so concurrent readers
always see a consistent trio.
"""

from __future__ import annotations

import json
import os
import threading
import time
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from . import body_autoencoder as ae
from .api_tree import ApiTree, snapshot as tree_snapshot
from .config import EngineConfig
from .reducer import ReducedSchema, reduce_tree, update_schema
from .request_model import (
    MalformedUrlError,
    ParsedRequest,
    RawRequest,
    parse_request,
    serialize_for_content,
)
from .schema_graph import (
    Reason,
    ReasonCode,
    SchemaGraph,
    TolerancePolicy,
    Verdict,
    build_graph,
)


class Phase(str, Enum):
    TRAINING = "training"
    UPDATING = "updating"
    DETECTION = "detection"


class PhaseError(RuntimeError):
    """Operation not allowed in the current phase."""


class InsufficientData(RuntimeError):
    """Not enough training data to establish a baseline."""


@dataclass
class _Snapshot:
    """Immutable detection state, swapped in atomically."""

    schema: ReducedSchema
    graph: SchemaGraph
    model: ae.AEModel


class Engine:
    """Owns the lifecycle, the working state and the active snapshot."""

    def __init__(self, config: Optional[EngineConfig] = None):
        self.config = config or EngineConfig()
        self._lock = threading.RLock()
        # Serializes whole baseline/update/reset sequences so the main
        # lock only needs to cover state copies and the snapshot swap --
        # readers never wait for a training run.
        self._writer_lock = threading.Lock()
        self._init_state()

    def _init_state(self) -> None:
        self.phase = Phase.TRAINING
        self.tree = ApiTree(self.config.reservoir_cap)
        self.delta = ApiTree(self.config.reservoir_cap)
        self._vectors: list[np.ndarray] = []
        self._delta_vectors: list[np.ndarray] = []
        self._snapshot: Optional[_Snapshot] = None
        self.counters: Counter = Counter()
        self.by_reason: Counter = Counter()
        self.latencies: list[float] = []
        self.schema_history: list[ReducedSchema] = []

    # ------------------------------------------------------------- helpers

    @property
    def policy(self) -> TolerancePolicy:
        return TolerancePolicy(
            length_slack=self.config.length_slack,
            allow_extra_query=self.config.allow_extra_query,
            strict_types=self.config.strict_types,
        )

    @property
    def schema_version(self) -> Optional[int]:
        snap = self._snapshot
        return snap.schema.version if snap else None

    def _hash_request(self, req: ParsedRequest) -> np.ndarray:
        content = serialize_for_content(req, self.config.body_limit)
        return ae.hash_features(content, self.config.hash_seed)

    def _malformed_verdict(self, exc: MalformedUrlError, raw: RawRequest) -> Verdict:
        reason = Reason(
            ReasonCode.MALFORMED_URL,
            location=raw.url[:120],
            token=f"offset {exc.offset}",
            detail=exc.detail,
        )
        return Verdict(
            outcome="anomalous",
            stage="structural",
            reasons=[reason],
            schema_version=self.schema_version,
        )

    # -------------------------------------------------------------- ingest

    def ingest(self, raw: RawRequest) -> Optional[Verdict]:
        """Feed one request into the engine; behavior depends on phase.

        Training/Updating: learn the request, return None. Detection:
        classify and return the Verdict. Unparseable URLs yield a
        MalformedUrl verdict in every phase and are never learned.
        """
        with self._lock:
            self.counters["ingested"] += 1
            try:
                req = parse_request(raw)
            except MalformedUrlError as exc:
                self.counters["malformed"] += 1
                if self.phase == Phase.DETECTION:
                    self.counters["classified"] += 1
                    self.counters["anomalous"] += 1
                    self.by_reason[ReasonCode.MALFORMED_URL.value] += 1
                return self._malformed_verdict(exc, raw)
            if self.phase == Phase.DETECTION:
                return self.classify(req)
            if self.phase == Phase.UPDATING and self._snapshot is not None:
                self.delta.insert(req)
                self._delta_vectors.append(self._hash_request(req))
            else:
                self.tree.insert(req)
                self._vectors.append(self._hash_request(req))
            self.counters["learned"] += 1
            return None

    # ------------------------------------------------------------ classify

    def classify(self, req: Union[ParsedRequest, RawRequest]) -> Verdict:
        """Two-stage classification of one request (Detection phase only)."""
        snap = self._snapshot  # atomic read of the whole trio
        if self.phase != Phase.DETECTION or snap is None:
            raise PhaseError(f"classify requires detection phase (now: {self.phase.value})")
        if isinstance(req, RawRequest):
            try:
                req = parse_request(req)
            except MalformedUrlError as exc:
                self.counters["malformed"] += 1
                self.counters["classified"] += 1
                self.counters["anomalous"] += 1
                self.by_reason[ReasonCode.MALFORMED_URL.value] += 1
                return self._malformed_verdict(exc, req)
        start = time.perf_counter()
        verdict = self._classify_parsed(snap, req)
        self.latencies.append(time.perf_counter() - start)
        self.counters["classified"] += 1
        if verdict.is_anomalous:
            self.counters["anomalous"] += 1
            self.by_reason[verdict.reasons[0].code.value] += 1
        else:
            self.counters["accepted"] += 1
        return verdict

    def _classify_parsed(self, snap: _Snapshot, req: ParsedRequest) -> Verdict:
        from .schema_graph import validate

        verdict = validate(snap.graph, req, self.policy)
        if verdict.is_anomalous:
            return verdict
        content = serialize_for_content(req, self.config.body_limit)
        vec = ae.hash_features(content, self.config.hash_seed)
        result = snap.model.score(vec)
        if result.flagged:
            thr = snap.model.threshold.value if snap.model.threshold else float("nan")
            return Verdict(
                outcome="anomalous",
                stage="content",
                reasons=[
                    Reason(
                        ReasonCode.CONTENT_RECONSTRUCTION_ERROR,
                        location=req.path,
                        token=f"score {result.score:.6g}",
                        detail=f"reconstruction error above threshold {thr:.6g}",
                    )
                ],
                score=result.score,
                schema_version=snap.schema.version,
            )
        verdict.score = result.score
        return verdict

    # ------------------------------------------------------------ baseline

    def baseline(self, train_cfg: Optional[ae.TrainConfig] = None) -> ReducedSchema:
        """Freeze learned traffic into a detection snapshot.

        Reduces the working tree, builds the graph, trains the content
        model on every learned vector, calibrates the threshold over the
        same vectors scored through the inference path, then atomically
        installs the snapshot and enters Detection.
        """
        with self._writer_lock:
            cfg = self.config
            with self._lock:
                tree = self.tree.copy()
                if self.delta.total_requests:
                    tree.merge(self.delta)
                    # Fold the updating-phase delta into the main tree for
                    # good; this baseline covers it.
                    self.tree.merge(self.delta)
                    self._vectors.extend(self._delta_vectors)
                    self.delta = ApiTree(cfg.reservoir_cap)
                    self._delta_vectors = []
                vectors = list(self._vectors)
                version = (self._snapshot.schema.version + 1) if self._snapshot else 1
            if train_cfg is None:
                train_cfg = ae.TrainConfig(
                    learning_rate=cfg.ae_learning_rate,
                    epochs=cfg.ae_epochs,
                    batch_size=cfg.ae_batch_size,
                    seed=cfg.ae_seed,
                )
            if tree.total_requests == 0:
                raise InsufficientData("no training requests ingested")
            if len(vectors) < train_cfg.batch_size:
                raise InsufficientData(
                    f"need >= {train_cfg.batch_size} requests for the content model, "
                    f"have {len(vectors)}"
                )
            schema = reduce_tree(
                tree, cfg.merge_threshold, cfg.min_hit_fraction, version=version
            )
            graph = build_graph(schema)
            model = ae.train(np.stack(vectors), train_cfg)
            scores = [model.score(v).score for v in vectors]
            ae.calibrate_threshold(model, scores)
            with self._lock:
                self._snapshot = _Snapshot(schema=schema, graph=graph, model=model)
                self.schema_history.append(schema)
                self.phase = Phase.DETECTION
            return schema

    def apply_update(self) -> ReducedSchema:
        """Fold the Updating-phase delta into the active schema.

        The structural schema updates incrementally; the content model is
        retrained over all accumulated traffic so the training-replay
        guarantee (zero anomalies on learned requests) keeps holding.
        """
        with self._writer_lock:
            cfg = self.config
            with self._lock:
                if self._snapshot is None:
                    raise PhaseError("no baseline to update; run baseline first")
                old = self._snapshot
                delta = self.delta
                self.tree.merge(delta)
                self._vectors.extend(self._delta_vectors)
                vectors = list(self._vectors)
                retrain = bool(self._delta_vectors)
                self.delta = ApiTree(cfg.reservoir_cap)
                self._delta_vectors = []
            schema = update_schema(
                old.schema, delta, cfg.merge_threshold, cfg.min_hit_fraction
            )
            graph = build_graph(schema)
            model = old.model
            if retrain:
                train_cfg = ae.TrainConfig(
                    learning_rate=cfg.ae_learning_rate,
                    epochs=cfg.ae_epochs,
                    batch_size=cfg.ae_batch_size,
                    seed=cfg.ae_seed,
                )
                model = ae.train(np.stack(vectors), train_cfg)
                scores = [model.score(v).score for v in vectors]
                ae.calibrate_threshold(model, scores)
            with self._lock:
                self._snapshot = _Snapshot(schema=schema, graph=graph, model=model)
                self.schema_history.append(schema)
                self.phase = Phase.DETECTION
            return schema

    # --------------------------------------------------------------- phase

    def set_phase(self, target: Union[Phase, str]) -> Phase:
        """Explicit phase transition; baseline/update run where required."""
        target = Phase(target)
        run_update = False
        with self._lock:
            if target == self.phase:
                return self.phase
            if target == Phase.TRAINING:
                raise PhaseError("use reset to return to training")
            if target == Phase.UPDATING:
                self.phase = Phase.UPDATING
                return self.phase
            # target == DETECTION
            if self._snapshot is None:
                raise PhaseError("no baseline yet; run baseline to enter detection")
            if self.phase == Phase.UPDATING:
                run_update = True
            else:
                self.phase = Phase.DETECTION
        if run_update:
            self.apply_update()
        return self.phase

    def reset(self) -> None:
        """Back to an empty Training state; only configuration survives."""
        with self._writer_lock:
            with self._lock:
                self._init_state()

    # --------------------------------------------------------------- stats

    def latency_summary(self) -> dict:
        """Descriptive statistics over recorded classify latencies (seconds)."""
        n = len(self.latencies)
        if n == 0:
            return {"count": 0}
        arr = np.asarray(self.latencies)
        return {
            "count": n,
            "mean": float(arr.mean()),
            "std": float(arr.std(ddof=1)) if n > 1 else 0.0,
            "min": float(arr.min()),
            "p25": float(np.percentile(arr, 25)),
            "median": float(np.percentile(arr, 50)),
            "p75": float(np.percentile(arr, 75)),
            "max": float(arr.max()),
        }

    def stats(self) -> dict:
        snap = self._snapshot
        return {
            "phase": self.phase.value,
            "schema_version": snap.schema.version if snap else None,
            "tree_requests": self.tree.total_requests,
            "delta_requests": self.delta.total_requests,
            "counters": dict(self.counters),
            "by_reason": dict(self.by_reason),
            "latency": self.latency_summary(),
            "kernel": _kernel_name(),
        }

    def tree_snapshot(self) -> dict:
        with self._lock:
            view = self.tree
            if self.delta.total_requests:
                view = view.copy().merge(self.delta)
            return tree_snapshot(view)

    def active_schema(self) -> Optional[ReducedSchema]:
        snap = self._snapshot
        return snap.schema if snap else None

    def schema_by_version(self, version: int) -> Optional[ReducedSchema]:
        for schema in self.schema_history:
            if schema.version == version:
                return schema
        return None

    # --------------------------------------------------------- persistence

    def save_state(self, directory: str) -> None:
        """Write config, tree, vectors, schema and model under `directory`."""
        os.makedirs(directory, exist_ok=True)
        with self._lock:
            self.config.save(os.path.join(directory, "config.json"))
            meta = {
                "phase": self.phase.value,
                "counters": dict(self.counters),
                "by_reason": dict(self.by_reason),
            }
            with open(os.path.join(directory, "state.json"), "w", encoding="utf-8") as fh:
                json.dump(meta, fh, indent=2, sort_keys=True)
            with open(os.path.join(directory, "tree.json"), "w", encoding="utf-8") as fh:
                json.dump(self.tree.to_dict(), fh)
            if self._vectors:
                np.save(os.path.join(directory, "vectors.npy"), np.stack(self._vectors))
            else:
                _remove_stale(os.path.join(directory, "vectors.npy"))
            snap = self._snapshot
            if snap is not None:
                with open(os.path.join(directory, "schema.json"), "w", encoding="utf-8") as fh:
                    json.dump(snap.schema.to_dict(), fh)
                snap.model.save(os.path.join(directory, "model.npz"))
            else:
                # a reset engine must not resurrect an earlier baseline on load
                _remove_stale(os.path.join(directory, "schema.json"))
                _remove_stale(os.path.join(directory, "model.npz"))

    @classmethod
    def load_state(cls, directory: str) -> "Engine":
        config = EngineConfig.load(os.path.join(directory, "config.json"))
        engine = cls(config)
        with open(os.path.join(directory, "state.json"), "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        with open(os.path.join(directory, "tree.json"), "r", encoding="utf-8") as fh:
            engine.tree = ApiTree.from_dict(json.load(fh))
        vec_path = os.path.join(directory, "vectors.npy")
        if os.path.exists(vec_path):
            engine._vectors = list(np.load(vec_path))
        schema_path = os.path.join(directory, "schema.json")
        if os.path.exists(schema_path):
            schema = ReducedSchema.from_dict(json.load(open(schema_path, encoding="utf-8")))
            model = ae.AEModel.load(os.path.join(directory, "model.npz"))
            engine._snapshot = _Snapshot(schema=schema, graph=build_graph(schema), model=model)
            engine.schema_history.append(schema)
        engine.counters = Counter(meta.get("counters", {}))
        engine.by_reason = Counter(meta.get("by_reason", {}))
        engine.phase = Phase(meta.get("phase", "training"))
        if engine.phase == Phase.DETECTION and engine._snapshot is None:
            engine.phase = Phase.TRAINING
        return engine


def _remove_stale(path: str) -> None:
    try:
        os.remove(path)
    except FileNotFoundError:
        pass


def _kernel_name() -> str:
    from . import _kernels

    return _kernels.IMPL
