"""Engine configuration.

All knobs that affect learning, reduction, validation, and the content
model live here so a single JSON config file can drive the CLI and the
gateway. Documented keys:

    merge_threshold     minimum sibling-group size before a placeholder is
                        created (default 3)
    min_hit_fraction    siblings whose traffic share under their parent is
                        below this fraction are dropped from the reduced
                        schema as rare (default 0.0 = disabled)
    length_slack        fractional widening of placeholder length bounds at
                        validation time (default 0.5)
    allow_extra_query   accept undocumented query keys (default false)
    strict_types        enforce placeholder type compatibility (default true)
    body_limit          byte cap on the serialized request body (default 4096)
    reservoir_cap       sample values retained per observed field (default 16)
    ae_seed             weight-init / shuffle seed for the autoencoder
    ae_epochs           training epochs (default 40; enough for the
                        strict max-score threshold to sit below novel-content
                        reconstruction errors)
    ae_batch_size       minibatch size (default 128)
    ae_learning_rate    Adam step size (default 0.001)
    hash_seed           64-bit basis for the feature / sketch hash
    heartbeat_seconds   gateway event-stream heartbeat interval (default 15)
    event_buffer        per-subscriber event queue capacity (default 256)
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

# FNV-1a 64-bit offset basis; the default seed of the documented hash.
DEFAULT_HASH_SEED = 0xCBF29CE484222325

DEFAULT_METHODS = ("GET", "POST", "PUT", "DELETE", "PATCH", "HEAD", "OPTIONS")


@dataclass
class EngineConfig:
    merge_threshold: int = 3
    min_hit_fraction: float = 0.0
    length_slack: float = 0.5
    allow_extra_query: bool = False
    strict_types: bool = True
    body_limit: int = 4096
    reservoir_cap: int = 16
    ae_seed: int = 1337
    ae_epochs: int = 40
    ae_batch_size: int = 128
    ae_learning_rate: float = 0.001
    hash_seed: int = DEFAULT_HASH_SEED
    heartbeat_seconds: float = 15.0
    event_buffer: int = 256
    known_methods: tuple = field(default_factory=lambda: DEFAULT_METHODS)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["known_methods"] = list(self.known_methods)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        known = d.get("known_methods")
        kwargs = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if known is not None:
            kwargs["known_methods"] = tuple(known)
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str) -> "EngineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
