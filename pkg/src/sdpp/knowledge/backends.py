"""Extraction backends and the :class:`RoadSpec` they produce.

Two backends share one ``extract(query, retrieved)`` method:

* :class:`DeterministicBackend` looks values up in a JSON rule table keyed by
  road class. It never reads the retrieved text and exists so the whole
  pipeline can run offline and reproducibly.
* :class:`RemoteBackend` sends the assembled prompt to an OpenAI-style
  ``/chat/completions`` endpoint and parses the reply.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import httpx
import numpy as np

from ..errors import BackendError, ConfigError
from ..osm import RoadSegment
from .prompts import (
    SPEC_FIELDS,
    ExtractionError,
    ExtractionQuery,
    PromptTemplate,
    build_prompt,
    parse_spec_response,
)
from .retrieval import DEFAULT_K, Chunk, VectorStore, retrieve_top_k

logger = logging.getLogger(__name__)

API_KEY_ENV = "SDPP_LLM_API_KEY"
DEFAULT_RETRIES = 2
LANE_WIDTH_RANGE = (2.0, 6.0)


class SpecError(ValueError):
    """Extracted values violate a RoadSpec invariant."""


@dataclass(frozen=True)
class RoadSpec:
    way_id: int
    lane_width: float
    bike_lane_width: float
    shoulder_width: float
    total_width: float
    provenance: tuple[int, ...] = ()
    backend: str = "deterministic"

    def to_dict(self) -> dict:
        return {
            "way_id": self.way_id,
            "lane_width": self.lane_width,
            "bike_lane_width": self.bike_lane_width,
            "shoulder_width": self.shoulder_width,
            "total_width": self.total_width,
            "provenance": list(self.provenance),
            "backend": self.backend,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> RoadSpec:
        return cls(
            way_id=int(d["way_id"]),
            lane_width=float(d["lane_width"]),
            bike_lane_width=float(d["bike_lane_width"]),
            shoulder_width=float(d["shoulder_width"]),
            total_width=float(d["total_width"]),
            provenance=tuple(int(i) for i in d.get("provenance", ())),
            backend=d.get("backend", "deterministic"),
        )


def make_road_spec(
    segment: RoadSegment,
    values: Mapping[str, float],
    provenance: Sequence[int] = (),
    backend: str = "deterministic",
) -> RoadSpec:
    """Check extracted values against the segment and freeze them into a RoadSpec.

    A segment without a bike lane gets ``bike_lane_width = 0`` whatever was
    extracted.
    """
    missing = [f for f in SPEC_FIELDS if f not in values]
    if missing:
        raise SpecError(f"way {segment.way_id}: missing {', '.join(missing)}")
    v = {f: float(values[f]) for f in SPEC_FIELDS}
    for f, x in v.items():
        if not math.isfinite(x) or x < 0:
            raise SpecError(f"way {segment.way_id}: {f} = {x} is not a finite width")
    lo, hi = LANE_WIDTH_RANGE
    if not lo <= v["lane_width"] <= hi:
        raise SpecError(f"way {segment.way_id}: lane_width {v['lane_width']} m outside [{lo}, {hi}]")
    if v["total_width"] < segment.lane_count * v["lane_width"] - 1e-6:
        raise SpecError(
            f"way {segment.way_id}: total_width {v['total_width']} m narrower than "
            f"{segment.lane_count} lanes of {v['lane_width']} m"
        )
    if not segment.has_bike_lane:
        v["bike_lane_width"] = 0.0
    return RoadSpec(segment.way_id, provenance=tuple(provenance), backend=backend, **v)


class ExtractionBackend(Protocol):
    name: str

    def extract(self, query: ExtractionQuery, retrieved: Sequence[Chunk]) -> dict[str, float]:
        ...


class DeterministicBackend:
    """Rule-table lookup keyed by ``(highway_class, field)``."""

    name = "deterministic"

    def __init__(self, rules: Mapping[str, Mapping[str, float]]):
        table = {}
        for cls_name, row in rules.items():
            if cls_name.startswith("_"):
                continue
            missing = [f for f in SPEC_FIELDS if f not in row]
            if missing:
                raise ConfigError(f"rule table entry {cls_name!r} lacks {', '.join(missing)}")
            table[cls_name] = {f: float(row[f]) for f in SPEC_FIELDS}
        self.rules = table

    @classmethod
    def from_file(cls, path: str | Path | None = None) -> DeterministicBackend:
        if path is None:
            text = resources.files("sdpp.data").joinpath("manual_rules.json").read_text("utf-8")
        else:
            try:
                text = Path(path).read_text("utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read rule table {path}: {exc}") from None
        return cls(json.loads(text))

    def extract(self, query: ExtractionQuery, retrieved: Sequence[Chunk] = ()) -> dict[str, float]:
        cls_name = query.segment.highway_class
        row = self.rules.get(cls_name)
        if row is None:
            raise ConfigError(f"rule table has no entry for road class {cls_name!r}")
        return {f: row[f] for f in query.fields}


class RemoteBackend:
    """Chat-completion client with bounded retries and an in-flight limit.

    The bearer token is read from ``SDPP_LLM_API_KEY`` unless given
    explicitly. ``transport`` is passed through to :class:`httpx.Client` and is
    mainly useful for tests.
    """

    name = "remote"

    def __init__(
        self,
        base_url: str,
        model: str,
        template: PromptTemplate,
        *,
        api_key: str | None = None,
        retries: int = DEFAULT_RETRIES,
        max_in_flight: int = 4,
        timeout: float = 60.0,
        temperature: float = 0.0,
        transport: httpx.BaseTransport | None = None,
    ):
        if not base_url:
            raise ConfigError("remote backend needs a base URL")
        if not model:
            raise ConfigError("remote backend needs a model name")
        self.model = model
        self.template = template
        self.retries = retries
        self.temperature = temperature
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"), headers=headers, timeout=timeout, transport=transport
        )
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def close(self):
        self._client.close()

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        with self._slots:
            resp = self._client.post("/chat/completions", json=payload)
        resp.raise_for_status()
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError(f"unexpected completion response: {exc!r}") from None

    def extract(self, query: ExtractionQuery, retrieved: Sequence[Chunk]) -> dict[str, float]:
        prompt = build_prompt(query, retrieved, self.template)
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                raw = self.complete(prompt)
            except (httpx.HTTPError, BackendError) as exc:
                last = exc
                logger.warning("way %s: request failed (attempt %d): %s",
                               query.segment.way_id, attempt + 1, exc)
                continue
            try:
                values = parse_spec_response(raw)
                missing = [f for f in query.fields if f not in values]
                if missing:
                    raise ExtractionError(f"reply lacks {', '.join(missing)}")
                return {f: values[f] for f in query.fields}
            except ExtractionError as exc:
                last = exc
                logger.warning("way %s: unusable reply (attempt %d): %s",
                               query.segment.way_id, attempt + 1, exc)
        if isinstance(last, ExtractionError):
            raise last
        raise BackendError(f"way {query.segment.way_id}: backend unreachable: {last}")


class RemoteEmbedder:
    """Embeds text through an OpenAI-style ``/embeddings`` endpoint.

    Drop-in replacement for :func:`~sdpp.knowledge.retrieval.embed_text` when
    building a :class:`VectorStore`.
    """

    def __init__(self, base_url: str, model: str, *, api_key: str | None = None,
                 timeout: float = 60.0, transport: httpx.BaseTransport | None = None):
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.model = model
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"), headers=headers, timeout=timeout, transport=transport
        )

    def __call__(self, text: str) -> np.ndarray:
        try:
            resp = self._client.post("/embeddings", json={"model": self.model, "input": text})
            resp.raise_for_status()
            return np.asarray(resp.json()["data"][0]["embedding"], dtype=float)
        except httpx.HTTPError as exc:
            raise BackendError(f"embedding request failed: {exc}") from None


def retrieval_query(query: ExtractionQuery) -> str:
    seg = query.segment
    wanted = " ".join(f.replace("_", " ") for f in query.fields)
    words = [wanted, "for", seg.highway_class.replace("_", " "), "road", f"{seg.lane_count} lanes"]
    if seg.oneway:
        words.append("one-way")
    if seg.has_bike_lane:
        words.append("bike lane")
    return " ".join(words)


@dataclass(frozen=True)
class Extraction:
    values: dict[str, float]
    provenance: tuple[int, ...]


def extract_road_spec(
    query: ExtractionQuery,
    backend: ExtractionBackend,
    store: VectorStore | None,
    k: int = DEFAULT_K,
) -> Extraction:
    """Retrieve manual context for ``query`` and ask ``backend`` for the target fields.

    Retrieval always runs when a non-empty store is available so the chunks
    consulted are recorded as provenance, even for the rule-table backend.
    """
    retrieved: list[Chunk] = []
    if store is not None and len(store):
        retrieved = [c for c, _ in retrieve_top_k(store, retrieval_query(query), k)]
    values = backend.extract(query, retrieved)
    return Extraction(values, tuple(c.index for c in retrieved))
