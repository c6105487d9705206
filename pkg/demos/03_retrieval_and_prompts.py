"""
Manual retrieval and prompt assembly
====================================

Chunk a road manual, retrieve the passages that matter for a segment and build
the prompt a chat model would see. The deterministic backend then answers from
its rule table, and the response parser shows how a model's free text turns
into metres.
"""

# %%
from importlib import resources

from sdpp.knowledge import (
    DeterministicBackend,
    ExtractionQuery,
    build_prompt,
    build_store,
    chunk_document,
    extract_road_spec,
    load_templates,
    parse_spec_response,
    retrieval_query,
    retrieve_top_k,
)
from sdpp.osm import RoadSegment

manual = resources.files("sdpp.data").joinpath("sample_manual.txt").read_text("utf-8")
chunks = chunk_document(manual, chunk_size=400, overlap=80)
store = build_store(chunks)
print(f"{len(manual)} characters -> {len(chunks)} chunks")

# %%
seg = RoadSegment(7, "residential", "Elm Street", 2, False, True, ((37.0, -122.0), (37.001, -122.0)))
query = ExtractionQuery(seg, "bike_lane_width")
for chunk, score in retrieve_top_k(store, retrieval_query(query), k=3):
    print(f"chunk {chunk.index:>2}  score {score:.3f}  {chunk.text[:60]!r}")

# %%
# Templates differ only in their opening instructions.
templates = load_templates()
context = [c for c, _ in retrieve_top_k(store, retrieval_query(query), k=2)]
print(build_prompt(query, context, templates["P2"]))

# %%
# Model answers come in many shapes; feet are converted, bare numbers are metres.
print(parse_spec_response("- **lane_width**: 11 ft\nbike_lane_width = 1.5"))

# %%
# Offline, the rule-table backend stands in for the model.
result = extract_road_spec(ExtractionQuery(seg), DeterministicBackend.from_file(), store)
print(result.values, "from chunks", result.provenance)
