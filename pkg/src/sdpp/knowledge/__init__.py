"""Road-manual ingestion, retrieval and width extraction."""

from .backends import (
    API_KEY_ENV,
    DeterministicBackend,
    Extraction,
    ExtractionBackend,
    RemoteBackend,
    RemoteEmbedder,
    RoadSpec,
    SpecError,
    extract_road_spec,
    make_road_spec,
    retrieval_query,
)
from .prompts import (
    SPEC_FIELDS,
    ExtractionError,
    ExtractionQuery,
    PromptTemplate,
    SpecRangeError,
    build_prompt,
    load_templates,
    parse_spec_response,
    render_spec_fields,
)
from .retrieval import (
    Chunk,
    VectorStore,
    build_store,
    chunk_document,
    embed_text,
    reconstruct,
    retrieve_top_k,
)

__all__ = [
    "API_KEY_ENV",
    "Chunk",
    "DeterministicBackend",
    "Extraction",
    "ExtractionBackend",
    "ExtractionError",
    "ExtractionQuery",
    "PromptTemplate",
    "RemoteBackend",
    "RemoteEmbedder",
    "RoadSpec",
    "SPEC_FIELDS",
    "SpecError",
    "SpecRangeError",
    "VectorStore",
    "build_prompt",
    "build_store",
    "chunk_document",
    "embed_text",
    "extract_road_spec",
    "load_templates",
    "make_road_spec",
    "parse_spec_response",
    "reconstruct",
    "render_spec_fields",
    "retrieval_query",
    "retrieve_top_k",
]
