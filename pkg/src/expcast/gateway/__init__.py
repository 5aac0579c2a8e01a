"""LLM access: prompt assembly, answer parsing and chat-completion backends."""
from .backends import Gateway, HttpBackend, LlmReply, MockBackend, SamplingParams
from .mock import analog_responder, load_mock_script, mock_from_script
from .prompts import (
    PromptBundle,
    RetrievedText,
    build_forecast_prompt,
    build_fusion_prompt,
    build_law_prompt,
    build_summary_prompt,
    build_wisdom_prompt,
    fmt_vector,
    parse_answer,
    render_answer,
)

__all__ = [
    "Gateway",
    "HttpBackend",
    "LlmReply",
    "MockBackend",
    "PromptBundle",
    "RetrievedText",
    "SamplingParams",
    "analog_responder",
    "build_forecast_prompt",
    "build_fusion_prompt",
    "build_law_prompt",
    "build_summary_prompt",
    "build_wisdom_prompt",
    "fmt_vector",
    "load_mock_script",
    "mock_from_script",
    "parse_answer",
    "render_answer",
]
