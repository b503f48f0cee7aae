"""Prompt building, request planning, backends and output parsing."""

from .backends import HttpBackend, Limiter
from .deterministic import DeterministicBackend, deterministic_generate
from .planner import GenerationRequest, Plan, plan_requests, stable_seed
from .prompt import build_generation_prompt, build_judge_prompt
from .runner import RawGeneration, assemble_rows, filter_hallucinations, parse_generation, run_requests

__all__ = [
    "DeterministicBackend", "GenerationRequest", "HttpBackend", "Limiter", "Plan", "RawGeneration",
    "assemble_rows", "build_generation_prompt", "build_judge_prompt", "deterministic_generate",
    "filter_hallucinations", "parse_generation", "plan_requests", "run_requests", "stable_seed",
]
