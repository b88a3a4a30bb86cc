"""Completions HTTP service over a local causal language model.

Speaks the minimal completions protocol: POST /v1/completions with a JSON
body {prompt, max_tokens, temperature, top_p, top_k, stop, logprobs, seed}
returns {choices: [{text, finish_reason, logprobs}]}. Sampling is fully
determined by (model, device, seed, temperature); stop sequences are cut
out of the returned text; per-token logprobs report the model's
temperature-1 distribution (clients rescale as needed).

Single model, single process; inference is serialized behind a lock.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional, Union

import torch
from fastapi import FastAPI, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field


@dataclass
class ShimConfig:
    model_id: str
    device: str = "cpu"
    max_new_tokens_ceiling: int = 512
    port: int = 8000

    def __post_init__(self) -> None:
        if not 0 < self.port < 65536:
            raise ValueError("port out of range")
        if self.max_new_tokens_ceiling < 1:
            raise ValueError("max_new_tokens_ceiling must be >= 1")


@dataclass
class ModelHost:
    model: object
    tokenizer: object
    device: str
    lock: threading.Lock

    @property
    def context_window(self) -> int:
        return int(getattr(self.model.config, "n_positions", None)
                   or getattr(self.model.config, "max_position_embeddings", 2048))


def load_host(config: ShimConfig) -> ModelHost:
    from transformers import AutoModelForCausalLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(config.model_id)
    model = AutoModelForCausalLM.from_pretrained(config.model_id)
    model.to(config.device)
    model.eval()
    return ModelHost(model=model, tokenizer=tokenizer, device=config.device, lock=threading.Lock())


class CompletionBody(BaseModel):
    prompt: str
    max_tokens: int = Field(default=16, ge=1)
    temperature: float = Field(default=1.0, ge=0.0)
    top_p: float = Field(default=1.0, gt=0.0, le=1.0)
    top_k: Optional[int] = Field(default=None, ge=1)
    stop: Optional[Union[str, list[str]]] = None
    logprobs: Optional[int] = Field(default=None, ge=1)
    seed: Optional[int] = None
    model: Optional[str] = None

    def stop_list(self) -> list[str]:
        if self.stop is None:
            return []
        if isinstance(self.stop, str):
            return [self.stop]
        return list(self.stop)


def _first_stop_index(text: str, stops: list[str]) -> Optional[int]:
    cut = None
    for stop in stops:
        if not stop:
            continue
        idx = text.find(stop)
        if idx != -1 and (cut is None or idx < cut):
            cut = idx
    return cut


def _top_alternatives(tokenizer, logprobs: torch.Tensor, n: int) -> dict[str, float]:
    """Top-n alternatives by logprob, keyed by decoded token text; distinct
    texts are guaranteed by scanning past duplicates."""
    width = min(4 * n, logprobs.numel())
    top = torch.topk(logprobs, width)
    out: dict[str, float] = {}
    for lp, idx in zip(top.values.tolist(), top.indices.tolist()):
        text = tokenizer.decode([idx])
        if text not in out:
            out[text] = lp
        if len(out) == n:
            break
    return out


@torch.no_grad()
def generate(host: ModelHost, body: CompletionBody, max_tokens: int) -> dict:
    tokenizer = host.tokenizer
    input_ids = tokenizer(body.prompt, return_tensors="pt").input_ids.to(host.device)
    room = host.context_window - input_ids.shape[1] - 1
    if room < 1:
        raise PromptTooLongError(
            f"prompt occupies {input_ids.shape[1]} of {host.context_window} positions"
        )
    max_tokens = min(max_tokens, room)
    generator = None
    if body.seed is not None:
        generator = torch.Generator(device="cpu")
        generator.manual_seed(body.seed)
    stops = body.stop_list()
    past = None
    current = input_ids
    text = ""
    tokens: list[str] = []
    token_logprobs: list[float] = []
    top_logprobs: list[dict[str, float]] = []
    finish = "length"
    for _ in range(max_tokens):
        output = host.model(input_ids=current, past_key_values=past, use_cache=True)
        logits = output.logits[0, -1, :].float()
        past = output.past_key_values
        reference = torch.log_softmax(logits, dim=-1)
        if body.temperature == 0.0:
            next_id = int(torch.argmax(logits))
        else:
            scaled = logits / body.temperature
            if body.top_k is not None and body.top_k < scaled.numel():
                threshold = torch.topk(scaled, body.top_k).values[-1]
                scaled = torch.where(
                    scaled < threshold, torch.full_like(scaled, float("-inf")), scaled
                )
            probs = torch.softmax(scaled, dim=-1)
            if body.top_p < 1.0:
                sorted_probs, sorted_idx = torch.sort(probs, descending=True)
                cumulative = torch.cumsum(sorted_probs, dim=-1)
                keep = (cumulative - sorted_probs) < body.top_p
                keep[0] = True
                mask = torch.zeros_like(probs, dtype=torch.bool)
                mask[sorted_idx[keep]] = True
                probs = torch.where(mask, probs, torch.zeros_like(probs))
                probs = probs / probs.sum()
            next_id = int(torch.multinomial(probs, 1, generator=generator))
        if next_id == tokenizer.eos_token_id:
            finish = "stop"
            break
        piece = tokenizer.decode([next_id])
        tokens.append(piece)
        token_logprobs.append(float(reference[next_id]))
        if body.logprobs:
            top_logprobs.append(_top_alternatives(tokenizer, reference, body.logprobs))
        text += piece
        cut = _first_stop_index(text, stops)
        if cut is not None:
            text = text[:cut]
            finish = "stop"
            while (
                tokens
                and len("".join(tokens)) > len(text)
                and len("".join(tokens[:-1])) >= len(text)
            ):
                tokens.pop()
                token_logprobs.pop()
                if top_logprobs:
                    top_logprobs.pop()
            break
        current = torch.tensor([[next_id]], device=host.device)
    choice = {"index": 0, "text": text, "finish_reason": finish}
    if body.logprobs:
        choice["logprobs"] = {
            "tokens": tokens,
            "token_logprobs": token_logprobs,
            "top_logprobs": top_logprobs,
        }
    else:
        choice["logprobs"] = None
    return {"object": "text_completion", "choices": [choice]}


class PromptTooLongError(ValueError):
    pass


def create_app(
    config: ShimConfig,
    host: Optional[ModelHost] = None,
    load_in_background: bool = False,
) -> FastAPI:
    """App factory; pass a preloaded host, or let a background thread load
    the model while /health reports 503."""
    app = FastAPI(title="lmxshim")
    app.state.config = config
    app.state.host = host
    app.state.load_error = None

    if host is None and load_in_background:

        def loader() -> None:
            try:
                app.state.host = load_host(config)
            except Exception as err:  # surfaced through /health
                app.state.load_error = str(err)

        threading.Thread(target=loader, daemon=True).start()

    @app.exception_handler(RequestValidationError)
    async def on_invalid_body(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={
                "error": {
                    "message": "invalid request body",
                    "details": jsonable_encoder(exc.errors(), exclude={"input", "ctx"}),
                }
            },
        )

    @app.get("/health")
    def health():
        if app.state.load_error is not None:
            return JSONResponse(
                status_code=503,
                content={"status": "error", "model": config.model_id, "error": app.state.load_error},
            )
        if app.state.host is None:
            return JSONResponse(
                status_code=503, content={"status": "loading", "model": config.model_id}
            )
        return {"status": "ok", "model": config.model_id}

    @app.post("/v1/completions")
    def completions(body: CompletionBody):
        current = app.state.host
        if current is None:
            return JSONResponse(
                status_code=503, content={"error": {"message": "model not loaded"}}
            )
        max_tokens = min(body.max_tokens, config.max_new_tokens_ceiling)
        with current.lock:
            try:
                payload = generate(current, body, max_tokens)
            except PromptTooLongError as err:
                return JSONResponse(status_code=400, content={"error": {"message": str(err)}})
        return payload

    return app
