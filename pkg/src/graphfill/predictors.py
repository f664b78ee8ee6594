"""Pluggable prediction backends with batching and bounded retry.

Two built-in backends: a remote chat-completions client (OpenAI-compatible
wire format, credentials from the environment only) and a deterministic
local mock that averages the previous estimate with the neighbor mean.
``predict_batch`` renders each task's prompt, dispatches with bounded
concurrency, parses the completion, retries failures up to a cap, and
falls back to temporal persistence when the cap is exhausted.
"""
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import requests

from .prompts import CompletionParseError, NodeTask, build_prompt, parse_completion

API_KEY_ENV = "OPENAI_API_KEY"
ENDPOINT_ENV = "OPENAI_BASE_URL"


class TransportError(RuntimeError):
    """Backend transport failure: HTTP error, timeout, or malformed body."""


@dataclass(frozen=True)
class PredictorConfig:
    backend: str = "mock"
    endpoint_url: str = ""
    model_name: str = ""
    temperature: float = 0.0
    max_retries: int = 2
    request_timeout: float = 30.0
    max_concurrency: int = 4
    multi_task_prompt: bool = False

    def __post_init__(self):
        if self.backend not in ("mock", "remote"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.temperature < 0.0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.request_timeout <= 0.0:
            raise ValueError("request_timeout must be positive")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")

    def resolved_endpoint(self) -> str:
        return self.endpoint_url or os.environ.get(ENDPOINT_ENV, "")


def validate_predictor_config(cfg: PredictorConfig) -> None:
    """Fail fast on unusable remote configuration, before any network call."""
    if cfg.backend == "remote":
        if not cfg.resolved_endpoint():
            raise ValueError(
                f"remote backend needs an endpoint URL (config endpoint_url or ${ENDPOINT_ENV})"
            )
        if not os.environ.get(API_KEY_ENV):
            raise ValueError(f"remote backend needs credentials in ${API_KEY_ENV}")


@dataclass(frozen=True)
class PredictionResult:
    node: int
    t: int
    value: float
    attempts: int
    backend_latency: float = 0.0
    fallback: bool = False


def mock_predict(task: NodeTask) -> float:
    """Deterministic offline prediction: average of memory and neighborhood.

    With neighbors present, returns ``0.5 * previous + 0.5 * mean(neighbors)``
    rounded to the task's precision; otherwise the previous value persists.
    """
    if task.neighbor_values:
        value = 0.5 * task.previous + 0.5 * (sum(task.neighbor_values) / len(task.neighbor_values))
    else:
        value = task.previous
    return round(value, task.precision)


def _mock_backend(system_text: str, user_text: str, tasks) -> str:
    del system_text, user_text
    return "\n".join(f"{mock_predict(task):.{task.precision}f}" for task in tasks)


def remote_complete(system_text: str, user_text: str, cfg: PredictorConfig) -> str:
    """One chat-completions call; returns the first choice's text content.

    Raises:
        TransportError: on timeout, connection failure, HTTP >= 400, or a
            response body without ``choices[0].message.content``. Retrying
            lives upstream in :func:`predict_batch`.
    """
    url = cfg.resolved_endpoint().rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(API_KEY_ENV, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    body = {
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "messages": [
            {"role": "system", "content": system_text},
            {"role": "user", "content": user_text},
        ],
    }
    try:
        resp = requests.post(url, json=body, headers=headers, timeout=cfg.request_timeout)
    except requests.RequestException as exc:
        raise TransportError(f"request to {url} failed: {exc}") from exc
    if resp.status_code >= 400:
        raise TransportError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed response body from {url}: {exc}") from exc
    if not isinstance(content, str):
        raise TransportError(f"non-text completion content from {url}")
    return content


def estimate_tokens(text: str) -> int:
    """Crude token estimate from character length (~4 chars per token)."""
    return math.ceil(len(text) / 4)


def _resolve_backend(cfg: PredictorConfig, backend):
    if backend is not None:
        return backend, True
    if cfg.backend == "mock":
        return _mock_backend, False
    validate_predictor_config(cfg)
    return (lambda system_text, user_text, tasks: remote_complete(system_text, user_text, cfg)), True


def _entry(task: NodeTask, pair, completion, result: PredictionResult) -> dict:
    return {
        "t": task.t,
        "node": task.node,
        "prompt": pair.user_text,
        "completion": completion,
        "parsed": result.value,
        "attempts": result.attempts,
        "fallback": result.fallback,
    }


def _predict_one(task: NodeTask, cfg: PredictorConfig, backend, timed: bool) -> tuple:
    elapsed_ms = 0.0
    attempts = 0
    completion = None
    pair = None
    for _ in range(cfg.max_retries + 1):
        attempts += 1
        pair = build_prompt([task])
        start = time.perf_counter()
        try:
            completion = backend(pair.system_text, pair.user_text, [task])
            values = parse_completion(completion, expected_count=1, precision=task.precision)
        except TransportError:
            completion = None
            if timed:
                elapsed_ms += (time.perf_counter() - start) * 1000.0
            continue
        except CompletionParseError:
            if timed:
                elapsed_ms += (time.perf_counter() - start) * 1000.0
            continue
        if timed:
            elapsed_ms += (time.perf_counter() - start) * 1000.0
        result = PredictionResult(
            node=task.node, t=task.t, value=values[0], attempts=attempts, backend_latency=elapsed_ms
        )
        return result, _entry(task, pair, completion, result)
    result = PredictionResult(
        node=task.node,
        t=task.t,
        value=task.previous,
        attempts=attempts,
        backend_latency=elapsed_ms,
        fallback=True,
    )
    return result, _entry(task, pair, completion, result)


def _predict_joint(tasks, cfg: PredictorConfig, backend, timed: bool) -> list:
    """One prompt covering every task; parse count must match exactly."""
    elapsed_ms = 0.0
    attempts = 0
    completion = None
    pair = None
    for _ in range(cfg.max_retries + 1):
        attempts += 1
        pair = build_prompt(tasks)
        start = time.perf_counter()
        try:
            completion = backend(pair.system_text, pair.user_text, tasks)
            values = parse_completion(completion, expected_count=len(tasks), precision=tasks[0].precision)
        except TransportError:
            completion = None
            if timed:
                elapsed_ms += (time.perf_counter() - start) * 1000.0
            continue
        except CompletionParseError:
            if timed:
                elapsed_ms += (time.perf_counter() - start) * 1000.0
            continue
        if timed:
            elapsed_ms += (time.perf_counter() - start) * 1000.0
        per_task = elapsed_ms / len(tasks)
        out = []
        for task, v in zip(tasks, values):
            result = PredictionResult(
                node=task.node, t=task.t, value=v, attempts=attempts, backend_latency=per_task
            )
            out.append((result, _entry(task, pair, completion, result)))
        return out
    per_task = elapsed_ms / len(tasks)
    out = []
    for task in tasks:
        result = PredictionResult(
            node=task.node,
            t=task.t,
            value=task.previous,
            attempts=attempts,
            backend_latency=per_task,
            fallback=True,
        )
        out.append((result, _entry(task, pair, completion, result)))
    return out


def predict_batch(tasks, cfg: PredictorConfig, backend=None, with_transcript: bool = False):
    """Predict one value per task, preserving input order.

    Args:
        tasks: Nonempty list of tasks sharing one time index.
        cfg: Backend selection, retry cap, and concurrency bound.
        backend: Optional callable ``(system_text, user_text, tasks) -> str``
            overriding the configured backend (used by tests and stubs).
        with_transcript: Also return one transcript entry per task
            (prompt, completion, parsed value, attempt count).

    Each task consumes at most ``max_retries + 1`` backend calls; a task
    still failing after that yields its previous value, flagged as a
    fallback. Transport errors count as failed attempts; they never abort
    the batch.
    """
    tasks = list(tasks)
    if not tasks:
        raise ValueError("tasks must be nonempty")
    t0 = tasks[0].t
    if any(task.t != t0 for task in tasks):
        raise ValueError("all tasks in a batch must share the same time index")

    resolved, timed = _resolve_backend(cfg, backend)
    if cfg.multi_task_prompt:
        pairs = _predict_joint(tasks, cfg, resolved, timed)
    elif len(tasks) == 1 or cfg.max_concurrency == 1:
        pairs = [_predict_one(task, cfg, resolved, timed) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=min(cfg.max_concurrency, len(tasks))) as pool:
            pairs = list(pool.map(lambda task: _predict_one(task, cfg, resolved, timed), tasks))
    results = [r for r, _ in pairs]
    if with_transcript:
        return results, [e for _, e in pairs]
    return results
