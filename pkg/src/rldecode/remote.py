"""Client for an external logprob endpoint, adapted to the token-source contract.

The wire protocol is a minimal JSON POST: request {"prefix": str, "k": int},
response {"top_logprobs": [[token, logprob], ...], "hidden": [...] | null}
with entries sorted descending. Transport failures retry with exponential
backoff and surface as connectivity errors; malformed bodies surface as
protocol errors so callers can tell an unreachable server from a broken one.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from .lm import EOS_TOKEN, StepOutput, Vocab, detokenize

FLOOR_LOGIT_GAP = 10.0
BACKOFF_BASE_SECONDS = 0.1
BACKOFF_FACTOR = 2.0


class RemoteConnectivityError(Exception):
    """Transport kept failing after the configured retries."""


class RemoteProtocolError(Exception):
    """The server answered, but the body violates the wire protocol."""


@dataclass(frozen=True)
class RemoteConfig:
    endpoint_url: str
    top_k: int = 50
    timeout_ms: int = 5000
    max_retries: int = 2

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.timeout_ms <= 0:
            raise ValueError(f"timeout_ms must be positive, got {self.timeout_ms}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")


@dataclass(frozen=True)
class RemoteStep:
    """Parsed response: descending (token, logprob) pairs plus optional hidden."""

    top_entries: tuple
    hidden_summary: np.ndarray | None = field(default=None)
    is_eos_available: bool = False


def _post_json(url: str, body: dict, timeout_s: float) -> dict:
    """Single POST; raises requests transport exceptions through."""
    response = requests.post(url, json=body, timeout=timeout_s)
    return {"status": response.status_code, "json": response.json()}


def _parse_step(payload: dict, top_k: int) -> RemoteStep:
    if not isinstance(payload, dict) or "top_logprobs" not in payload:
        raise RemoteProtocolError("response missing required field 'top_logprobs'")
    raw_entries = payload["top_logprobs"]
    if not isinstance(raw_entries, list) or not raw_entries:
        raise RemoteProtocolError("'top_logprobs' must be a nonempty list")
    if len(raw_entries) > top_k:
        raise RemoteProtocolError(
            f"server returned {len(raw_entries)} entries, more than k={top_k}")
    entries = []
    for item in raw_entries:
        if (not isinstance(item, (list, tuple)) or len(item) != 2
                or not isinstance(item[0], str)
                or not isinstance(item[1], (int, float))
                or isinstance(item[1], bool)):
            raise RemoteProtocolError(f"malformed logprob entry: {item!r}")
        logprob = float(item[1])
        if not math.isfinite(logprob):
            raise RemoteProtocolError(f"non-finite logprob for {item[0]!r}")
        entries.append((item[0], logprob))
    probs = [lp for _, lp in entries]
    if any(a < b for a, b in zip(probs, probs[1:])):
        raise RemoteProtocolError("'top_logprobs' entries are not sorted descending")
    hidden = payload.get("hidden")
    if hidden is not None:
        if not isinstance(hidden, list) or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool)
                for x in hidden):
            raise RemoteProtocolError("'hidden' must be null or a list of numbers")
        hidden = np.asarray(hidden, dtype=np.float64)
        if not np.all(np.isfinite(hidden)):
            raise RemoteProtocolError("'hidden' contains non-finite values")
    return RemoteStep(top_entries=tuple(entries), hidden_summary=hidden,
                      is_eos_available=any(tok == EOS_TOKEN for tok, _ in entries))


def fetch_step(cfg: RemoteConfig, prefix_text: str) -> RemoteStep:
    """POST the prefix, retrying transport failures with exponential backoff."""
    body = {"prefix": prefix_text, "k": cfg.top_k}
    url = cfg.endpoint_url.rstrip("/") + "/step"
    timeout_s = cfg.timeout_ms / 1000.0
    last_exc = None
    for attempt in range(cfg.max_retries + 1):
        try:
            result = _post_json(url, body, timeout_s)
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_exc = exc
            if attempt < cfg.max_retries:
                time.sleep(BACKOFF_BASE_SECONDS * BACKOFF_FACTOR ** attempt)
            continue
        except requests.RequestException as exc:
            raise RemoteConnectivityError(f"transport failure: {exc}") from exc
        if result["status"] != 200:
            raise RemoteProtocolError(
                f"server answered with HTTP {result['status']}")
        return _parse_step(result["json"], cfg.top_k)
    raise RemoteConnectivityError(
        f"unreachable after {cfg.max_retries + 1} attempts: {last_exc}")


class RemoteLM:
    """Adapter exposing next_logits over a session vocabulary.

    Tokens outside the returned top-k get a floor logit of min_entry - 10;
    with k around 50 and top-p filtering, the floored tail never survives
    sampling in practice. The session vocabulary grows as new tokens appear,
    starting from the reserved EOS/UNK pair.
    """

    def __init__(self, cfg: RemoteConfig, hidden_dim: int = 0):
        self.cfg = cfg
        self.vocab = Vocab.from_corpus_tokens(())
        self._hidden_dim = hidden_dim

    @property
    def hidden_dim(self) -> int:
        return self._hidden_dim

    def next_logits(self, prefix_ids: list[int]) -> StepOutput:
        prefix_text = detokenize([self.vocab.token_of(i) for i in prefix_ids])
        step = self.fetch(prefix_text)
        return self.embed(step, prefix_len=len(prefix_ids))

    def fetch(self, prefix_text: str) -> RemoteStep:
        return fetch_step(self.cfg, prefix_text)

    def embed(self, step: RemoteStep, prefix_len: int = 0) -> StepOutput:
        """Spread top-k entries over the session vocab, flooring the rest."""
        self.vocab = self.vocab.extended(tok for tok, _ in step.top_entries)
        floor = min(lp for _, lp in step.top_entries) - FLOOR_LOGIT_GAP
        logits = np.full(len(self.vocab), floor, dtype=np.float64)
        for tok, lp in step.top_entries:
            logits[self.vocab.id_of(tok)] = lp
        hidden = step.hidden_summary
        if hidden is not None and self._hidden_dim == 0:
            self._hidden_dim = hidden.size
        return StepOutput(logits=logits, prefix_len=prefix_len,
                          hidden_summary=hidden)


def remote_next(cfg_or_lm, prefix_text: str) -> StepOutput:
    """One-shot adapter call: fetch the step and embed it as a StepOutput."""
    lm = cfg_or_lm if isinstance(cfg_or_lm, RemoteLM) else RemoteLM(cfg_or_lm)
    step = lm.fetch(prefix_text)
    return lm.embed(step)
