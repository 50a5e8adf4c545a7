"""Judge clients for benchmark refinement.

A judge answers two tasks: pick the target among four candidate images
(validate) and rewrite a modification text at three detail levels (generate).
validate() returns a candidate position 0..3, -1 for "ambiguous or absent",
or None for a refusal. Candidates travel by id; rendering them is the judge
implementation's concern.
"""

from __future__ import annotations

import json
import threading
import time
from abc import ABC, abstractmethod
from pathlib import Path

import requests

from .errors import DataError, JudgeError

REFUSAL_PREFIX = "I apologize"


class JudgeClient(ABC):
    """Implementations must not mutate refinement state and must tolerate
    concurrent calls."""

    @abstractmethod
    def validate(self, ref_id, candidate_ids, mod_text):
        """Return 0..3 (picked candidate), -1 (ambiguous/absent), or None
        (refusal)."""

    @abstractmethod
    def generate(self, ref_id, target_id, old_text, good_examples):
        """Return exactly three replacement texts, coarsest first."""


class MockJudge(JudgeClient):
    """Deterministic scripted judge driven by a fixture dict.

    Fixture schema::

        {
          "targets": {"<ref_id>": "<target_id>", ...},
          "validate": {"<ref_id>|<text>": ["correct", "wrong", "refuse",
                                           "minus_one", ...], ...},
          "generate": {"<ref_id>|<old_text>": ["t1", "t2", "t3"], ...},
          "default_validate": "correct"
        }

    Behaviors are consumed per (ref_id, text) key in call order, cycling if
    a key is asked more often than scripted. "correct" answers the target's
    current position, "wrong" a deterministic other position. Reference ids
    must identify their triplet uniquely.
    """

    def __init__(self, fixture: dict):
        self.targets = dict(fixture.get("targets", {}))
        self.validate_script = {k: list(v) for k, v in fixture.get("validate", {}).items()}
        self.generate_script = {k: list(v) for k, v in fixture.get("generate", {}).items()}
        self.default_validate = fixture.get("default_validate", "correct")
        self._counts: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "MockJudge":
        try:
            fixture = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: cannot read judge fixture ({exc})") from exc
        return cls(fixture)

    def _next_behavior(self, key):
        with self._lock:
            n = self._counts.get(key, 0)
            self._counts[key] = n + 1
        script = self.validate_script.get(key)
        if not script:
            return self.default_validate
        return script[n % len(script)]

    def validate(self, ref_id, candidate_ids, mod_text):
        behavior = self._next_behavior(f"{ref_id}|{mod_text}")
        if behavior == "refuse":
            return None
        if behavior == "minus_one":
            return -1
        target = self.targets.get(ref_id)
        target_pos = candidate_ids.index(target) if target in candidate_ids else -1
        if behavior == "correct":
            return target_pos
        if behavior == "wrong":
            return (target_pos + 1) % len(candidate_ids)
        raise DataError(f"unknown scripted behavior {behavior!r}")

    def generate(self, ref_id, target_id, old_text, good_examples):
        scripted = self.generate_script.get(f"{ref_id}|{old_text}")
        if scripted is not None:
            return list(scripted)
        return [
            f"{old_text}, revised",
            f"{old_text}, revised with more detail",
            f"{old_text}, revised with the most detail",
        ]


class HttpJudge(JudgeClient):
    """Judge behind an HTTP JSON endpoint.

    Requests: {"task": "validate", "ref_id", "candidates", "text"} or
    {"task": "generate", "ref_id", "target_id", "text", "examples"}.
    Responses: {"answer": int|null, "raw": str} respectively
    {"texts": [...], "raw": str}; a null answer whose raw text starts with
    "I apologize" counts as a refusal. Failures retry twice with exponential
    backoff before raising JudgeError.
    """

    def __init__(self, url, timeout=30.0, retries=2, backoff=0.5, session=None):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()

    def _post(self, payload: dict) -> dict:
        last_error = None
        for attempt in range(self.retries + 1):
            try:
                response = self.session.post(self.url, json=payload, timeout=self.timeout)
                response.raise_for_status()
                return response.json()
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2 ** attempt))
        raise JudgeError(f"judge at {self.url} failed after "
                         f"{self.retries + 1} attempts: {last_error}")

    def validate(self, ref_id, candidate_ids, mod_text):
        body = self._post(
            {
                "task": "validate",
                "ref_id": ref_id,
                "candidates": list(candidate_ids),
                "text": mod_text,
            }
        )
        answer = body.get("answer")
        if answer is None:
            raw = body.get("raw", "")
            if isinstance(raw, str) and raw.startswith(REFUSAL_PREFIX):
                return None
            raise JudgeError(f"judge returned no answer and no refusal: {body!r}")
        if not isinstance(answer, int) or not -1 <= answer < len(candidate_ids):
            raise JudgeError(f"judge answer out of range: {answer!r}")
        return answer

    def generate(self, ref_id, target_id, old_text, good_examples):
        body = self._post(
            {
                "task": "generate",
                "ref_id": ref_id,
                "target_id": target_id,
                "text": old_text,
                "examples": list(good_examples),
            }
        )
        texts = body.get("texts")
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            raise JudgeError(f"judge returned malformed texts: {body!r}")
        return texts


def judge_from_spec(spec: str) -> JudgeClient:
    """Build a judge from a CLI spec: "mock:<fixture.json>" or "http:<url>"."""
    if spec.startswith("mock:"):
        return MockJudge.from_file(spec[len("mock:"):])
    if spec.startswith(("http://", "https://")):
        return HttpJudge(spec)
    if spec.startswith("http:"):
        return HttpJudge("http://" + spec[len("http:"):].lstrip("/"))
    raise DataError(f"judge spec must be mock:<fixture> or http:<url>, got {spec!r}")
