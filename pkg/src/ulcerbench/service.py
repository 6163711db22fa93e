"""Blind competition-style scoring service.

Submissions (detections files) are POSTed, scored asynchronously against a
hidden ground-truth table loaded at startup, and only the aggregate F1/mAP
ever leaves the process -- responses never carry ground-truth coordinates or
per-image detail.  Scoring delegates to metrics.evaluate_dataset, so service
scores equal offline evaluation of the same files exactly.

Persistence is an append-only event log (one record per submission, one per
score event) plus the stored submission bodies; the in-memory state is
rebuilt from the log at startup and still-unscored submissions are
re-enqueued.  Detections referencing image ids outside the ground truth are
counted as false positives rather than rejected, so the server never leaks
which ids exist.
"""

from __future__ import annotations

import json
import queue
import threading
import uuid
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .io import GroundTruthTable, parse_detections
from .metrics import DEFAULT_MATCH, MatchConfig, evaluate_dataset
from .types import FormatError, ValidationError

DEFAULT_MAX_BODY_BYTES = 16 << 20


class OversizeSubmission(ValueError):
    """Submission body exceeds the configured size limit."""


class ScoringService:
    """State machine behind the HTTP endpoints; usable directly in-process."""

    def __init__(
        self,
        ground_truth: GroundTruthTable,
        data_dir,
        match_cfg: MatchConfig = DEFAULT_MATCH,
        max_body_bytes: int = DEFAULT_MAX_BODY_BYTES,
    ):
        if not ground_truth.images:
            raise ValidationError("ground truth table has no images")
        self._gt = ground_truth
        self._match_cfg = match_cfg
        self._max_body_bytes = int(max_body_bytes)
        self._data_dir = Path(data_dir)
        self._bodies_dir = self._data_dir / "submissions"
        self._log_path = self._data_dir / "events.jsonl"
        self._bodies_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._subs: dict[str, dict] = {}
        self._next_seq = 1
        self._queue: queue.Queue = queue.Queue()
        self._worker: threading.Thread | None = None
        self._replay_log()
        for sid in self.pending_ids():
            self._queue.put(sid)

    # ------------------------------------------------------------ persistence

    def _replay_log(self) -> None:
        if not self._log_path.exists():
            return
        for lineno, line in enumerate(
            self._log_path.read_text(encoding="utf-8").splitlines(), start=1
        ):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{self._log_path}: line {lineno}: {exc}") from None
            kind = event.get("event")
            if kind == "submission":
                sid = event["id"]
                self._subs[sid] = {
                    "submitter": event["submitter"],
                    "received_at": event["received_at"],
                    "seq": int(event["seq"]),
                    "scored": False,
                    "f1": None,
                    "map": None,
                }
                self._next_seq = max(self._next_seq, int(event["seq"]) + 1)
            elif kind == "score":
                sid = event["id"]
                if sid not in self._subs:
                    raise FormatError(
                        f"{self._log_path}: line {lineno}: score for unknown submission {sid!r}"
                    )
                self._subs[sid].update(
                    scored=True, f1=float(event["f1"]), map=float(event["map"])
                )
            else:
                raise FormatError(
                    f"{self._log_path}: line {lineno}: unknown event {kind!r}"
                )

    def _append_event(self, event: dict) -> None:
        with self._log_path.open("a", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()

    # -------------------------------------------------------------- ingestion

    def ingest(self, body: bytes, submitter: str = "anonymous") -> str:
        """Validate, store, and enqueue a submission; returns its id.

        Raises OversizeSubmission or FormatError without storing anything.
        """
        if len(body) > self._max_body_bytes:
            raise OversizeSubmission(
                f"submission is {len(body)} bytes, limit is {self._max_body_bytes}"
            )
        text = body.decode("utf-8")
        parse_detections(text, source="submission")  # reject before storing
        sid = uuid.uuid4().hex
        received_at = datetime.now(timezone.utc).isoformat()
        (self._bodies_dir / f"{sid}.txt").write_text(
            text, encoding="utf-8", newline="\n"
        )
        with self._lock:
            seq = self._next_seq
            self._next_seq += 1
            self._append_event(
                {
                    "event": "submission",
                    "id": sid,
                    "received_at": received_at,
                    "seq": seq,
                    "submitter": submitter,
                }
            )
            self._subs[sid] = {
                "submitter": submitter,
                "received_at": received_at,
                "seq": seq,
                "scored": False,
                "f1": None,
                "map": None,
            }
        self._queue.put(sid)
        return sid

    # ---------------------------------------------------------------- scoring

    def score_one(self, sid: str) -> None:
        """Score a stored submission; already-scored ids are left untouched
        (re-scoring is idempotent because the inputs are immutable)."""
        with self._lock:
            if sid not in self._subs or self._subs[sid]["scored"]:
                return
        text = (self._bodies_dir / f"{sid}.txt").read_text(encoding="utf-8")
        dets = parse_detections(text, source=f"submission {sid}")
        report = evaluate_dataset(
            dets, self._gt.images, masks=None, cfg=self._match_cfg, unknown_ids="fp"
        )
        with self._lock:
            self._append_event(
                {"event": "score", "f1": report.det_f1, "id": sid, "map": report.map_score}
            )
            self._subs[sid].update(scored=True, f1=report.det_f1, map=report.map_score)

    def pending_ids(self) -> list[str]:
        with self._lock:
            pending = [
                (rec["seq"], sid) for sid, rec in self._subs.items() if not rec["scored"]
            ]
        return [sid for _, sid in sorted(pending)]

    def score_pending(self) -> int:
        """Score everything currently pending, synchronously."""
        ids = self.pending_ids()
        for sid in ids:
            self.score_one(sid)
        return len(ids)

    def start_worker(self) -> None:
        if self._worker is not None:
            return
        self._worker = threading.Thread(target=self._worker_loop, daemon=True)
        self._worker.start()

    def stop_worker(self) -> None:
        if self._worker is None:
            return
        self._queue.put(None)
        self._worker.join()
        self._worker = None

    def _worker_loop(self) -> None:
        while True:
            sid = self._queue.get()
            if sid is None:
                return
            self.score_one(sid)

    # ------------------------------------------------------------------ views

    def submission_view(self, sid: str) -> dict | None:
        with self._lock:
            rec = self._subs.get(sid)
            if rec is None:
                return None
            view = {
                "received_at": rec["received_at"],
                "status": "scored" if rec["scored"] else "pending",
                "submission_id": sid,
                "submitter": rec["submitter"],
            }
            if rec["scored"]:
                view["f1"] = rec["f1"]
                view["map"] = rec["map"]
            return view

    def leaderboard_view(self) -> list[dict]:
        """Scored submissions ranked by F1 desc, then mAP desc, then arrival."""
        with self._lock:
            scored = [
                (sid, rec) for sid, rec in self._subs.items() if rec["scored"]
            ]
        scored.sort(key=lambda item: (-item[1]["f1"], -item[1]["map"], item[1]["seq"]))
        return [
            {
                "f1": rec["f1"],
                "map": rec["map"],
                "rank": rank,
                "submission_id": sid,
                "submitter": rec["submitter"],
            }
            for rank, (sid, rec) in enumerate(scored, start=1)
        ]


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    service: ScoringService  # set on the server class

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, status: int, payload) -> None:
        body = (json.dumps(payload, sort_keys=True) + "\n").encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        url = urlparse(self.path)
        if url.path != "/submissions":
            self._send_json(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        service = self.server.service  # type: ignore[attr-defined]
        if length > service._max_body_bytes:
            self._send_json(413, {"error": "submission too large"})
            return
        body = self.rfile.read(length)
        submitter = parse_qs(url.query).get("submitter", ["anonymous"])[0]
        try:
            sid = service.ingest(body, submitter=submitter)
        except OversizeSubmission as exc:
            self._send_json(413, {"error": str(exc)})
            return
        except (FormatError, UnicodeDecodeError) as exc:
            self._send_json(400, {"error": str(exc)})
            return
        self._send_json(201, {"status": "pending", "submission_id": sid})

    def do_GET(self):
        url = urlparse(self.path)
        service = self.server.service  # type: ignore[attr-defined]
        if url.path == "/leaderboard":
            self._send_json(200, {"entries": service.leaderboard_view()})
            return
        prefix = "/submissions/"
        if url.path.startswith(prefix):
            view = service.submission_view(url.path[len(prefix):])
            if view is None:
                self._send_json(404, {"error": "unknown submission"})
            else:
                self._send_json(200, view)
            return
        self._send_json(404, {"error": "not found"})


def make_server(service: ScoringService, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """HTTP server bound to the service; port 0 picks an ephemeral port."""
    server = ThreadingHTTPServer((host, port), _Handler)
    server.service = service  # type: ignore[attr-defined]
    return server
