#!/usr/bin/env python3
"""
================================================================================
babenko_waves/telemetry.py - Run Journal for Branch Tracing and Reconstruction
================================================================================

PURPOSE:
    Structured event journal for solver runs. Every CLI command opens a run
    directory and the numerics report accepted points, rejected steps,
    folds, secondary bifurcations and terminations through emit_event().
    The journal makes long traces debuggable after the fact.

EVENT SCHEMA (v1.0 - FROZEN):
    {
        "event_version": "1.0",
        "ts": "ISO8601 timestamp",
        "run_id": "unique run identifier",
        "stage": "trace|detect|switch|reconstruct|export|seed",
        "level": "info|warn|error|success",
        "event_type": "trace_start|point_accepted|step_rejected|fold|...",
        "message": "human-readable message (truncated to 500 chars)",
        "counters_delta": {},
        "data": {},
        "artifact_paths": []
    }

STATE SCHEMA (state.json):
    {
        "run_id": "unique identifier",
        "status": "running|completed|error",
        "command": "trace",
        "counters": {...},
        "started_at": "ISO8601",
        "updated_at": "ISO8601"
    }

HOW IT WORKS:
    - init_telemetry() creates <OUT_DIR>/runs/<run_id>/ with state.json,
      config.json and an empty events.jsonl
    - emit_event() buffers events under an RLock (the --jobs worker
      threads share the buffer) and flushes every TELEMETRY_BATCH events,
      on flush_events() and at interpreter exit
    - Before init_telemetry() nothing is written; warn/error events are
      still echoed to stderr as [WARN] / [ERROR]
================================================================================
"""

import atexit
import json
import math
import os
import sys
import threading
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Set

# =============================================================================
# CONFIGURATION - Adjust these for your needs
# =============================================================================

# Output root; runs land in <OUT_DIR>/runs/<run_id>/
# TUNABLE: point at scratch storage for long sweeps
OUT_DIR = os.environ.get("BABENKO_OUT_DIR", "./babenko_out")

# Unique run identifier
# TUNABLE: Auto-generated if not provided
RUN_ID = os.environ.get("BABENKO_RUN_ID", "")

# Batch size for event flushing
# TUNABLE: Increase for less frequent writes, decrease for real-time updates
TELEMETRY_BATCH = int(os.environ.get("BABENKO_TELEMETRY_BATCH", "20"))

MAX_MESSAGE_LENGTH = 500

# =============================================================================
# EVENT SCHEMA VERSION (FROZEN - DO NOT CHANGE)
# =============================================================================

EVENT_VERSION = "1.0"

ALLOWED_EVENT_FIELDS: Set[str] = {
    "event_version",
    "ts",
    "run_id",
    "stage",
    "level",
    "event_type",
    "message",
    "counters_delta",
    "data",
    "artifact_paths",
}

ALLOWED_LEVELS: Set[str] = {"info", "warn", "error", "success"}

EVENT_TYPES: Set[str] = {
    "run_start",
    "run_end",
    "seed_warning",
    "trace_start",
    "point_accepted",
    "step_rejected",
    "resolution_doubled",
    "fold",
    "secondary_bifurcation",
    "bisection_inconclusive",
    "termination",
    "switch_attempt",
    "switch_success",
    "fallback_to_host",
    "reconstruct",
    "export",
    "error",
}

# =============================================================================
# GLOBAL STATE
# =============================================================================

_lock = threading.RLock()
_event_buffer: List[Dict[str, Any]] = []
_initialized = False
_atexit_registered = False


def get_default_counters() -> Dict[str, int]:
    """Counters tracked in state.json."""
    return {
        "points_accepted": 0,
        "steps_rejected": 0,
        "newton_iterations": 0,
        "folds": 0,
        "resolution_doublings": 0,
        "secondary_points": 0,
        "branches_written": 0,
    }


# =============================================================================
# PATH MANAGEMENT
# =============================================================================


def get_run_id() -> str:
    """
    Get or generate run ID.

    HOW IT WORKS:
        - Uses BABENKO_RUN_ID env var if set
        - Otherwise generates run_<timestamp>_<uuid8>
        - Stores in global for subsequent calls
    """
    global RUN_ID
    if not RUN_ID:
        RUN_ID = os.environ.get("BABENKO_RUN_ID", "")
    if not RUN_ID:
        stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        RUN_ID = f"run_{stamp}_{uuid.uuid4().hex[:8]}"
    return RUN_ID


def get_run_dir(run_id: Optional[str] = None) -> Path:
    """runs/<run_id>/ under OUT_DIR."""
    return Path(OUT_DIR) / "runs" / (run_id or get_run_id())


def get_events_path(run_id: Optional[str] = None) -> Path:
    return get_run_dir(run_id) / "events.jsonl"


def get_state_path(run_id: Optional[str] = None) -> Path:
    return get_run_dir(run_id) / "state.json"


def get_config_path(run_id: Optional[str] = None) -> Path:
    return get_run_dir(run_id) / "config.json"


# =============================================================================
# SANITIZING
# =============================================================================


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def sanitize_for_log(value: Any, max_length: int = MAX_MESSAGE_LENGTH) -> Any:
    """
    Make a value JSON-safe for the journal.

    Strings are truncated, non-finite floats become strings, numpy scalars
    become Python numbers and containers are sanitized recursively.
    """
    if isinstance(value, str):
        return value if len(value) <= max_length else value[: max_length - 3] + "..."
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, int):
        return value
    if hasattr(value, "tolist"):
        # numpy scalars and arrays
        return sanitize_for_log(value.tolist(), max_length)
    if isinstance(value, float):
        return value if math.isfinite(value) else str(value)
    if isinstance(value, dict):
        return {str(k): sanitize_for_log(v, max_length) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize_for_log(v, max_length) for v in value]
    return sanitize_for_log(str(value), max_length)


# =============================================================================
# INITIALIZATION
# =============================================================================


def init_telemetry(
    run_id: Optional[str] = None,
    config: Optional[Dict[str, Any]] = None,
    command: str = "",
    out_dir: Optional[str] = None,
) -> str:
    """
    Open a run directory and start journaling.

    HOW IT WORKS:
        1. Resolves OUT_DIR (argument beats BABENKO_OUT_DIR)
        2. Creates runs/<run_id>/
        3. Writes state.json with zeroed counters and config.json
        4. Touches events.jsonl and registers the atexit flush

    ARGS:
        run_id: Unique identifier (auto-generated if not provided)
        config: Validated run configuration snapshot to store with the run
        command: CLI subcommand that opened the run
        out_dir: Output root override

    RETURNS:
        The run_id used for this run
    """
    global _initialized, RUN_ID, OUT_DIR, _atexit_registered

    with _lock:
        if out_dir:
            OUT_DIR = str(out_dir)
        if run_id:
            RUN_ID = run_id

        run_id = get_run_id()
        run_dir = get_run_dir(run_id)
        run_dir.mkdir(parents=True, exist_ok=True)

        state = {
            "run_id": run_id,
            "status": "running",
            "command": command,
            "counters": get_default_counters(),
            "started_at": _utcnow(),
            "updated_at": _utcnow(),
        }
        save_state(state, run_id)

        if config:
            with open(get_config_path(run_id), "w") as f:
                json.dump(sanitize_for_log(config), f, indent=2, sort_keys=True)

        get_events_path(run_id).touch()
        _initialized = True

        if not _atexit_registered:
            atexit.register(flush_events)
            _atexit_registered = True

        return run_id


def reset_telemetry() -> None:
    """Drop buffered events and forget the current run (tests, library use)."""
    global _initialized, RUN_ID, _event_buffer
    with _lock:
        _event_buffer = []
        _initialized = False
        RUN_ID = ""


# =============================================================================
# STATE
# =============================================================================


def get_state(run_id: Optional[str] = None) -> Dict[str, Any]:
    """Load state.json, falling back to an empty idle state."""
    state_file = get_state_path(run_id)
    if state_file.exists():
        try:
            with open(state_file) as f:
                return json.load(f)
        except (json.JSONDecodeError, OSError) as e:
            print(f"[WARN] Failed to load state: {e}", file=sys.stderr)
    return {
        "run_id": run_id or RUN_ID,
        "status": "idle",
        "command": "",
        "counters": get_default_counters(),
    }


def save_state(state: Dict[str, Any], run_id: Optional[str] = None) -> None:
    """
    Save state to state.json atomically.

    HOW IT WORKS:
        - Writes to temp file first
        - os.replace swaps it in so readers never see a partial file
    """
    run_id = run_id or get_run_id()
    state_file = get_state_path(run_id)
    state_file.parent.mkdir(parents=True, exist_ok=True)
    temp_file = state_file.with_suffix(".tmp")

    state["updated_at"] = _utcnow()
    with open(temp_file, "w") as f:
        json.dump(state, f, indent=2)
    os.replace(temp_file, state_file)


def update_counters(delta: Dict[str, int], run_id: Optional[str] = None) -> None:
    """Add `delta` to the counters in state.json."""
    with _lock:
        state = get_state(run_id)
        counters = state.get("counters", get_default_counters())
        for key, value in delta.items():
            counters[key] = counters.get(key, 0) + value
        state["counters"] = counters
        save_state(state, run_id)


def set_status(status: str, run_id: Optional[str] = None) -> None:
    """Mark the run running/completed/error."""
    if not _initialized:
        return
    with _lock:
        state = get_state(run_id)
        state["status"] = status
        save_state(state, run_id)


# =============================================================================
# EVENTS
# =============================================================================


def emit_event(
    event_type: str,
    message: str,
    level: str = "info",
    stage: str = "",
    counters_delta: Optional[Dict[str, int]] = None,
    data: Optional[Dict[str, Any]] = None,
    artifact_paths: Optional[List[str]] = None,
) -> None:
    """
    Emit a journal event.

    HOW IT WORKS:
        1. Echoes warn/error levels to stderr
        2. Returns early when no run is open
        3. Builds the event, enforces ALLOWED_EVENT_FIELDS, sanitizes values
        4. Buffers it and applies counters_delta to state.json
        5. Flushes when the buffer reaches TELEMETRY_BATCH

    ARGS:
        event_type: one of EVENT_TYPES
        message: human-readable message
        level: info, warn, error or success
        stage: numerics stage that produced the event
        counters_delta: counter increments
        data: structured payload (mu, amplitude, indices, ...)
        artifact_paths: files written by the step
    """
    global _event_buffer

    if level not in ALLOWED_LEVELS:
        raise ValueError(f"Invalid event level: {level}. Allowed: {sorted(ALLOWED_LEVELS)}")
    if event_type not in EVENT_TYPES:
        raise ValueError(f"Unknown event type: {event_type}")

    if level == "warn":
        print(f"[WARN] {message}", file=sys.stderr)
    elif level == "error":
        print(f"[ERROR] {message}", file=sys.stderr)

    if not _initialized:
        return

    event = {
        "event_version": EVENT_VERSION,
        "ts": _utcnow(),
        "run_id": get_run_id(),
        "stage": stage or "unknown",
        "level": level,
        "event_type": event_type,
        "message": sanitize_for_log(message, MAX_MESSAGE_LENGTH),
        "counters_delta": sanitize_for_log(counters_delta or {}, 100),
        "data": sanitize_for_log(data or {}, 200),
        "artifact_paths": [str(p) for p in (artifact_paths or [])],
    }
    event = {k: v for k, v in event.items() if k in ALLOWED_EVENT_FIELDS}

    with _lock:
        _event_buffer.append(event)
        if counters_delta:
            update_counters(counters_delta)
        if len(_event_buffer) >= TELEMETRY_BATCH:
            flush_events()


def flush_events() -> None:
    """Append buffered events to events.jsonl."""
    global _event_buffer

    with _lock:
        if not _initialized:
            _event_buffer = []
            return
        if not _event_buffer:
            return

        events_file = get_events_path()
        try:
            events_file.parent.mkdir(parents=True, exist_ok=True)
            with open(events_file, "a") as f:
                for event in _event_buffer:
                    f.write(json.dumps(event, allow_nan=False) + "\n")
        except (OSError, ValueError) as e:
            print(f"[ERROR] Failed to write events: {e}", file=sys.stderr)

        _event_buffer = []


def load_events(run_id: Optional[str] = None) -> List[Dict[str, Any]]:
    """Read a run's journal back, skipping unparsable lines with a warning."""
    events = []
    path = get_events_path(run_id)
    if not path.exists():
        return events
    with open(path) as f:
        for line_num, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(json.loads(line))
            except json.JSONDecodeError as e:
                print(f"[WARN] Line {line_num}: JSON parse error: {e}", file=sys.stderr)
    return events
