"""Blinded perceptual study: session assembly, rating collection, and scoring.

A session is a seeded random permutation of real and synthetic images,
equally divided between the two domains. Truth labels and model provenance
never leave the module before scoring: payloads built here are blinded.

Sessions persist as an append-only log, one file per session: the first
line is the session header (including items with their truth labels, which
only the server ever reads back), each following line is one rating.
"""

from __future__ import annotations

import csv
import json
import os
import random
import uuid
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path

from .errors import (
    ConfigError,
    EmptySessionError,
    FormatError,
    NotFoundError,
    OrderViolationError,
    SessionCompleteError,
)

DOMAINS = ("T1", "T2")
JUDGMENTS = ("real", "synthetic")

#: model kinds whose outputs are too obviously synthetic to be worth rating
DEFAULT_EXCLUDED_MODELS = ("generators_s", "simple")

DEFAULT_N_REAL = 96
DEFAULT_N_SYNTHETIC = 72


@dataclass(frozen=True)
class PoolImage:
    """One candidate image for a study: a real image or a model output."""

    image_ref: str
    domain: str
    source_model: str | None = None


@dataclass(frozen=True)
class Composition:
    """How many real and synthetic items a session contains (split evenly by domain)."""

    n_real: int = DEFAULT_N_REAL
    n_synthetic: int = DEFAULT_N_SYNTHETIC

    def __post_init__(self):
        for name, count in (("n_real", self.n_real), ("n_synthetic", self.n_synthetic)):
            if count < 2:
                raise ConfigError(f"{name} must be >= 2, got {count}")
            if count % 2:
                raise ConfigError(
                    f"{name} must be even to divide equally between the two domains, got {count}"
                )

    @property
    def total(self) -> int:
        return self.n_real + self.n_synthetic


@dataclass
class StudyItem:
    item_id: str
    image_ref: str
    domain: str
    truth: str
    source_model: str | None = None

    def __post_init__(self):
        if self.truth == "real" and self.source_model is not None:
            raise ConfigError(f"real item {self.item_id} must not carry a source model")


@dataclass
class RatingRecord:
    item_id: str
    judgment: str
    latency_ms: int
    rated_at: str


@dataclass
class StudySession:
    session_id: str
    items: list[StudyItem]
    seed: int
    composition: Composition
    created_at: str
    cursor: int = 0
    ratings: dict[str, RatingRecord] = field(default_factory=dict)

    @property
    def completed(self) -> bool:
        return self.cursor >= len(self.items)

    @property
    def total(self) -> int:
        return len(self.items)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def create_session(
    real_pool: list[PoolImage],
    synthetic_pool: list[PoolImage],
    composition: Composition | None = None,
    seed: int = 0,
    excluded_models: tuple[str, ...] = DEFAULT_EXCLUDED_MODELS,
) -> StudySession:
    """Assemble a blinded, seeded session from the two image pools.

    Sampling is without replacement, per domain. Synthetic pool entries from
    excluded model kinds never enter a session.
    """
    composition = composition or Composition()
    for img in real_pool:
        if img.source_model is not None:
            raise ConfigError(f"real pool entry {img.image_ref} carries a source model")
    synthetic_pool = [img for img in synthetic_pool if img.source_model not in excluded_models]

    rng = random.Random(seed)
    chosen: list[StudyItem] = []
    specs = (
        ("real", real_pool, composition.n_real // 2),
        ("synthetic", synthetic_pool, composition.n_synthetic // 2),
    )
    for truth, pool, per_domain in specs:
        for domain in DOMAINS:
            candidates = [img for img in pool if img.domain == domain]
            if len(candidates) < per_domain:
                raise ConfigError(
                    f"{truth} pool has {len(candidates)} {domain} images, "
                    f"need {per_domain}"
                )
            for img in rng.sample(candidates, per_domain):
                chosen.append(
                    StudyItem(
                        item_id="",
                        image_ref=img.image_ref,
                        domain=img.domain,
                        truth=truth,
                        source_model=img.source_model if truth == "synthetic" else None,
                    )
                )
    rng.shuffle(chosen)
    for i, item in enumerate(chosen):
        item.item_id = f"item-{i:04d}"
    return StudySession(
        session_id=uuid.uuid4().hex[:12],
        items=chosen,
        seed=seed,
        composition=composition,
        created_at=_now(),
    )


def next_item(session: StudySession, load_image=None) -> dict:
    """Blinded payload for the current item (idempotent until it is rated).

    The payload never contains the truth label or the source model. With a
    ``load_image(image_ref) -> bytes`` callable, the image is attached as
    PNG bytes; serializers should base64-encode it.
    """
    if session.completed:
        raise SessionCompleteError(f"session {session.session_id} has no remaining items")
    item = session.items[session.cursor]
    payload = {
        "item_id": item.item_id,
        "domain": item.domain,
        "index": session.cursor,
        "total": session.total,
    }
    if load_image is not None:
        payload["image_png"] = load_image(item.image_ref)
    return payload


def submit_rating(
    session: StudySession,
    item_id: str,
    judgment: str,
    latency_ms: int,
    store: "SessionStore | None" = None,
) -> dict:
    """Record a judgment for the current item and advance the cursor."""
    if judgment not in JUDGMENTS:
        raise ConfigError(f"judgment must be one of {JUDGMENTS}, got {judgment!r}")
    if latency_ms < 0:
        raise ConfigError(f"latency_ms must be non-negative, got {latency_ms}")
    if session.completed:
        raise SessionCompleteError(f"session {session.session_id} is already complete")
    current = session.items[session.cursor]
    if item_id != current.item_id:
        known = any(item.item_id == item_id for item in session.items)
        detail = "already rated or out of order" if known else "unknown item"
        raise OrderViolationError(
            f"rating for {item_id!r} rejected ({detail}); current item is {current.item_id!r}"
        )
    if item_id in session.ratings:
        raise OrderViolationError(f"item {item_id!r} already has a rating")
    record = RatingRecord(
        item_id=item_id, judgment=judgment, latency_ms=int(latency_ms), rated_at=_now()
    )
    if store is not None:
        store.append_rating(session.session_id, record)
    session.ratings[item_id] = record
    session.cursor += 1
    return {"item_id": item_id, "rated": len(session.ratings), "completed": session.completed}


@dataclass
class PerceptualReport:
    """Confusion counts and fooling rates derived from a (possibly partial) session."""

    rated: int
    confusion: dict[str, dict[str, dict[str, int]]]  # domain -> truth -> judgment -> count
    fooling_rate_by_domain: dict[str, float | None]
    fooling_rate_by_model: dict[str, float | None]
    fooling_rate_overall: float | None
    accuracy: float

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["domain", "truth", "judgment", "count"])
            for domain, by_truth in self.confusion.items():
                for truth, by_judgment in by_truth.items():
                    for judgment, count in by_judgment.items():
                        writer.writerow([domain, truth, judgment, count])
            writer.writerow([])
            writer.writerow(["fooling_rate", "scope", "value"])
            for domain, rate in self.fooling_rate_by_domain.items():
                writer.writerow(["fooling_rate", f"domain:{domain}", rate])
            for model, rate in self.fooling_rate_by_model.items():
                writer.writerow(["fooling_rate", f"model:{model}", rate])
            writer.writerow(["fooling_rate", "overall", self.fooling_rate_overall])


def _rate(numerator: int, denominator: int) -> float | None:
    return None if denominator == 0 else numerator / denominator


def score_session(session: StudySession) -> PerceptualReport:
    """Reveal truth labels and score the rated portion of a session.

    The fooling rate is the fraction of rated synthetic images judged real,
    reported per domain and per source model.
    """
    if not session.ratings:
        raise EmptySessionError(f"session {session.session_id} has no ratings")
    items_by_id = {item.item_id: item for item in session.items}

    confusion: dict[str, dict[str, dict[str, int]]] = {
        domain: {truth: {judgment: 0 for judgment in JUDGMENTS} for truth in ("real", "synthetic")}
        for domain in DOMAINS
    }
    fooled: dict[str, int] = {domain: 0 for domain in DOMAINS}
    seen_synthetic: dict[str, int] = {domain: 0 for domain in DOMAINS}
    fooled_by_model: dict[str, int] = {}
    seen_by_model: dict[str, int] = {}
    correct = 0
    for record in session.ratings.values():
        item = items_by_id[record.item_id]
        confusion[item.domain][item.truth][record.judgment] += 1
        if record.judgment == item.truth:
            correct += 1
        if item.truth == "synthetic":
            seen_synthetic[item.domain] += 1
            model = item.source_model or "unknown"
            seen_by_model[model] = seen_by_model.get(model, 0) + 1
            if record.judgment == "real":
                fooled[item.domain] += 1
                fooled_by_model[model] = fooled_by_model.get(model, 0) + 1

    rated = len(session.ratings)
    total_synthetic = sum(seen_synthetic.values())
    total_fooled = sum(fooled.values())
    return PerceptualReport(
        rated=rated,
        confusion=confusion,
        fooling_rate_by_domain={d: _rate(fooled[d], seen_synthetic[d]) for d in DOMAINS},
        fooling_rate_by_model={
            m: _rate(fooled_by_model.get(m, 0), seen_by_model[m]) for m in sorted(seen_by_model)
        },
        fooling_rate_overall=_rate(total_fooled, total_synthetic),
        accuracy=correct / rated,
    )


class SessionStore:
    """Append-only, one-file-per-session persistence under a directory.

    The header line freezes the session definition; each rating is appended
    as one JSON line with flush+fsync, so a restart loses at most nothing.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.jsonl"

    def save_session(self, session: StudySession) -> None:
        header = {
            "type": "session",
            "session_id": session.session_id,
            "seed": session.seed,
            "created_at": session.created_at,
            "composition": asdict(session.composition),
            "items": [asdict(item) for item in session.items],
        }
        path = self._path(session.session_id)
        if path.exists():
            raise ConfigError(f"session {session.session_id} already persisted")
        with open(path, "w") as fh:
            fh.write(json.dumps(header) + "\n")
            for record in session.ratings.values():
                fh.write(json.dumps({"type": "rating", **asdict(record)}) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def append_rating(self, session_id: str, record: RatingRecord) -> None:
        path = self._path(session_id)
        if not path.exists():
            raise NotFoundError(f"no persisted session {session_id}")
        with open(path, "a") as fh:
            fh.write(json.dumps({"type": "rating", **asdict(record)}) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def load_session(self, session_id: str) -> StudySession:
        path = self._path(session_id)
        if not path.exists():
            raise NotFoundError(f"no persisted session {session_id}")
        lines = path.read_text().splitlines()
        if not lines:
            raise FormatError(f"{path}: empty session file")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: corrupt header ({exc})") from exc
        if header.get("type") != "session":
            raise FormatError(f"{path}: first line is not a session header")
        session = StudySession(
            session_id=header["session_id"],
            items=[StudyItem(**item) for item in header["items"]],
            seed=header["seed"],
            composition=Composition(**header["composition"]),
            created_at=header["created_at"],
        )
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: corrupt rating line ({exc})") from exc
            if entry.get("type") != "rating":
                raise FormatError(f"{path}:{lineno}: unexpected entry type {entry.get('type')!r}")
            entry.pop("type")
            record = RatingRecord(**entry)
            session.ratings[record.item_id] = record
            session.cursor += 1
        return session

    def list_sessions(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.jsonl"))


def build_pool(
    directory: str | Path, source_model: str | None = None, extensions: tuple[str, ...] = (".png",)
) -> list[PoolImage]:
    """Scan ``<dir>/{T1,T2}/*`` into pool entries, optionally tagged with a model."""
    directory = Path(directory)
    pool: list[PoolImage] = []
    for domain in DOMAINS:
        domain_dir = directory / domain
        if not domain_dir.is_dir():
            raise NotFoundError(f"missing domain directory: {domain_dir}")
        for path in sorted(domain_dir.iterdir()):
            if path.suffix.lower() in extensions:
                pool.append(
                    PoolImage(image_ref=str(path), domain=domain, source_model=source_model)
                )
    return pool
