"""Session state, persistence, and background jobs for the annotation
service.

Each session owns a directory under the store's state directory:

    upload.<ext>            original upload (kept so precompute can restart)
    cloud.ply               canonical cloud with normals
    ssm.bin                 precomputed descriptor stack
    session.json            identity, point count, creation options
    labels.json             sparse user labels + label revision
    weights.json            trained network (when trained)
    training.json           training summary (when trained)
    classification.labels   dense predicted labels (when classified)
    classification.json     classification revision bookkeeping

Everything above is rewritten atomically where it matters (labels), so a
server restart on the same state directory restores labels, weights, and
classification results exactly.

Concurrency: many sessions in parallel; within a session one background
compute job at a time (precompute, train, or classify) guarded by the
status field, label mutation serialized by the session lock, and reads
(status, point/classification streaming) lock only long enough to snapshot
references to immutable arrays.

Revision arithmetic uses one monotone per-session clock: label edits and
finished classifications each take the next tick.  A classification
therefore always carries a revision strictly greater than the label
revision its weights were trained on, and label edits made while a job is
running simply apply to the next run.
"""

import base64
import dataclasses
import io
import itertools
import json
import os
import queue
import shutil
import threading
import time
import uuid
import zipfile
from pathlib import Path
from typing import Optional

import numpy as np

from ..cloud import (estimate_normals, load_cloud, load_labels, save_cloud,
                     save_labels)
from ..descriptor import (FeatureSet, FitMethod, build_scale_sampling,
                          build_ssm, load_ssm, save_ssm)
from ..errors import CloudEdgesError, DataError
from ..net import (NetworkSpec, TrainConfig, build_network, load_weights,
                   predict, save_weights, train)


class NotFoundError(CloudEdgesError):
    """Unknown session or missing derived resource."""


class ConflictError(CloudEdgesError):
    """The session is not in a state that allows the request."""


class PointLimitError(DataError):
    """Uploaded cloud exceeds the configured size limit."""


@dataclasses.dataclass
class SessionOptions:
    """Descriptor configuration fixed at session creation."""

    scales: int = 16
    s_min: Optional[float] = None
    s_max: Optional[float] = None
    feature_set: str = "standard6"
    fit: str = "apss"
    estimate_normals: bool = True
    normal_k: int = 16
    name: str = ""


class Session:
    """One annotated cloud plus everything derived from it."""

    def __init__(self, sid, directory, points, options):
        self.id = sid
        self.directory = Path(directory)
        self.points = int(points)
        self.options = options
        self.created = time.time()

        self.status = "precomputing"
        self.stage = "descriptor"
        self.progress = 0.0
        self.error = None
        self.job_id = None

        self.cloud = None
        self.matrix = None
        self.resolved_s_min = None
        self.resolved_s_max = None

        self.labels = {}
        self.clock = 0
        self.label_revision = 0

        self.network = None
        self.class_codes = None
        self.training_info = None
        self.trained_label_revision = None

        self.classification = None
        self.classification_revision = 0

        self.lock = threading.RLock()
        self.subscribers = []
        self.last_emitted_fraction = 0.0


class SessionStore:
    """All sessions behind the HTTP API, backed by one state directory."""

    def __init__(self, state_dir, *, max_points=2_000_000):
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.max_points = int(max_points)
        self.sessions = {}
        self._map_lock = threading.Lock()
        self._job_counter = itertools.count(1)
        self._load_existing()

    # ------------------------------------------------------------- lookup

    def get(self, sid) -> Session:
        with self._map_lock:
            session = self.sessions.get(sid)
        if session is None:
            raise NotFoundError(f"no session {sid!r}")
        return session

    def list_sessions(self) -> list:
        with self._map_lock:
            items = sorted(self.sessions.values(), key=lambda s: s.created)
        return [self.status_payload(s) for s in items]

    # ------------------------------------------------------------- create

    def create(self, payload, filename, options) -> Session:
        suffix = Path(filename or "upload.ply").suffix.lower() or ".ply"
        sid = uuid.uuid4().hex[:12]
        directory = self.state_dir / sid
        directory.mkdir(parents=True)
        upload_path = directory / ("upload" + suffix)
        upload_path.write_bytes(payload)
        try:
            cloud = load_cloud(upload_path)
            if len(cloud) > self.max_points:
                raise PointLimitError(
                    f"cloud has {len(cloud)} points; this server accepts "
                    f"at most {self.max_points}")
        except Exception:
            shutil.rmtree(directory, ignore_errors=True)
            raise

        session = Session(sid, directory, len(cloud), options)
        self._write_session_meta(session)
        with self._map_lock:
            self.sessions[sid] = session
        self._start_precompute(session, cloud)
        return session

    def _start_precompute(self, session, cloud):
        job = self._new_job("precompute")
        with session.lock:
            session.status = "precomputing"
            session.stage = "descriptor"
            session.progress = 0.0
            session.error = None
            session.job_id = job
            session.last_emitted_fraction = 0.0
        threading.Thread(target=self._precompute_job,
                         args=(session, cloud, job), daemon=True).start()

    def _precompute_job(self, session, cloud, job):
        try:
            opts = session.options
            if not cloud.has_normals:
                if not opts.estimate_normals:
                    raise DataError(
                        "cloud has no normals and normal estimation was "
                        "disabled for this session")
                cloud = estimate_normals(cloud, k=opts.normal_k)
            sampling = build_scale_sampling(cloud, n=opts.scales,
                                            s_min=opts.s_min,
                                            s_max=opts.s_max)
            matrix = build_ssm(
                cloud, sampling,
                feature_set=FeatureSet.from_label(opts.feature_set),
                fit_method=FitMethod.from_label(opts.fit),
                progress=lambda f: self._progress(session, job,
                                                  "descriptor", f))
            save_cloud(cloud, session.directory / "cloud.ply")
            save_ssm(matrix, session.directory / "ssm.bin")
            with session.lock:
                session.cloud = cloud
                session.matrix = matrix
                session.resolved_s_min = float(matrix.s_min)
                session.resolved_s_max = float(matrix.s_max)
                session.status = "ready"
                session.stage = "idle"
                session.progress = 1.0
                session.job_id = None
            self._write_session_meta(session)
            self._broadcast(session, "complete",
                            {"jobId": job, "stage": "descriptor",
                             "status": "ready"})
        except Exception as exc:  # job boundary: report, never raise
            with session.lock:
                session.status = "failed"
                session.error = str(exc)
                session.job_id = None
            self._broadcast(session, "error",
                            {"jobId": job, "message": str(exc)})

    # ------------------------------------------------------------- labels

    def set_labels(self, session, edits) -> dict:
        with session.lock:
            for edit in edits:
                if edit.index >= session.points:
                    raise DataError(
                        f"point index {edit.index} out of range "
                        f"(cloud has {session.points} points)")
            if edits:
                for edit in edits:
                    if edit.label is None:
                        session.labels.pop(edit.index, None)
                    else:
                        session.labels[edit.index] = int(edit.label)
                session.clock += 1
                session.label_revision = session.clock
                self._persist_labels(session)
            return {"labelRevision": session.label_revision,
                    "labeledCount": len(session.labels)}

    def labels_payload(self, session) -> dict:
        with session.lock:
            return {"labelRevision": session.label_revision,
                    "labels": {str(k): int(v)
                               for k, v in sorted(session.labels.items())}}

    def _persist_labels(self, session):
        doc = {"labelRevision": session.label_revision,
               "clock": session.clock,
               "labels": {str(k): int(v)
                          for k, v in sorted(session.labels.items())}}
        self._write_json(session.directory / "labels.json", doc)

    # ----------------------------------------------------------- training

    def start_train(self, session, request) -> str:
        with session.lock:
            self._require_ready(session)
            snapshot = dict(session.labels)
            label_revision = session.label_revision
            codes = sorted(set(snapshot.values()))
            if len(codes) < 2:
                raise DataError(
                    "training needs at least two labeled classes; "
                    f"{len(codes)} present")
            if request.classes is not None and request.classes != len(codes):
                raise DataError(
                    f"classes={request.classes} requested but {len(codes)} "
                    "classes are labeled")
            job = self._new_job("train")
            session.status = "training"
            session.stage = "train"
            session.progress = 0.0
            session.error = None
            session.job_id = job
            session.last_emitted_fraction = 0.0
        threading.Thread(
            target=self._train_job,
            args=(session, job, snapshot, label_revision, codes, request),
            daemon=True).start()
        return job

    def _train_job(self, session, job, snapshot, label_revision, codes,
                   request):
        try:
            started = time.perf_counter()
            indices = np.fromiter(sorted(snapshot), dtype=np.intp,
                                  count=len(snapshot))
            remap = {code: k for k, code in enumerate(codes)}
            targets = np.fromiter(
                (remap[snapshot[int(i)]] for i in indices),
                dtype=np.uint8, count=indices.size)
            matrix = session.matrix
            spec = NetworkSpec(
                "scaletree",
                num_scales=matrix.values.shape[1],
                feature_width=matrix.values.shape[2],
                classes=len(codes),
                feature_set=matrix.feature_set.label)
            network = build_network(spec, request.seed)  # always fresh
            config = TrainConfig(learning_rate=request.learning_rate,
                                 momentum=request.momentum,
                                 batch_size=request.batch,
                                 epochs=request.epochs,
                                 seed=request.seed)
            network, history = train(
                network, matrix.values[indices], targets, config,
                progress=lambda f: self._progress(session, job, "train", f))
            summary = {
                "jobId": job,
                "epochs": request.epochs,
                "seed": request.seed,
                "classes": len(codes),
                "classCodes": [int(c) for c in codes],
                "labeledPoints": int(indices.size),
                "labelRevision": label_revision,
                "finalLoss": float(history.train_loss[-1]),
                "finalAccuracy": float(history.train_accuracy[-1]),
                "elapsedSeconds": round(time.perf_counter() - started, 3),
            }
            save_weights(network, session.directory / "weights.json")
            with session.lock:
                session.network = network
                session.class_codes = [int(c) for c in codes]
                session.trained_label_revision = label_revision
                session.training_info = summary
                self._write_json(session.directory / "training.json",
                                 summary)
                self._finish_job(session)
            self._broadcast(session, "complete",
                            {"jobId": job, "stage": "train",
                             "status": "ready", "summary": summary})
        except Exception as exc:  # job boundary: session stays usable
            with session.lock:
                session.error = str(exc)
                self._finish_job(session)
            self._broadcast(session, "error",
                            {"jobId": job, "message": str(exc)})

    # ------------------------------------------------------ classification

    def start_classify(self, session) -> str:
        with session.lock:
            self._require_ready(session)
            if session.network is None:
                raise ConflictError("no trained weights yet; train first")
            job = self._new_job("classify")
            session.status = "classifying"
            session.stage = "classify"
            session.progress = 0.0
            session.error = None
            session.job_id = job
            session.last_emitted_fraction = 0.0
        threading.Thread(target=self._classify_job, args=(session, job),
                         daemon=True).start()
        return job

    def _classify_job(self, session, job):
        try:
            network = session.network
            matrix = session.matrix
            codes = np.asarray(session.class_codes, dtype=np.uint8)
            total = matrix.values.shape[0]
            raw = np.empty(total, dtype=np.uint8)
            step = 8192
            for start in range(0, total, step):
                part, _ = predict(network, matrix.values[start:start + step])
                raw[start:start + part.shape[0]] = part
                self._progress(session, job, "classify",
                               min(1.0, (start + step) / total))
            mapped = codes[raw]
            with session.lock:
                session.clock += 1
                session.classification = mapped
                session.classification_revision = session.clock
                save_labels(mapped,
                            session.directory / "classification.labels")
                self._write_json(
                    session.directory / "classification.json",
                    {"revision": session.classification_revision,
                     "clock": session.clock,
                     "trainedOnLabelRevision":
                         session.trained_label_revision,
                     "jobId": job})
                revision = session.classification_revision
                self._finish_job(session)
            self._broadcast(session, "complete",
                            {"jobId": job, "stage": "classify",
                             "status": "ready", "revision": revision})
        except Exception as exc:  # job boundary: session stays usable
            with session.lock:
                session.error = str(exc)
                self._finish_job(session)
            self._broadcast(session, "error",
                            {"jobId": job, "message": str(exc)})

    # ------------------------------------------------------------ payloads

    def status_payload(self, session) -> dict:
        with session.lock:
            opts = session.options
            return {
                "id": session.id,
                "name": opts.name,
                "status": session.status,
                "stage": session.stage,
                "progress": round(float(session.progress), 4),
                "error": session.error,
                "jobId": session.job_id,
                "points": session.points,
                "labelRevision": session.label_revision,
                "labeledCount": len(session.labels),
                "classificationRevision": session.classification_revision,
                "trainedOnLabelRevision": session.trained_label_revision,
                "hasWeights": session.network is not None,
                "classCodes": session.class_codes,
                "training": session.training_info,
                "params": {"scales": opts.scales,
                           "featureSet": opts.feature_set,
                           "fit": opts.fit,
                           "sMin": session.resolved_s_min,
                           "sMax": session.resolved_s_max},
            }

    def points_chunk(self, session, chunk, size) -> dict:
        with session.lock:
            cloud = session.cloud
        if cloud is None:
            raise ConflictError(
                "points are not available until precomputation finishes")
        size = max(1, min(int(size), 1_000_000))
        total = len(cloud)
        chunks = -(-total // size)
        if chunk < 0 or chunk >= chunks:
            raise DataError(f"chunk {chunk} out of range (0..{chunks - 1})")
        lo, hi = chunk * size, min(total, (chunk + 1) * size)
        return {
            "chunk": chunk,
            "chunks": chunks,
            "count": hi - lo,
            "total": total,
            "positions": _b64(cloud.points[lo:hi], np.float32),
            "normals": _b64(cloud.normals[lo:hi], np.float32),
        }

    def classification_chunk(self, session, chunk, size) -> dict:
        with session.lock:
            values = session.classification
            revision = session.classification_revision
            trained_on = session.trained_label_revision
            codes = session.class_codes
        if values is None:
            raise NotFoundError("no classification yet; run classify first")
        size = max(1, min(int(size), 5_000_000))
        total = values.shape[0]
        chunks = -(-total // size)
        if chunk < 0 or chunk >= chunks:
            raise DataError(f"chunk {chunk} out of range (0..{chunks - 1})")
        lo, hi = chunk * size, min(total, (chunk + 1) * size)
        return {
            "chunk": chunk,
            "chunks": chunks,
            "count": hi - lo,
            "total": total,
            "revision": revision,
            "trainedOnLabelRevision": trained_on,
            "classCodes": codes,
            "classes": _b64(values[lo:hi], np.uint8),
        }

    def export_zip(self, session) -> bytes:
        with session.lock:
            if session.cloud is None:
                raise ConflictError(
                    "nothing to export until precomputation finishes")
            status = self.status_payload(session)
            labels = self.labels_payload(session)
        manifest = {
            "tool": "cloudedges",
            "session": session.id,
            "points": status["points"],
            "params": status["params"],
            "labelRevision": status["labelRevision"],
            "classificationRevision": status["classificationRevision"],
            "trainedOnLabelRevision": status["trainedOnLabelRevision"],
            "training": status["training"],
        }
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as archive:
            archive.writestr("manifest.json",
                             json.dumps(manifest, indent=2, sort_keys=True))
            archive.writestr("labels.json",
                             json.dumps(labels, indent=2, sort_keys=True))
            archive.write(session.directory / "cloud.ply", "cloud.ply")
            for name in ("weights.json", "training.json",
                         "classification.labels"):
                path = session.directory / name
                if path.exists():
                    archive.write(path, name)
        return buf.getvalue()

    # -------------------------------------------------------------- events

    def subscribe(self, session):
        q = queue.SimpleQueue()
        with session.lock:
            session.subscribers.append(q)
        return q

    def unsubscribe(self, session, q):
        with session.lock:
            if q in session.subscribers:
                session.subscribers.remove(q)

    def _broadcast(self, session, event, data):
        with session.lock:
            targets = list(session.subscribers)
        for q in targets:
            q.put((event, data))

    def _progress(self, session, job, stage, fraction):
        fraction = float(fraction)
        with session.lock:
            session.progress = fraction
            if (fraction - session.last_emitted_fraction < 0.02
                    and fraction < 1.0):
                return
            session.last_emitted_fraction = fraction
        self._broadcast(session, "progress",
                        {"jobId": job, "stage": stage,
                         "fraction": round(fraction, 4)})

    # ------------------------------------------------------------ plumbing

    def _new_job(self, kind) -> str:
        return f"{kind}-{next(self._job_counter)}"

    @staticmethod
    def _require_ready(session):
        if session.status == "precomputing":
            raise ConflictError("session is still precomputing")
        if session.status == "failed":
            raise ConflictError(f"session failed: {session.error}")
        if session.status != "ready":
            raise ConflictError(
                "another job is already running on this session")

    @staticmethod
    def _finish_job(session):
        session.status = "ready"
        session.stage = "idle"
        session.progress = 1.0
        session.job_id = None

    @staticmethod
    def _write_json(path, doc):
        tmp = Path(str(path) + ".tmp")
        with open(tmp, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)

    def _write_session_meta(self, session):
        with session.lock:
            doc = {
                "id": session.id,
                "points": session.points,
                "created": session.created,
                "options": dataclasses.asdict(session.options),
                "resolved": {"sMin": session.resolved_s_min,
                             "sMax": session.resolved_s_max},
            }
        self._write_json(session.directory / "session.json", doc)

    # -------------------------------------------------------------- reload

    def _load_existing(self):
        if not self.state_dir.exists():
            return
        for child in sorted(self.state_dir.iterdir()):
            meta_path = child / "session.json"
            if not child.is_dir() or not meta_path.exists():
                continue
            try:
                self._restore_session(child, meta_path)
            except Exception as exc:  # skip broken directories, keep serving
                print(f"[cloudedges] skipping session dir {child.name}: "
                      f"{exc}")

    def _restore_session(self, directory, meta_path):
        meta = json.loads(meta_path.read_text())
        options = SessionOptions(**meta.get("options", {}))
        session = Session(meta["id"], directory, meta["points"], options)
        session.created = meta.get("created", session.created)
        resolved = meta.get("resolved", {})
        session.resolved_s_min = resolved.get("sMin")
        session.resolved_s_max = resolved.get("sMax")

        labels_path = directory / "labels.json"
        if labels_path.exists():
            doc = json.loads(labels_path.read_text())
            session.labels = {int(k): int(v)
                              for k, v in doc.get("labels", {}).items()}
            session.label_revision = int(doc.get("labelRevision", 0))
            session.clock = int(doc.get("clock", session.label_revision))

        weights_path = directory / "weights.json"
        if weights_path.exists():
            session.network = load_weights(weights_path)
            training_path = directory / "training.json"
            if training_path.exists():
                info = json.loads(training_path.read_text())
                session.training_info = info
                session.class_codes = info.get("classCodes")
                session.trained_label_revision = info.get("labelRevision")
            if session.class_codes is None:
                session.class_codes = list(
                    range(session.network.spec.classes))

        class_meta = directory / "classification.json"
        class_labels = directory / "classification.labels"
        if class_meta.exists() and class_labels.exists():
            doc = json.loads(class_meta.read_text())
            session.classification = load_labels(class_labels).astype(
                np.uint8)
            session.classification_revision = int(doc.get("revision", 0))
            session.clock = max(session.clock,
                                int(doc.get("clock",
                                            session.classification_revision)))

        cloud_path = directory / "cloud.ply"
        ssm_path = directory / "ssm.bin"
        uploads = [p for p in directory.glob("upload.*")]
        if cloud_path.exists() and ssm_path.exists():
            session.cloud = load_cloud(cloud_path)
            session.matrix = load_ssm(ssm_path)
            session.status = "ready"
            session.stage = "idle"
            session.progress = 1.0
            with self._map_lock:
                self.sessions[session.id] = session
        elif uploads:
            # restart interrupted a precompute: run it again
            cloud = load_cloud(uploads[0])
            with self._map_lock:
                self.sessions[session.id] = session
            self._start_precompute(session, cloud)
        else:
            session.status = "failed"
            session.error = "session directory is missing its geometry"
            with self._map_lock:
                self.sessions[session.id] = session


def _b64(array, dtype) -> str:
    data = np.ascontiguousarray(array, dtype=dtype).tobytes()
    return base64.b64encode(data).decode("ascii")
