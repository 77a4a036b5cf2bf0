"""HTTP task service: a human annotator drives the loop through a browser.

The service walks the same plan / infer / finalize stages as the in-process
loop, but stretches each iteration across many requests: a classification
phase hands out one-micropost labeling tasks until every sampled item has
enough labels, inference then runs off the request path, and a keyword
discovery phase presents the top-disagreement microposts with the model's
predictions so the annotator can mark the correct-looking ones and click
the most indicative token. Every accepted submission is appended to a
JSONL archive before it is acknowledged; restarting the service replays
the archive through the same deterministic stages, so no acknowledged
submission is ever lost.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .corpus import VectorizedCorpus, build_vocabulary
from .crowd_model import AnnotationMatrix
from .eval_harness.synthetic import generate_synthetic_corpus
from .loop_engine import (
    IterationPlan,
    LoopConfig,
    LoopState,
    aggregate_picks,
    candidate_tokens,
    finalize_iteration,
    initial_state,
    plan_iteration,
    run_inference,
)

CLASSIFY_INSTRUCTIONS = {
    "task": "Label the micropost: 1 if it reports a concrete event instance, "
    "0 if it is merely on-topic chatter about the event category.",
    "positive_example": "Credit firm Equifax says 143m Americans' social "
    "security numbers exposed in hack",
    "negative_example": "Companies need to step their cyber security up",
}
PICK_INSTRUCTIONS = {
    "step1": "Mark the microposts whose predicted class looks correct.",
    "step2": "From the marked microposts, click the one keyword that best "
    "indicates the predicted class.",
}


class ServiceError(Exception):
    def __init__(self, status_code: int, detail: str):
        super().__init__(detail)
        self.status_code = status_code
        self.detail = detail


class LoopService:
    """State machine behind the HTTP endpoints; one loop per instance."""

    def __init__(self, state_dir, flat_config: dict, seed: int):
        from .cli import (
            initial_keywords_from,
            loop_config_from,
            synthetic_spec_from,
            _resolve_world,
        )

        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.lock = threading.RLock()

        manifest_path = self.state_dir / "manifest.json"
        if manifest_path.exists():
            with open(manifest_path, encoding="utf-8") as fh:
                manifest = json.load(fh)
            if manifest["config"] != flat_config or manifest["seed"] != seed:
                raise ServiceError(409, "state directory was created with a different config")
        else:
            with open(manifest_path, "w", encoding="utf-8") as fh:
                json.dump({"config": flat_config, "seed": seed}, fh, sort_keys=True)
                fh.write("\n")

        self.flat = flat_config
        self.seed = seed
        world, self.corpus, spec = _resolve_world(flat_config, seed)
        self.world = world
        self.config: LoopConfig = loop_config_from(flat_config, seed)
        self.initial_keywords = initial_keywords_from(flat_config, spec)

        self.archive_path = self.state_dir / "archive.jsonl"
        self.state: LoopState = initial_state(self.corpus, self.initial_keywords, self.config)
        self.phase = "classify"
        self.plan: IterationPlan | None = None
        self.outcome = None
        self.classify_subs: dict[str, list[dict]] = {}
        self.pick_subs: list[dict] = []
        self._matrices: dict[str, AnnotationMatrix] = {}
        self._infer_thread: threading.Thread | None = None

        self._start_iteration()
        if self.archive_path.exists():
            self._replay()

    # ------------------------------------------------------------------ state

    def _start_iteration(self) -> None:
        if (
            self.state.converged
            or self.state.exhausted
            or not self.state.pending
            or self.state.iteration >= self.config.max_iterations
        ):
            self.phase = "done"
            self.plan = None
            return
        self.plan = plan_iteration(self.state, self.corpus, self.config)
        self.phase = "classify"
        self.classify_subs = {
            self._classify_task_id(entry.keyword, item_id): []
            for entry in self.plan.entries
            for item_id in entry.sample
        }
        self.pick_subs = []
        self.outcome = None

    def _classify_task_id(self, keyword: str, item_id: str) -> str:
        return f"classify-{self.plan.iteration:03d}-{keyword}-{item_id}"

    def _pick_task_id(self) -> str:
        return f"pick-{self.plan.iteration:03d}"

    def _classify_tasks(self):
        for entry in self.plan.entries:
            for item_id in entry.sample:
                yield entry.keyword, item_id, self._classify_task_id(entry.keyword, item_id)

    def _canonical_records(self, keyword: str):
        """Archived labels for one keyword in plan-sample order, then worker id."""
        entry = next(e for e in self.plan.entries if e.keyword == keyword)
        order = {item_id: i for i, item_id in enumerate(entry.sample)}
        rows = []
        for task_id, subs in self.classify_subs.items():
            for sub in subs:
                if sub["keyword"] == keyword:
                    rows.append((order[sub["item_id"]], sub["worker_id"], sub))
        rows.sort(key=lambda r: (r[0], r[1]))
        return [(r[2]["item_id"], r[2]["worker_id"], r[2]["label"]) for r in rows]

    def _classify_quota_met(self) -> bool:
        return all(
            len(subs) >= self.config.redundancy for subs in self.classify_subs.values()
        )

    def _pick_quota_met(self) -> bool:
        return len(self.pick_subs) >= self.config.n_picks

    # ------------------------------------------------------------ transitions

    def _launch_inference(self, wait: bool = False) -> None:
        self.phase = "inferring"
        matrices = {}
        for entry in self.plan.entries:
            records = self._canonical_records(entry.keyword)
            if not records:
                raise ServiceError(409, f"no labels collected for {entry.keyword!r}")
            matrices[entry.keyword] = AnnotationMatrix.from_records(records)

        def work():
            outcome = run_inference(self.state, self.corpus, self.plan, matrices, self.config)
            with self.lock:
                self.outcome = outcome
                self._matrices = matrices
                self.phase = "keyword_pick"

        if wait:
            work()
        else:
            self._infer_thread = threading.Thread(target=work, daemon=True)
            self._infer_thread.start()

    def _complete_iteration(self) -> None:
        picks = [sub["token"] for sub in self.pick_subs]
        used = self.state.used_keywords | {r.keyword for r in self.outcome.records}
        candidates = candidate_tokens(self.outcome.selection, used, self.config)
        try:
            discovered = aggregate_picks(
                [p for p in picks if p in candidates], used, self.config.top_n_keywords
            )
        except ValueError:
            discovered = []
        state = finalize_iteration(
            self.state,
            self.corpus,
            self.plan,
            self.outcome,
            self._matrices,
            discovered,
            self.config,
        )
        if not discovered:
            from dataclasses import replace

            state = replace(state, exhausted=True)
        self.state = state
        self._write_snapshot()
        self._start_iteration()

    def _write_snapshot(self) -> None:
        path = self.state_dir / "snapshot.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.state.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    # ---------------------------------------------------------------- archive

    def _append_archive(self, record: dict) -> None:
        with open(self.archive_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            fh.flush()

    def _replay(self) -> None:
        with open(self.archive_path, encoding="utf-8") as fh:
            records = [json.loads(line) for line in fh if line.strip()]
        for record in records:
            if record["kind"] == "classify":
                self._accept_classify(record, archive=False)
            elif record["kind"] == "pick":
                self._accept_pick(record, archive=False)
            elif record["kind"] == "advance":
                self._advance(archive=False)

    # ------------------------------------------------------------ submissions

    def _accept_classify(self, sub: dict, archive: bool = True) -> dict:
        if self.phase != "classify":
            raise ServiceError(409, f"no open classification task in phase {self.phase!r}")
        task_id = sub["task_id"]
        subs = self.classify_subs.get(task_id)
        if subs is None:
            raise ServiceError(404, f"unknown task {task_id!r}")
        if len(subs) >= self.config.redundancy:
            raise ServiceError(409, f"task {task_id!r} is already complete")
        if any(s["worker_id"] == sub["worker_id"] for s in subs):
            raise ServiceError(409, "duplicate submission by the same worker")
        if sub["label"] not in (0, 1):
            raise ServiceError(422, "label must be 0 or 1")
        subs.append(sub)
        if archive:
            self._append_archive({"kind": "classify", **sub})
        if self._classify_quota_met():
            self._launch_inference(wait=not archive)
        return self._progress()

    def _accept_pick(self, sub: dict, archive: bool = True) -> dict:
        if self.phase == "inferring" and not archive:
            # during replay inference ran synchronously, so this cannot occur
            raise ServiceError(409, "inference still running")
        if self.phase != "keyword_pick":
            raise ServiceError(409, f"no open keyword task in phase {self.phase!r}")
        if sub["task_id"] != self._pick_task_id():
            raise ServiceError(404, f"unknown task {sub['task_id']!r}")
        if self._pick_quota_met():
            raise ServiceError(409, "keyword task is already complete")
        if any(s["worker_id"] == sub["worker_id"] for s in self.pick_subs):
            raise ServiceError(409, "duplicate submission by the same worker")
        by_id = {item.id: item for item in self.outcome.selection}
        correct_ids = sub.get("correct_ids") or []
        unknown = [i for i in correct_ids if i not in by_id]
        if unknown:
            raise ServiceError(422, f"marked ids not in the task: {unknown}")
        if not correct_ids:
            raise ServiceError(422, "mark at least one micropost as correctly predicted")
        allowed = {tok for i in correct_ids for tok in by_id[i].tokens}
        if sub["token"] not in allowed:
            raise ServiceError(422, "token must occur in one of the marked microposts")
        self.pick_subs.append(sub)
        if archive:
            self._append_archive({"kind": "pick", **sub})
        if self._pick_quota_met():
            self._complete_iteration()
        return self._progress()

    def submit(self, payload: dict) -> dict:
        with self.lock:
            worker_id = payload.get("worker_id")
            task_id = payload.get("task_id")
            if not worker_id or not task_id:
                raise ServiceError(422, "submission needs worker_id and task_id")
            if "label" in payload:
                sub = {
                    "task_id": task_id,
                    "worker_id": worker_id,
                    "label": payload["label"],
                    "item_id": payload.get("item_id"),
                    "keyword": payload.get("keyword"),
                    "iteration": self.plan.iteration if self.plan else None,
                }
                known = self.classify_subs.get(task_id)
                if known is None:
                    raise ServiceError(404, f"unknown task {task_id!r}")
                # fill item/keyword from the task id authority
                for keyword, item_id, tid in self._classify_tasks():
                    if tid == task_id:
                        sub["item_id"], sub["keyword"] = item_id, keyword
                        break
                return {"accepted": True, **self._accept_classify(sub)}
            if "token" in payload:
                sub = {
                    "task_id": task_id,
                    "worker_id": worker_id,
                    "token": payload["token"],
                    "correct_ids": payload.get("correct_ids") or [],
                    "iteration": self.plan.iteration if self.plan else None,
                }
                return {"accepted": True, **self._accept_pick(sub)}
            raise ServiceError(422, "submission needs either a label or a token")

    def _advance(self, archive: bool = True) -> dict:
        """Manual phase override: move on with whatever has been collected."""
        if self.phase == "classify":
            has_any = {
                entry.keyword: any(
                    sub
                    for task_id, subs in self.classify_subs.items()
                    for sub in subs
                    if sub["keyword"] == entry.keyword
                )
                for entry in self.plan.entries
            }
            if not all(has_any.values()):
                raise ServiceError(409, "cannot advance: a keyword has no labels yet")
            if archive:
                self._append_archive({"kind": "advance"})
            self._launch_inference(wait=not archive)
        elif self.phase == "keyword_pick":
            if archive:
                self._append_archive({"kind": "advance"})
            self._complete_iteration()
        else:
            raise ServiceError(409, f"cannot advance from phase {self.phase!r}")
        return self._progress()

    def advance(self) -> dict:
        with self.lock:
            return self._advance(archive=True)

    # ------------------------------------------------------------------ reads

    def next_task(self, worker_id: str) -> dict:
        with self.lock:
            if self.phase == "classify":
                for keyword, item_id, task_id in self._classify_tasks():
                    subs = self.classify_subs[task_id]
                    if len(subs) >= self.config.redundancy:
                        continue
                    if any(s["worker_id"] == worker_id for s in subs):
                        continue
                    post = self.corpus.unlabeled_post(item_id)
                    return {
                        "task": {
                            "task_id": task_id,
                            "kind": "classify",
                            "iteration": self.plan.iteration,
                            "keyword": keyword,
                            "item_id": item_id,
                            "text": post.text,
                            "instructions": CLASSIFY_INSTRUCTIONS,
                        },
                        "phase": self.phase,
                    }
                return {"task": None, "phase": self.phase}
            if self.phase == "keyword_pick":
                if self._pick_quota_met() or any(
                    s["worker_id"] == worker_id for s in self.pick_subs
                ):
                    return {"task": None, "phase": self.phase}
                items = [
                    {
                        "item_id": item.id,
                        "text": item.text,
                        "tokens": list(item.tokens),
                        "prediction": item.prediction,
                        "predicted_class": item.predicted_class,
                        "disagreement": item.disagreement,
                    }
                    for item in self.outcome.selection
                ]
                return {
                    "task": {
                        "task_id": self._pick_task_id(),
                        "kind": "keyword_pick",
                        "iteration": self.plan.iteration,
                        "items": items,
                        "instructions": PICK_INSTRUCTIONS,
                    },
                    "phase": self.phase,
                }
            return {"task": None, "phase": self.phase}

    def _progress(self) -> dict:
        if self.phase == "classify":
            done = sum(
                min(len(s), self.config.redundancy) for s in self.classify_subs.values()
            )
            quota = len(self.classify_subs) * self.config.redundancy
        elif self.phase == "keyword_pick":
            done = len(self.pick_subs)
            quota = self.config.n_picks
        else:
            done = quota = 0
        return {"phase": self.phase, "done": done, "quota": quota}

    def status(self) -> dict:
        with self.lock:
            latest = self.state.metrics[-1] if self.state.metrics else None
            return {
                "iteration": (self.plan.iteration if self.plan else self.state.iteration),
                "completed_iterations": self.state.iteration,
                **self._progress(),
                "keywords": [
                    {"keyword": r.keyword, "expectation": round(r.expectation, 6)}
                    for r in self.state.keywords
                ],
                "pending": list(self.state.pending),
                "metrics": latest,
                "converged": self.state.converged,
                "exhausted": self.state.exhausted,
            }

    def history(self) -> dict:
        with self.lock:
            return {
                "iterations": self.state.iteration,
                "keywords": [
                    {"keyword": r.keyword, "expectation": r.expectation}
                    for r in self.state.keywords
                ],
                "metrics": list(self.state.metrics),
                "converged": self.state.converged,
                "exhausted": self.state.exhausted,
            }


def create_app(state_dir, flat_config: dict, seed: int, frontend_dir=None) -> FastAPI:
    """FastAPI wrapper over one LoopService instance."""
    service = LoopService(state_dir, flat_config, seed)
    app = FastAPI(title="keywordloop task service")
    app.state.service = service

    @app.exception_handler(ServiceError)
    async def on_service_error(_, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status_code, content={"detail": exc.detail}
        )

    @app.get("/status")
    def get_status():
        return service.status()

    @app.get("/task")
    def get_task(worker: str):
        return service.next_task(worker)

    @app.post("/submit")
    def post_submit(payload: dict):
        return service.submit(payload)

    @app.post("/advance")
    def post_advance():
        return service.advance()

    @app.get("/history")
    def get_history():
        return service.history()

    if frontend_dir and Path(frontend_dir).exists():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")
    return app
