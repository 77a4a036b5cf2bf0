"""Secondary acceptance: scripted browser session equals the simulated backend.

The browser flows are exercised in frontend/tests (vitest) against the same
fixture replayed here: the vitest side proves the UI emits exactly the
fixture's submission bodies, and this side proves that feeding that
submission sequence through the real HTTP service yields a loop state
identical to the in-process scripted backend. Durability of acknowledged
submissions across restarts is asserted on the same session.
"""

import json
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from keywordloop.cli import _resolve_world, loop_config_from
from keywordloop.loop_engine import (
    ScriptedBackend,
    initial_state,
    plan_iteration,
    run_iteration,
)
from keywordloop.task_service import LoopService, create_app

FIXTURE_PATH = (
    Path(__file__).resolve().parent.parent
    / "frontend"
    / "tests"
    / "fixtures"
    / "scripted_session.json"
)


@pytest.fixture(scope="module")
def fixture():
    with open(FIXTURE_PATH, encoding="utf-8") as fh:
        return json.load(fh)


def policy_token(tokens, policy) -> str:
    assert policy["token"] == "first_alphabetical_min_length_3"
    return sorted(t for t in tokens if len(t) >= 3)[0]


def drive_service(state_dir, fixture):
    """One full iteration over HTTP with the fixture's label/pick sequence."""
    app = create_app(state_dir, fixture["service_config"], fixture["seed"])
    client = TestClient(app)
    workers = fixture["workers"]
    label_table = fixture["label_table"]

    item_order: dict[str, int] = {}
    for worker_index, worker in enumerate(workers):
        while True:
            envelope = client.get("/task", params={"worker": worker}).json()
            task = envelope["task"]
            if task is None or task["kind"] != "classify":
                break
            if task["item_id"] not in item_order:
                item_order[task["item_id"]] = len(item_order)
            label = label_table[item_order[task["item_id"]]][worker_index]
            response = client.post(
                "/submit",
                json={
                    "task_id": task["task_id"],
                    "worker_id": worker,
                    "label": label,
                },
            )
            assert response.status_code == 200, response.text

    import time

    deadline = time.time() + 60
    while client.get("/status").json()["phase"] == "inferring":
        assert time.time() < deadline
        time.sleep(0.05)

    task = client.get("/task", params={"worker": workers[0]}).json()["task"]
    assert task["kind"] == "keyword_pick"
    assert fixture["pick_policy"]["mark"] == "all"
    marked = [item["item_id"] for item in task["items"]]
    token = policy_token(
        [tok for item in task["items"] for tok in item["tokens"]],
        fixture["pick_policy"],
    )
    response = client.post(
        "/submit",
        json={
            "task_id": task["task_id"],
            "worker_id": workers[0],
            "correct_ids": marked,
            "token": token,
        },
    )
    assert response.status_code == 200, response.text
    return app.state.service, token


def run_scripted_backend(fixture, pick_token):
    """The same sequence through the in-process loop."""
    world, vcorpus, _ = _resolve_world(fixture["service_config"], fixture["seed"])
    config = loop_config_from(fixture["service_config"], fixture["seed"])
    state = initial_state(vcorpus, ["hack"], config)
    plan = plan_iteration(state, vcorpus, config)
    entry = plan.entries[0]
    records = [
        (item_id, worker, fixture["label_table"][i][w])
        for i, item_id in enumerate(entry.sample)
        for w, worker in enumerate(fixture["workers"])
    ]
    backend = ScriptedBackend([records], [[pick_token]])
    return run_iteration(state, vcorpus, backend, config)


class TestScriptedSessionEquivalence:
    def test_loop_states_are_identical(self, fixture, tmp_path):
        service, pick_token = drive_service(tmp_path / "state", fixture)
        inproc = run_scripted_backend(fixture, pick_token)

        assert service.state.iteration == inproc.iteration == 1
        assert [
            (r.keyword, r.expectation) for r in service.state.keywords
        ] == [(r.keyword, r.expectation) for r in inproc.keywords]
        assert service.state.metrics == inproc.metrics
        assert service.state.pending == inproc.pending
        for a, b in zip(service.state.model.parameters(), inproc.model.parameters()):
            assert np.array_equal(a, b)
        assert service.state.to_dict() == inproc.to_dict()
        print(
            "[PASS] path equivalence: scripted session == simulated backend "
            f"(keyword {service.state.keywords[0].keyword!r}, "
            f"e={service.state.keywords[0].expectation:.6f})"
        )

    def test_session_survives_restart(self, fixture, tmp_path):
        service, _ = drive_service(tmp_path / "state", fixture)
        before = service.state.to_dict()
        reborn = LoopService(
            tmp_path / "state", fixture["service_config"], fixture["seed"]
        )
        assert reborn.state.to_dict() == before
        print("[PASS] durability: restart replays the archive to the same state")
