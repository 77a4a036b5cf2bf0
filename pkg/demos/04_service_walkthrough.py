"""Driving one loop iteration through the HTTP task service.

Runs the service in-process and plays the human annotator: fetch
classification tasks, label them, wait for inference, then do the two-step
keyword discovery task (mark correct-looking predictions, pick a token).
The same endpoints serve the browser client in frontend/.
"""

import tempfile
import time

from fastapi.testclient import TestClient

from keywordloop.task_service import create_app

config = {
    "synthetic_n_positive": 50,
    "synthetic_n_unlabeled": 600,
    "synthetic_n_test": 150,
    "n_classify": 8,
    "n_discover": 10,
    "redundancy": 1,
    "n_picks": 1,
    "max_iterations": 2,
    "learning_rate": 0.02,
    "max_epochs": 100,
}

state_dir = tempfile.mkdtemp(prefix="keywordloop-demo-")
client = TestClient(create_app(state_dir, config, seed=5))
worker = "demo-human"

status = client.get("/status").json()
print(f"phase={status['phase']} iteration={status['iteration']} "
      f"quota={status['quota']} labels needed")

print("\n--- classification phase")
while True:
    payload = client.get("/task", params={"worker": worker}).json()
    task = payload["task"]
    if task is None or task["kind"] != "classify":
        break
    # the planted topic tokens are the tell a human would notice
    label = int(any(tok.startswith("topic") for tok in task["text"].split()))
    client.post(
        "/submit",
        json={"task_id": task["task_id"], "worker_id": worker, "label": label},
    )
    print(f"  labeled {task['item_id']}: {task['text'][:48]!r} -> {label}")

while client.get("/status").json()["phase"] == "inferring":
    time.sleep(0.05)

print("\n--- keyword discovery phase")
task = client.get("/task", params={"worker": worker}).json()["task"]
print(f"  {len(task['items'])} microposts with model predictions")
marked = [item["item_id"] for item in task["items"][:4]]
pick = sorted(
    tok
    for item in task["items"][:4]
    for tok in item["tokens"]
    if tok.startswith("topic")  # pick an informative token, not filler
) [0]
client.post(
    "/submit",
    json={
        "task_id": task["task_id"],
        "worker_id": worker,
        "correct_ids": marked,
        "token": pick,
    },
)
print(f"  marked {len(marked)} predictions as correct, picked {pick!r}")

status = client.get("/status").json()
print(f"\nafter the iteration: phase={status['phase']} "
      f"completed={status['completed_iterations']}")
for row in status["keywords"]:
    print(f"  keyword {row['keyword']!r} expectation {row['expectation']:.3f}")
print(f"state persisted in {state_dir} (archive.jsonl + snapshot.json)")
