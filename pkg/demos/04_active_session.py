"""Drive the session API the way an annotation frontend would.

The service keeps the fitted model behind HTTP endpoints; a reviewer adds a
landmark pair where the uncertainty map looks worst and the variance there
collapses.  This script runs the app in process with a test client, so no
server needs to be started.
"""
import tempfile

import numpy as np
from fastapi.testclient import TestClient

from gpdeform import SyntheticSpec, generate_synthetic_case
from gpdeform.session import create_app

case = generate_synthetic_case(SyntheticSpec(seed=3, n_landmarks=40))
doc = {
    "version": 1,
    "pairs": [
        {"id": p.id, "pre": list(map(float, p.pre)),
         "post": list(map(float, p.post)), "source": p.source}
        for p in case.train.pairs
    ],
}

client = TestClient(create_app(data_dir=tempfile.mkdtemp()))
created = client.post("/sessions", json={"landmarks": doc}).json()
sid = created["id"]
summary = created["summary"]
print(f"session {sid}: {summary['n_landmarks']} landmarks, "
      f"kernel via {summary['kernel_source']}, CV protocol {summary['protocol']}")

# Ask for an uncertainty slice, exactly like the viewer overlay does.
dims = summary["grid"]["dims"]
r = client.get(f"/sessions/{sid}/slices",
               params={"kind": "uncertainty", "axis": "z", "index": dims[2] // 2})
meta = r.json()["meta"]
print(f"mid z-slice uncertainty: min {meta['min']:.3f}, max {meta['max']:.3f} mm^2")

# Add a pair in a sparsely covered corner and watch the local variance drop.
probe = [5.0, 5.0, 5.0]
added = client.post(f"/sessions/{sid}/landmarks",
                    json={"pre": probe, "post": [6.0, 5.0, 5.0]}).json()
print(f"added landmark {added['landmark_id']} at {probe}: "
      f"uncertainty {added['uncertainty_before']:.3f} -> "
      f"{added['uncertainty_after']:.3f} mm^2 (revision {added['revision']})")

# Undo it; the model returns to its previous state.
client.delete(f"/sessions/{sid}/landmarks/{added['landmark_id']}")
state = client.get(f"/sessions/{sid}/state").json()
print(f"after removal: {state['n_landmarks']} landmarks, revision {state['revision']}")

exported = client.post(f"/sessions/{sid}/export", json={}).json()
print("exported:", *exported["files"].values(), sep="\n  ")
