"""The studio HTTP service, exercised as a client would: list styles,
stylize a portrait, mix with noise tails, upload a reference, poll its job,
then mix against the finished embedding.

Needs the workspace from demos/01_full_pipeline.py. The same server comes up
with `facestyle serve --workspace <ws>`; this demo hosts it in-process so it
can clean up after itself.

    python3 demos/04_studio_service.py --workspace /tmp/facestyle_demo
"""

import argparse
import base64
import time
from pathlib import Path

from fastapi.testclient import TestClient

from facestyle.service import create_app
from facestyle.workspace import Workspace


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workspace", default="/tmp/facestyle_demo")
    ap.add_argument("--style", default="cartoon")
    args = ap.parse_args()

    root = Path(args.workspace)
    ws = Workspace(root / "ws", {"service": {"reference_iterations": 40, "reference_k": 16}})
    client = TestClient(create_app(ws))

    styles = client.get("/api/styles").json()
    print("styles:", [(s["style_id"], s["truncation_psi"], s["default_mix_indices"])
                      for s in styles])
    chosen = next(s for s in styles if s["style_id"] == args.style)

    portrait_b64 = base64.b64encode(
        (ws.content_dir / "img_00002.png").read_bytes()
    ).decode()
    r = client.post("/api/stylize", json={"style_id": args.style,
                                          "image_png_b64": portrait_b64})
    r.raise_for_status()
    (root / "service_stylized.png").write_bytes(base64.b64decode(r.json()["image_png_b64"]))

    k = chosen["default_mix_indices"][1]
    r = client.post("/api/mix", json={"style_id": args.style, "image_png_b64": portrait_b64,
                                      "mode": "noise", "k": k, "seed": 7})
    r.raise_for_status()
    (root / "service_mix.png").write_bytes(base64.b64decode(r.json()["image_png_b64"]))

    ref_b64 = base64.b64encode(
        (ws.style_data_dir(args.style) / "img_00001.png").read_bytes()
    ).decode()
    job_id = client.post("/api/reference", json={"style_id": args.style,
                                                 "image_png_b64": ref_b64}).json()["job_id"]
    while True:
        job = client.get(f"/api/jobs/{job_id}").json()
        print(f"  job {job_id}: {job['status']} progress={job['progress']:.2f}")
        if job["status"] in ("done", "failed"):
            break
        time.sleep(0.2)
    assert job["status"] == "done", job

    r = client.post("/api/mix", json={"style_id": args.style, "image_png_b64": portrait_b64,
                                      "mode": "reference", "k": k,
                                      "reference_id": job["result_id"]})
    r.raise_for_status()
    (root / "service_reference_mix.png").write_bytes(
        base64.b64decode(r.json()["image_png_b64"]))

    print(f"wrote {root}/service_stylized.png, service_mix.png, service_reference_mix.png")


if __name__ == "__main__":
    main()
