"""Stateless prediction worker.

Holds the model (loaded at start) and answers request/response calls:
/predict turns a window (or a batch) into prediction + relevance +
super-feature explanation; /healthz is the liveness probe. Responses are a
pure function of the payload, so any worker can serve any request and
identical requests yield byte-identical bodies. Batches are evaluated in
one vectorized pass; a 100-session tick costs tens of milliseconds.
"""

from __future__ import annotations

import numpy as np
from fastapi import Body, FastAPI
from fastapi.responses import JSONResponse

from ..errors import ValidationError, XlaneError
from ..explanation import aggregate_super, top_k
from ..features import CLASS_NAMES, PREDICTION_HORIZON, sentinel_window
from ..ig import integrated_gradients_batch
from ..lrp import LrpConfig, explain_batch
from ..model import LnLstmParams, forward_batch
from .protocol import parse_predict_body


class WorkerCore:
    def __init__(self, params: LnLstmParams, worker_id: str = "w0"):
        self.params = params
        self.worker_id = worker_id

    # -- request handling ----------------------------------------------------

    def handle(self, path: str, body: dict = None):
        """(status, response) for a request; HTTP-style semantics."""
        if path == "/healthz":
            return 200, {"status": "ok"}
        if path == "/predict":
            try:
                windows, options, batched = parse_predict_body(body or {})
            except ValidationError as e:
                return 400, {"error": str(e)}
            try:
                results = self._predict_batch(windows, options)
            except XlaneError as e:
                return 422, {"error": str(e)}
            if batched:
                return 200, {"results": results}
            return 200, results[0]
        return 404, {"error": f"unknown path {path}"}

    def _predict_batch(self, windows, options) -> list:
        x = np.stack([w.frames for w in windows])
        trace = forward_batch(x, self.params)
        pred_idx = np.argmax(trace.logits, axis=1)
        if options["explain_class"] == "predicted":
            classes = pred_idx
        else:
            classes = np.full(len(windows),
                              CLASS_NAMES.index(options["explain_class"]))

        method = options["method"]
        if method in ("lrp-omega", "lrp-identity"):
            cfg = LrpConfig(epsilon=options["epsilon"],
                            ln_rule="omega" if method == "lrp-omega" else "identity",
                            omega_variant=options["omega_variant"])
            rel, ledger = explain_batch(trace, self.params, classes, cfg)
            sinks = [{k: float(v[i]) for k, v in ledger.sinks.items()}
                     for i in range(len(windows))]
        else:
            baselines = np.stack([sentinel_window(w).frames for w in windows])
            rel = integrated_gradients_batch(x, baselines, self.params,
                                             classes, options["steps"])
            sinks = [{} for _ in windows]

        results = []
        for i in range(len(windows)):
            expl = aggregate_super(rel[i].sum(axis=0))
            ranked = top_k(expl, k=3)
            results.append({
                "prediction": {
                    "logits": trace.logits[i].tolist(),
                    "probabilities": trace.probs[i].tolist(),
                    "predicted_class": CLASS_NAMES[pred_idx[i]],
                    "horizon": PREDICTION_HORIZON,
                },
                "explained_class": CLASS_NAMES[classes[i]],
                "method": method,
                "relevance": rel[i].reshape(-1).tolist(),
                "sinks": sinks[i],
                "explanation": {
                    "per_slot": expl.to_dict(),
                    "top3": [r.to_dict() for r in ranked],
                },
            })
        return results


def build_worker_app(core: WorkerCore):
    """FastAPI wrapper exposing /predict and /healthz over HTTP."""
    app = FastAPI(title="prediction worker")

    @app.get("/healthz")
    def healthz():
        status, body = core.handle("/healthz")
        return JSONResponse(body, status_code=status)

    @app.post("/predict")
    async def predict(body: dict = Body(...)):
        status, response = core.handle("/predict", body)
        return JSONResponse(response, status_code=status)

    return app
