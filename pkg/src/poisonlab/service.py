"""HTTP service wrapping the attack simulator.

Every endpoint takes the same nested experiment config as the YAML file
(missing keys fall back to defaults) so the CLI can stay a thin client.
File paths in requests refer to the server's filesystem.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import config as cfgmod
from .errors import PoisonlabError
from .harness import (
    AttackResult,
    evaluate_accuracy,
    evaluate_asr,
    phase_timer_report,
    run_attack,
    select_mask,
    sweep,
    train_clean_control,
)
from .model import Classifier, init, train
from .poisoning import PoisonPlan, apply_plan, build_constraint, load_mask, save_mask
from .verify import check_gradients, check_inner_solver

app = FastAPI(title="poisonlab", version="0.1.0")


class ConfigRequest(BaseModel):
    """Nested experiment config merged over the built-in defaults."""

    config: dict = Field(default_factory=dict)


class SelectRequest(ConfigRequest):
    mask_path: str | None = None
    trace_path: str | None = None


class SelectResponse(BaseModel):
    strategy: str
    alpha: float
    budget: int
    quotas: list[int]
    selected_indices: list[int]
    mask_path: str | None = None


class PoisonRequest(ConfigRequest):
    mask_path: str
    output_csv: str


class PoisonResponse(BaseModel):
    output_csv: str
    poisoned_count: int
    dataset_size: int


class TrainRequest(ConfigRequest):
    mask_path: str | None = None
    checkpoint_path: str


class TrainResponse(BaseModel):
    checkpoint_path: str
    epochs: int
    final_train_loss: float
    final_train_accuracy: float


class EvaluateRequest(ConfigRequest):
    checkpoint_path: str


class EvaluateResponse(BaseModel):
    clean_accuracy: float
    attack_success_rate: float


class AttackResponse(BaseModel):
    strategy: str
    alpha: float
    seed: int
    clean_accuracy: float
    attack_success_rate: float
    select_seconds: float
    train_seconds: float
    fingerprint: str
    clean_control_accuracy: float | None = None


class AttackRequest(ConfigRequest):
    with_clean_control: bool = False
    trace_path: str | None = None


class SweepRequest(ConfigRequest):
    pass


class SweepResponse(BaseModel):
    csv_path: str
    json_path: str | None
    new_results: list[AttackResponse]
    skipped_existing: int
    errors: list[dict]
    timing: dict | None = None


class VerifyRequest(BaseModel):
    inner_instances: int = 200
    gradient_models: int = 50
    seed: int = 0


class VerifyResponse(BaseModel):
    inner_solver: dict
    gradients: dict
    passed: bool


def _merged(req: ConfigRequest) -> dict:
    return cfgmod._deep_merge(cfgmod.DEFAULTS, req.config)


def _experiment_parts(cfg: dict):
    train_ds, test_ds = cfgmod.dataset_from_config(cfg["dataset"])
    trig = cfgmod.trigger_from_config(cfg["trigger"], train_ds.dim)
    mode = cfgmod.mode_from_config(cfg["mode"])
    return train_ds, test_ds, trig, mode


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/select", response_model=SelectResponse)
def select_endpoint(req: SelectRequest):
    cfg = _merged(req)
    try:
        train_ds, _, trig, mode = _experiment_parts(cfg)
        alpha = float(cfg["strategy"]["alpha"])
        seed = int(cfg["strategy"].get("seed", 0))
        strategy = cfg["strategy"]["name"]
        con = build_constraint(train_ds, alpha, mode)
        mask = select_mask(strategy, train_ds, trig, mode, con, seed,
                           lps_cfg=cfgmod.lps_config_from(cfg),
                           fus_cfg=cfgmod.fus_config_from(cfg),
                           trace_path=req.trace_path)
        plan = PoisonPlan(mask=mask, alpha=alpha, label_mode=mode,
                          trigger=trig)
        if req.mask_path:
            save_mask(req.mask_path, train_ds, plan)
    except (PoisonlabError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return SelectResponse(
        strategy=strategy, alpha=alpha, budget=con.budget,
        quotas=[int(q) for q in con.quotas],
        selected_indices=[int(i) for i in plan.selected],
        mask_path=req.mask_path)


@app.post("/poison", response_model=PoisonResponse)
def poison_endpoint(req: PoisonRequest):
    cfg = _merged(req)
    try:
        train_ds, _, trig, _ = _experiment_parts(cfg)
        mask, alpha, mode = load_mask(req.mask_path, train_ds.size)
        plan = PoisonPlan(mask=mask, alpha=alpha, label_mode=mode,
                          trigger=trig)
        poisoned = apply_plan(train_ds, plan)
        poisoned.to_csv(req.output_csv)
    except (PoisonlabError, ValueError, OSError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return PoisonResponse(output_csv=req.output_csv,
                          poisoned_count=int(mask.sum()),
                          dataset_size=poisoned.size)


@app.post("/train", response_model=TrainResponse)
def train_endpoint(req: TrainRequest):
    cfg = _merged(req)
    try:
        train_ds, _, trig, _ = _experiment_parts(cfg)
        seed = int(cfg["strategy"].get("seed", 0))
        train_cfg = cfgmod.train_config_from(cfg["train"], seed=seed)
        plan = None
        if req.mask_path:
            mask, alpha, mode = load_mask(req.mask_path, train_ds.size)
            plan = PoisonPlan(mask=mask, alpha=alpha, label_mode=mode,
                              trigger=trig)
        dims = (cfg["train"].get("target_dims")
                or [train_ds.dim, 128, 64, train_ds.num_classes])
        model = init(dims, seed + 1)
        reports = train(model, train_ds, plan, train_cfg)
        model.save(req.checkpoint_path)
    except (PoisonlabError, ValueError, OSError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return TrainResponse(checkpoint_path=req.checkpoint_path,
                         epochs=len(reports),
                         final_train_loss=reports[-1].mean_loss,
                         final_train_accuracy=reports[-1].accuracy)


@app.post("/evaluate", response_model=EvaluateResponse)
def evaluate_endpoint(req: EvaluateRequest):
    cfg = _merged(req)
    try:
        _, test_ds, trig, mode = _experiment_parts(cfg)
        model = Classifier.load(req.checkpoint_path)
        acc = evaluate_accuracy(model, test_ds)
        asr = evaluate_asr(model, test_ds, trig, mode)
    except (PoisonlabError, ValueError, OSError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return EvaluateResponse(clean_accuracy=acc, attack_success_rate=asr)


def _attack_response(result: AttackResult,
                     control: float | None = None) -> AttackResponse:
    return AttackResponse(
        strategy=result.strategy, alpha=result.alpha, seed=result.seed,
        clean_accuracy=result.clean_accuracy,
        attack_success_rate=result.attack_success_rate,
        select_seconds=result.select_seconds,
        train_seconds=result.train_seconds,
        fingerprint=result.fingerprint,
        clean_control_accuracy=control)


@app.post("/attack", response_model=AttackResponse)
def attack_endpoint(req: AttackRequest):
    cfg = _merged(req)
    try:
        train_ds, test_ds, trig, mode = _experiment_parts(cfg)
        seed = int(cfg["strategy"].get("seed", 0))
        target_cfg = cfgmod.train_config_from(cfg["train"])
        result = run_attack(
            train_ds, test_ds, cfg["strategy"]["name"], trig, mode,
            float(cfg["strategy"]["alpha"]), target_cfg, seed,
            target_dims=cfg["train"].get("target_dims"),
            lps_cfg=cfgmod.lps_config_from(cfg),
            fus_cfg=cfgmod.fus_config_from(cfg),
            trace_path=req.trace_path)
        control = None
        if req.with_clean_control:
            control = train_clean_control(
                train_ds, test_ds, target_cfg, seed,
                target_dims=cfg["train"].get("target_dims"))
    except (PoisonlabError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return _attack_response(result, control)


@app.post("/sweep", response_model=SweepResponse)
def sweep_endpoint(req: SweepRequest):
    cfg = _merged(req)
    sw = cfg["sweep"]
    try:
        train_ds, test_ds, trig, mode = _experiment_parts(cfg)
        target_cfg = cfgmod.train_config_from(cfg["train"])
        report = sweep(
            train_ds, test_ds, sw["strategies"], sw["alphas"], sw["seeds"],
            trig, mode, target_cfg, sw["csv"], json_path=sw.get("json"),
            target_dims=cfg["train"].get("target_dims"),
            lps_cfg=cfgmod.lps_config_from(cfg),
            fus_cfg=cfgmod.fus_config_from(cfg))
    except (PoisonlabError, ValueError, OSError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    new = [AttackResponse(**{k: v for k, v in r.items()
                             if k != "clean_control_accuracy"})
           for r in _result_dicts(report)]
    timing = None
    if report["new_results"]:
        timing = phase_timer_report(
            [AttackResult(**_from_report(r)) for r in report["new_results"]])
    return SweepResponse(csv_path=sw["csv"], json_path=sw.get("json"),
                         new_results=new,
                         skipped_existing=report["skipped_existing"],
                         errors=report["errors"], timing=timing)


def _from_report(r: dict) -> dict:
    return {k: r[k] for k in ("strategy", "alpha", "seed", "clean_accuracy",
                              "attack_success_rate", "select_seconds",
                              "train_seconds", "fingerprint")}


def _result_dicts(report: dict) -> list[dict]:
    return [_from_report(r) for r in report["new_results"]]


@app.post("/verify", response_model=VerifyResponse)
def verify_endpoint(req: VerifyRequest):
    inner = check_inner_solver(req.inner_instances, req.seed)
    grads = check_gradients(req.gradient_models, req.seed)
    return VerifyResponse(inner_solver=inner, gradients=grads,
                          passed=inner["passed"] and grads["passed"])
