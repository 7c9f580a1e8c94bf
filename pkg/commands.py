#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import hashlib
import json
import os
from functools import partial

import numpy as np
from tqdm import tqdm

from src.configs import RunConfig
from src.data import (ClassWeights, align_predictions, class_weights_from_frequency, concat_tables, read_frame_csv,
                      read_prediction_csv, read_stream_csv, write_frame_csv, write_prediction_csv, write_stream_csv,
                      FrameTable)
from src.errors import ValidationError
from src.models import (BoostConfig, fit_gbdt, format_importance_table, feature_importance, gbdt_predict, grid_search,
                        grid_table_frame, save_model)
from src.objectives import brier_score, error_rate
from src.pipelines import (DEFAULT_SAMPLE_RATES, SmoothKernel, add_differences, add_lag_lead, correct_handedness,
                           fit_stack, frame_from_streams, optimize_smooth_weights, participant_folds, smooth,
                           split_into_subsequences, stack_predict, stack_transfer)
from src.synth import generate_scenario
from src.utils import log


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(data, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


class Workspace:
    """Artifact layout under the run directory: one folder per stage plus its manifest.json."""

    def __init__(self, out_dir):
        self.root = os.path.abspath(out_dir)

    def path(self, stage, name):
        return os.path.join(self.root, stage, name)

    def output(self, stage, name):
        os.makedirs(os.path.join(self.root, stage), exist_ok=True)
        return self.path(stage, name)

    def require(self, stage, name):
        path = self.path(stage, name)
        if not os.path.isfile(path):
            raise ValidationError(f"missing input {path}; run the `{stage}` command first")
        return path

    def relative(self, path):
        return os.path.relpath(path, self.root).replace(os.sep, "/")

    def write_manifest(self, stage, command, cfg: RunConfig, inputs, outputs):
        manifest = {
            "command": command,
            "seed": cfg.seed,
            "config": cfg.to_dict(),
            "inputs": {self.relative(p): file_sha256(p) for p in inputs},
            "outputs": {self.relative(p): file_sha256(p) for p in outputs},
        }
        path = self.output(stage, "manifest.json")
        write_json(manifest, path)
        return path


def model_inputs(ws: Workspace, cfg: RunConfig):
    stage = "transfer" if cfg.transfer.enabled else "features"
    return ws.require(stage, "train.csv"), ws.require(stage, "test.csv")


def class_weights_for(cfg: RunConfig, Y) -> ClassWeights:
    if cfg.eval.class_weights is not None:
        return ClassWeights(np.asarray(cfg.eval.class_weights, dtype=np.float64))
    return class_weights_from_frequency(Y)


def holdout_rows(table: FrameTable, holdout):
    return np.flatnonzero(np.isin(table.participant_id, list(holdout)))


def labels_by_participant(table: FrameTable):
    """Per-participant soft-label and room arrays in second order; rooms are None when the table has none."""
    table = table.sort_keys()
    soft_labels, rooms = {}, ({} if table.room is not None else None)
    for pid in np.unique(table.participant_id):
        rows = table.participant_id == pid
        soft_labels[int(pid)] = table.soft_labels[rows]
        if rooms is not None:
            rooms[int(pid)] = table.room[rows]
    return soft_labels, rooms


class GenerateCommand:
    CONFIG_SECTION = "gen"
    FUNCTION = "main"
    DESCRIPTION = "Generate the synthetic house: raw sensor streams plus per-second labels and rooms."

    def main(self, cfg: RunConfig, ws: Workspace, **kwargs):
        scenario = generate_scenario(cfg.gen)
        outputs = [ws.output("raw", name) for name in
                   ("train_streams.csv", "test_streams.csv", "train_labels.csv", "test_labels.csv", "scenario.json")]
        write_stream_csv(scenario.train_streams, outputs[0])
        write_stream_csv(scenario.test_streams, outputs[1])
        write_frame_csv(scenario.train.select_columns([]), outputs[2])
        write_frame_csv(scenario.test.select_columns([]), outputs[3])
        write_json(scenario.manifest, outputs[4])
        return [], outputs


class SplitCommand:
    CONFIG_SECTION = "split"
    FUNCTION = "main"
    DESCRIPTION = "Aggregate the raw streams per second, then cut every sequence into random subsequences."

    def main(self, cfg: RunConfig, ws: Workspace, **kwargs):
        inputs = [ws.require("raw", name) for name in
                  ("train_streams.csv", "train_labels.csv", "test_streams.csv", "test_labels.csv")]
        outputs = [ws.output("split", "train.csv"), ws.output("split", "test.csv")]
        plan = cfg.split.plan(cfg.seed)
        streams = [read_stream_csv(inputs[0], DEFAULT_SAMPLE_RATES), read_stream_csv(inputs[2], DEFAULT_SAMPLE_RATES)]
        # a participant's camera stream is empty when they never enter a camera room
        channels = sorted({s.channel for part in streams for s in part})
        for part, labels_path, dst in zip(streams, inputs[1::2], outputs):
            labels = read_frame_csv(labels_path, n_classes=cfg.gen.n_activities)
            soft_labels, rooms = labels_by_participant(labels)
            table = frame_from_streams(part, cfg.gen.n_activities, soft_labels=soft_labels, rooms=rooms,
                                       channels=channels)
            if cfg.split.enabled:
                table = split_into_subsequences(table, plan)
            else:
                log("[Split] resplitting disabled; sequences are kept whole", message_type='warning')
            write_frame_csv(table, dst)
        return inputs, outputs


class FeaturesCommand:
    CONFIG_SECTION = "features"
    FUNCTION = "main"
    DESCRIPTION = "Handedness correction, lag/lead copies and finite differences inside subsequences."

    def main(self, cfg: RunConfig, ws: Workspace, **kwargs):
        inputs = [ws.require("split", "train.csv"), ws.require("split", "test.csv")]
        train, test = (read_frame_csv(p, n_classes=cfg.gen.n_activities) for p in inputs)
        section = cfg.features
        flags = {}
        if section.handedness:
            both, flags = correct_handedness(concat_tables([train, test]))
            train = train.replace(features=both.features[:len(train)])
            test = test.replace(features=both.features[len(train):])
        tables = []
        for table in (train, test):
            if section.lag_lead_orders and section.lag_lead_columns:
                table = add_lag_lead(table, section.lag_lead_columns, section.lag_lead_orders)
            if section.difference_order and section.difference_columns:
                table = add_differences(table, section.difference_columns, section.difference_order)
            tables.append(table)
        outputs = [ws.output("features", "train.csv"), ws.output("features", "test.csv"),
                   ws.output("features", "handedness.json")]
        write_frame_csv(tables[0], outputs[0])
        write_frame_csv(tables[1], outputs[1])
        write_json({str(p): v for p, v in sorted(flags.items())}, outputs[2])
        log(f"[Features] {len(tables[0].columns)} feature columns", message_type='normal')
        return inputs, outputs


class TransferCommand:
    CONFIG_SECTION = "transfer"
    FUNCTION = "main"
    DESCRIPTION = "Replace the train-only room by out-of-fold room probabilities on both train and test."

    def main(self, cfg: RunConfig, ws: Workspace, n_threads=1, progress_bar_cmd=tqdm, **kwargs):
        inputs = [ws.require("features", "train.csv"), ws.require("features", "test.csv")]
        if not cfg.transfer.enabled:
            log("[Stack] room transfer disabled; later stages read the feature tables", message_type='warning')
            return inputs, []
        train, test = (read_frame_csv(p, n_classes=cfg.gen.n_activities) for p in inputs)
        folds = participant_folds(np.unique(train.participant_id))
        n_rooms = cfg.transfer.n_rooms if cfg.transfer.n_rooms is not None else cfg.gen.n_rooms
        train_out, test_out, oof = stack_transfer(train, test, folds, cfg.transfer.spec(), n_rooms=n_rooms,
                                                  seed=cfg.seed, n_threads=n_threads,
                                                  progress_bar_cmd=progress_bar_cmd)
        violations = oof.audit()
        if violations:
            raise ValidationError(f"out-of-fold audit failed: {violations[0]}")
        outputs = [ws.output("transfer", "train.csv"), ws.output("transfer", "test.csv"),
                   ws.output("transfer", "room_oof.csv")]
        write_frame_csv(train_out, outputs[0])
        write_frame_csv(test_out, outputs[1])
        write_prediction_csv(train, oof.values, outputs[2], producer=oof.producer)
        return inputs, outputs


class TrainCommand:
    CONFIG_SECTION = "train"
    FUNCTION = "main"
    DESCRIPTION = "Grid-search the softmax Brier booster with early stopping on the holdout participants."

    def main(self, cfg: RunConfig, ws: Workspace, n_threads=1, progress_bar_cmd=tqdm, **kwargs):
        inputs = list(model_inputs(ws, cfg))
        train, test = (read_frame_csv(p, n_classes=cfg.gen.n_activities) for p in inputs)
        Y = train.labels()
        w = class_weights_for(cfg, Y)
        folds = participant_folds(np.unique(train.participant_id), cfg.train.holdout)
        valid = holdout_rows(train, folds.holdout)
        if valid.size == 0:
            raise ValidationError("train needs at least one holdout participant for early stopping")
        fit = np.setdiff1d(np.arange(len(train)), valid)
        X, Yv = train.features, Y.values

        base = cfg.train.base_config()
        best, table = grid_search(cfg.train.grid, X[fit], Yv[fit], w, X[valid], Yv[valid], base=base,
                                  n_threads=n_threads, progress_bar_cmd=progress_bar_cmd)
        model = fit_gbdt(X[fit], Yv[fit], w, best, X[valid], Yv[valid], n_threads=n_threads,
                         progress_bar_cmd=progress_bar_cmd)
        holdout_pred = gbdt_predict(model, X[valid])
        summary = {
            "best_config": best.to_dict(),
            "best_round": model.best_round,
            "holdout_brier": brier_score(holdout_pred, Yv[valid], w),
            "holdout_error_rate": error_rate(holdout_pred, Yv[valid]),
        }
        logloss_cfg = BoostConfig.from_dict({**best.to_dict(), "objective": "softmax_logloss"})
        logloss_model = fit_gbdt(X[fit], Yv[fit], w, logloss_cfg, X[valid], Yv[valid], n_threads=n_threads,
                                 progress_bar_cmd=progress_bar_cmd)
        summary["holdout_brier_logloss"] = brier_score(gbdt_predict(logloss_model, X[valid]), Yv[valid], w)
        log(f"[Train] holdout Brier {summary['holdout_brier']:.6f} (brier objective) vs "
            f"{summary['holdout_brier_logloss']:.6f} (logloss objective)", message_type='finish')

        outputs = [ws.output("train", name) for name in
                   ("grid_results.csv", "gbdt_brier.safetensors", "holdout_pred.csv", "test_pred.csv",
                    "importance.txt", "summary.json")]
        grid_table_frame(table).to_csv(outputs[0], index=False, float_format="%.6f", lineterminator="\n")
        save_model(model, outputs[1])
        write_prediction_csv(train.take(valid), holdout_pred, outputs[2])
        write_prediction_csv(test, gbdt_predict(model, test.features), outputs[3])
        ranked = feature_importance(model.trees()[:model.best_round * model.n_classes] or model.trees(),
                                    list(train.columns))
        with open(outputs[4], "w", encoding="utf-8", newline="\n") as f:
            f.write(format_importance_table(ranked) + "\n")
        write_json(summary, outputs[5])
        return inputs, outputs


class StackCommand:
    CONFIG_SECTION = "stack"
    FUNCTION = "main"
    DESCRIPTION = "Fit the level-1 learner zoo out of fold and a grid-searched booster on top of it."

    def main(self, cfg: RunConfig, ws: Workspace, n_threads=1, progress_bar_cmd=tqdm, **kwargs):
        inputs = list(model_inputs(ws, cfg))
        train, test = (read_frame_csv(p, n_classes=cfg.gen.n_activities) for p in inputs)
        Y = train.labels()
        w = class_weights_for(cfg, Y)
        folds = participant_folds(np.unique(train.participant_id), cfg.train.holdout)
        sm = fit_stack(cfg.train.specs(), folds, train, Y, w, grid=cfg.stack.grid, base=cfg.stack.base_config(),
                       use_base_features=cfg.stack.use_base_features, seed=cfg.seed, n_threads=n_threads,
                       progress_bar_cmd=progress_bar_cmd)
        outputs = [ws.output("stack", name) for name in
                   ("model.safetensors", "holdout_pred.csv", "test_pred.csv", "report.json")]
        save_model(sm, outputs[0])
        if sm.holdout_prediction is not None:
            write_prediction_csv(train.take(holdout_rows(train, folds.holdout)), sm.holdout_prediction, outputs[1])
        else:
            outputs.remove(outputs[1])
        write_prediction_csv(test, stack_predict(sm, test), outputs[-2])
        write_json(sm.report, outputs[-1])
        return inputs, outputs


class SmoothCommand:
    CONFIG_SECTION = "smooth"
    FUNCTION = "main"
    DESCRIPTION = "Average each second with its neighbours; kernel weights are fit on the holdout predictions."

    def main(self, cfg: RunConfig, ws: Workspace, **kwargs):
        train_path, _ = model_inputs(ws, cfg)
        inputs = [train_path, ws.require("stack", "holdout_pred.csv"), ws.require("stack", "test_pred.csv")]
        train = read_frame_csv(train_path, n_classes=cfg.gen.n_activities)
        holdout = train.take(holdout_rows(train, cfg.train.holdout))
        keys, P_hold = read_prediction_csv(inputs[1])
        P_hold = align_predictions(holdout, keys, P_hold)
        test_keys, P_test = read_prediction_csv(inputs[2])
        structure = tuple(test_keys[c].to_numpy() for c in ("participant_id", "subsequence_id", "second_index"))
        w = class_weights_for(cfg, train.labels())

        if not cfg.smooth.enabled:
            kernel = SmoothKernel.identity()
        elif cfg.smooth.kernel is not None:
            kernel = SmoothKernel(np.asarray(cfg.smooth.kernel, dtype=np.float64))
        else:
            kernel = optimize_smooth_weights(P_hold, holdout.labels(), w, holdout, tol=cfg.smooth.tol,
                                             max_sweeps=cfg.smooth.max_sweeps)
        holdout_smoothed = smooth(P_hold, holdout, kernel)
        test_smoothed = smooth(P_test, structure, kernel)
        report = {
            "kernel": kernel.to_list(),
            "holdout_brier_before": brier_score(P_hold, holdout.labels(), w),
            "holdout_brier_after": brier_score(holdout_smoothed, holdout.labels(), w),
        }
        outputs = [ws.output("smooth", name) for name in ("kernel.json", "holdout_pred.csv", "test_pred.csv")]
        write_json(report, outputs[0])
        write_prediction_csv(holdout, holdout_smoothed, outputs[1])
        test_rows = FrameTable(participant_id=structure[0], subsequence_id=structure[1], second_index=structure[2],
                               features=np.zeros((len(test_keys), 0)), columns=(), n_classes=P_test.shape[1])
        write_prediction_csv(test_rows, test_smoothed, outputs[2])
        return inputs, outputs


class EvalCommand:
    CONFIG_SECTION = "eval"
    FUNCTION = "main"
    DESCRIPTION = "Report the weighted Brier score and error rate of a prediction file against soft labels."

    def main(self, cfg: RunConfig, ws: Workspace, pred=None, labels=None, **kwargs):
        if pred is None:
            pred = ws.require("smooth", "test_pred.csv") if os.path.isfile(ws.path("smooth", "test_pred.csv")) \
                else ws.require("stack", "test_pred.csv")
        if labels is None:
            labels = ws.require("split", "test.csv")
        keys, P = read_prediction_csv(pred)
        truth = load_labels(labels)
        P = align_predictions(truth, keys, P)
        Y = truth.labels()
        if cfg.eval.class_weights is not None:
            w = class_weights_for(cfg, Y)
        elif os.path.isfile(ws.path("split", "train.csv")):
            w = class_weights_from_frequency(read_frame_csv(ws.path("split", "train.csv")).labels())
        else:
            w = class_weights_from_frequency(Y)
        report = {"weighted_brier": brier_score(P, Y, w), "error_rate": error_rate(P, Y), "rows": len(truth)}
        print(f"weighted Brier: {report['weighted_brier']:.6f}")
        print(f"error rate: {report['error_rate']:.6f}")
        output = ws.output("eval", "report.json")
        write_json(report, output)
        return [pred, labels], [output]


def load_labels(path) -> FrameTable:
    """Soft labels from a frame-table CSV (y_XX columns) or a prediction CSV (p_XX columns)."""
    table = read_frame_csv(path)
    if table.soft_labels is None:
        keys, P = read_prediction_csv(path)
        return FrameTable(participant_id=keys["participant_id"].to_numpy(), subsequence_id=keys["subsequence_id"].to_numpy(),
                          second_index=keys["second_index"].to_numpy(), features=np.zeros((len(keys), 0)), columns=(),
                          n_classes=P.shape[1], soft_labels=P.values)
    return table


PIPELINE_ORDER = ("gen", "split", "features", "transfer", "train", "stack", "smooth", "eval")


class PipelineCommand:
    CONFIG_SECTION = None
    FUNCTION = "main"
    DESCRIPTION = "Run every stage in order: " + ", ".join(PIPELINE_ORDER) + "."

    def main(self, cfg: RunConfig, ws: Workspace, **kwargs):
        for name in PIPELINE_ORDER:
            run_command(name, cfg, ws, **kwargs)
        return [], []


COMMAND_CLASS_MAPPINGS = {
    "gen": GenerateCommand,
    "split": SplitCommand,
    "features": FeaturesCommand,
    "transfer": TransferCommand,
    "train": TrainCommand,
    "stack": StackCommand,
    "smooth": SmoothCommand,
    "eval": EvalCommand,
    "pipeline": PipelineCommand,
}


def run_command(name, cfg: RunConfig, ws: Workspace, n_threads=1, progress_bar_cmd=None, **kwargs):
    if name not in COMMAND_CLASS_MAPPINGS:
        raise ValidationError(f"unknown command {name!r}, expected one of {sorted(COMMAND_CLASS_MAPPINGS)}")
    if progress_bar_cmd is None:
        progress_bar_cmd = partial(tqdm, disable=None, leave=False)
    command = COMMAND_CLASS_MAPPINGS[name]()
    log(f"[{name}] {command.DESCRIPTION}", message_type='info')
    inputs, outputs = getattr(command, command.FUNCTION)(cfg, ws, n_threads=n_threads,
                                                          progress_bar_cmd=progress_bar_cmd, **kwargs)
    if name != "pipeline":
        ws.write_manifest(name, name, cfg, inputs, outputs)
    log(f"[{name}] done: {len(outputs)} artifact(s) under {ws.root}", message_type='finish')
    return outputs
