"""Config-driven batch runs of the augmentation stages.

Stages run in the order ``acs -> mcs -> tdm -> features -> tfm``.  Each
writes under ``<output>/<stage>/``.  The training pool grows as stages run:

* ``acs`` reads the input dataset; its outputs (identity copy included)
  replace the originals in the pool.  When disabled the input passes through.
* ``mcs`` simulates clips from the pool's static solo segments.
* ``tdm`` mixes pairs of the pool's solo segments (MCS outputs included).
* ``features`` writes a feature file per pool clip; ``tfm`` writes masked
  copies of those files.

Seeds: every work item gets ``derive_seed(master, stage, key)``, a hash of
the three, so an item's output does not depend on which other items exist.
Random pair draws for ``mcs``/``tdm`` use the stage seed and therefore do
depend on the segment inventory.

``manifest.json`` records, per stage, the hours in and out and the sha256
of every file written.  A re-run skips items whose recorded inputs, params
and output hashes all still match.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import yaml
from scipy.io import wavfile

from .acs import apply_to_audio, apply_to_labels, get_transform
from .dataset import (DatasetItem, SegmentDescriptor, discover, extract_segments, load_segment,
                      parse_metadata, save_item)
from .exceptions import ConfigInvalid, SeldAugError
from .features import build_stack, read_features, write_features
from .mcs import analyze_segment, combine
from .mix_mask import TfmConfig, tdm_mix, tfm_apply

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
STAGES = ("acs", "mcs", "tdm", "features", "tfm")
FEATURE_SUFFIX = ".feat"

DEFAULTS = {
    "version": CONFIG_VERSION,
    "input": None,
    "output": None,
    "seed": 0,
    "workers": 1,
    "stages": {
        "acs": {"enabled": True, "patterns": [1, 2, 3, 4, 5, 6, 7, 8]},
        "mcs": {"enabled": False, "n_outputs": 10, "em_iterations": 10,
                "min_frames": 5, "static_tolerance": 5.0},
        "tdm": {"enabled": False, "n_outputs": 10, "gain_range": [0.5, 1.0], "min_frames": 5},
        "features": {"enabled": False},
        "tfm": {"enabled": False, "max_time_mask": 35, "time_mask_period": 100,
                "max_freq_mask": 30, "masked_map_count": 11},
    },
}
_REQUIRED = ("input", "output")


# --------------------------------------------------------------------------
# configuration

def _merge(defaults, given, path: str):
    if not isinstance(given, dict):
        raise ConfigInvalid(path or "<root>", "expected a mapping")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        p = f"{path}.{key}" if path else str(key)
        if key not in defaults:
            raise ConfigInvalid(p, "unknown key")
        ref = defaults[key]
        if isinstance(ref, dict):
            out[key] = _merge(ref, value, p)
        elif ref is None:
            if not isinstance(value, str):
                raise ConfigInvalid(p, "expected a path string")
            out[key] = value
        elif isinstance(ref, bool):
            if not isinstance(value, bool):
                raise ConfigInvalid(p, "expected true or false")
            out[key] = value
        elif isinstance(ref, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigInvalid(p, "expected an integer")
            out[key] = value
        elif isinstance(ref, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigInvalid(p, "expected a number")
            out[key] = float(value)
        elif isinstance(ref, list):
            if not isinstance(value, list):
                raise ConfigInvalid(p, "expected a list")
            out[key] = value
    return out


@dataclass
class PipelineConfig:
    input: Path
    output: Path
    seed: int = 0
    workers: int = 1
    stages: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["stages"]))

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        merged = _merge(DEFAULTS, raw or {}, "")
        if merged["version"] != CONFIG_VERSION:
            raise ConfigInvalid("version", f"unsupported config version {merged['version']}")
        for key in _REQUIRED:
            if merged[key] is None:
                raise ConfigInvalid(key, "required")
        cfg = cls(Path(merged["input"]), Path(merged["output"]), merged["seed"],
                  merged["workers"], merged["stages"])
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except OSError as exc:
            raise ConfigInvalid("<file>", f"cannot read {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigInvalid("<file>", f"not valid YAML: {exc}") from exc
        cfg = cls.from_dict(raw)
        base = Path(path).resolve().parent
        cfg.input, cfg.output = base / cfg.input, base / cfg.output
        return cfg

    def validate(self) -> None:
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigInvalid("seed", "must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ConfigInvalid("workers", "must be at least 1")
        s = self.stages
        pats = s["acs"]["patterns"]
        if not pats or any(isinstance(p, bool) or not isinstance(p, int) or not 1 <= p <= 8 for p in pats):
            raise ConfigInvalid("stages.acs.patterns", "expected a non-empty list of ints in 1..8")
        if len(set(pats)) != len(pats):
            raise ConfigInvalid("stages.acs.patterns", "duplicate pattern")
        for st in ("mcs", "tdm"):
            if s[st]["n_outputs"] < 0:
                raise ConfigInvalid(f"stages.{st}.n_outputs", "must be non-negative")
            if s[st]["min_frames"] < 1:
                raise ConfigInvalid(f"stages.{st}.min_frames", "must be at least 1")
        if s["mcs"]["em_iterations"] < 1:
            raise ConfigInvalid("stages.mcs.em_iterations", "must be at least 1")
        g = s["tdm"]["gain_range"]
        if len(g) != 2 or not all(isinstance(v, (int, float)) for v in g) or not 0 <= g[0] <= g[1]:
            raise ConfigInvalid("stages.tdm.gain_range", "expected [low, high] with 0 <= low <= high")
        try:
            self.tfm_config()
        except ValueError as exc:
            raise ConfigInvalid("stages.tfm", str(exc)) from None

    def tfm_config(self) -> TfmConfig:
        t = {k: v for k, v in self.stages["tfm"].items() if k != "enabled"}
        return TfmConfig(**t)

    def enabled(self, stage: str) -> bool:
        return bool(self.stages[stage]["enabled"])

    def digest(self) -> str:
        """Hash of everything that affects outputs (directories excluded)."""
        body = json.dumps({"seed": self.seed, "stages": self.stages}, sort_keys=True)
        return hashlib.sha256(body.encode()).hexdigest()


# --------------------------------------------------------------------------
# helpers

def derive_seed(master: int, stage: str, key: str) -> int:
    """Stable 63-bit seed for one work item."""
    h = hashlib.sha256(f"{int(master)}/{stage}/{key}".encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def wav_seconds(path) -> float:
    rate, data = wavfile.read(str(path), mmap=True)
    return data.shape[0] / rate


def item_seconds(item: DatasetItem) -> float:
    return wav_seconds(item.mic or item.foa)


def _hours(seconds: float) -> float:
    return round(seconds / 3600.0, 9)


def _item_files(item: DatasetItem) -> list:
    return [p for p in (item.mic, item.foa, item.metadata) if p is not None]


def _item_dict(item: DatasetItem) -> dict:
    return {"stem": item.stem, "mic": item.mic and str(item.mic),
            "foa": item.foa and str(item.foa), "metadata": item.metadata and str(item.metadata)}


def _item_from(d: dict) -> DatasetItem:
    return DatasetItem(d["stem"], *(Path(d[k]) if d[k] else None for k in ("mic", "foa", "metadata")))


# --------------------------------------------------------------------------
# work items (run in worker processes; arguments are plain data)

@lru_cache(maxsize=64)
def _cached_analysis(item_key: str, seg_json: str, iters: int):
    item = _item_from(json.loads(item_key))
    seg = SegmentDescriptor.from_json(seg_json)
    clip, ann = load_segment(item, seg)
    return analyze_segment(clip, ann, iters=iters,
                           segment_id=f"{seg.file_id}:{seg.start}-{seg.stop}")


def _do_acs(task):
    item = _item_from(task["item"])
    clip, ann = item.load()
    t = get_transform(task["pattern"])
    return save_item(task["out"], task["key"], apply_to_audio(clip, t),
                     apply_to_labels(ann, t) if item.metadata else None)


def _do_mcs(task):
    a = _cached_analysis(json.dumps(task["spectral"][0], sort_keys=True), task["spectral"][1],
                         task["iters"])
    b = _cached_analysis(json.dumps(task["spatial"][0], sort_keys=True), task["spatial"][1],
                         task["iters"])
    clip, ann = combine(a, b, np.random.default_rng(task["seed"]))
    return save_item(task["out"], task["key"], clip, ann)


def _do_tdm(task):
    segs = [load_segment(_item_from(i), SegmentDescriptor.from_json(s)) for i, s in task["pair"]]
    clip, ann = tdm_mix(segs[0], segs[1], np.random.default_rng(task["seed"]), task["gain_range"])
    return save_item(task["out"], task["key"], clip, ann)


def _do_features(task):
    clip, _ = _item_from(task["item"]).load()
    path = Path(task["out"]) / f"{task['key']}{FEATURE_SUFFIX}"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_features(build_stack(clip), path)
    return [path]


def _do_tfm(task):
    stack = read_features(task["source"])
    masked = tfm_apply(stack, TfmConfig(**task["tfm"]), np.random.default_rng(task["seed"]))
    path = Path(task["out"]) / f"{task['key']}{FEATURE_SUFFIX}"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_features(masked, path)
    return [path]


_HANDLERS = {"acs": _do_acs, "mcs": _do_mcs, "tdm": _do_tdm, "features": _do_features, "tfm": _do_tfm}


def _run_task(task: dict) -> dict:
    try:
        paths = _HANDLERS[task["stage"]](task)
        return {"key": task["key"], "files": [str(p) for p in paths]}
    except (SeldAugError, ValueError, OSError) as exc:
        return {"key": task["key"], "error": f"{type(exc).__name__}: {exc}"}


# --------------------------------------------------------------------------
# orchestration

@dataclass
class RunResult:
    manifest: dict
    errors: list
    skipped: int = 0
    manifest_path: Path | None = None

    @property
    def ok(self) -> bool:
        return not self.errors


class Pipeline:
    """Plans and executes stages for one :class:`PipelineConfig`."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = Path(config.output)
        self._hash_cache: dict = {}

    # -- pool bookkeeping -------------------------------------------------
    def stage_dir(self, stage: str) -> Path:
        return self.out / stage

    def pool_dirs(self, before: str) -> list:
        """Dataset directories forming the pool a stage reads from."""
        dirs = [self.stage_dir("acs") if self.config.enabled("acs") else Path(self.config.input)]
        for st in ("mcs", "tdm"):
            if STAGES.index(st) < STAGES.index(before) and self.config.enabled(st):
                dirs.append(self.stage_dir(st))
        return dirs

    def pool(self, before: str) -> list:
        items = []
        for d in self.pool_dirs(before):
            if not d.is_dir():
                raise ConfigInvalid("input" if d == Path(self.config.input) else f"stages.{d.name}",
                                    f"directory {d} does not exist (run the earlier stage first)")
            items.extend(discover(d))
        return items

    def _sha(self, path) -> str:
        key = str(path)
        if key not in self._hash_cache:
            self._hash_cache[key] = sha256_file(path)
        return self._hash_cache[key]

    def _rel(self, path) -> str:
        return Path(path).resolve().relative_to(self.out.resolve()).as_posix()

    def _segments(self, items, min_frames, static_tol=5.0, need_static=True) -> list:
        segs = []
        for item in items:
            if item.metadata is None:
                continue
            clip_dur = item_seconds(item)
            ann = parse_metadata(item.metadata)
            last = int(clip_dur * ann.frame_rate + 1e-9)
            for s in extract_segments(ann.window(0, last), item.stem, min_frames, static_tol):
                if not s.overlapping and (s.static or not need_static):
                    segs.append((item, s))
        return segs

    # -- planning ---------------------------------------------------------
    def plan(self, stage: str) -> tuple:
        """``(tasks, input_seconds)`` for one stage."""
        cfg, st = self.config, self.config.stages[stage]
        out = str(self.stage_dir(stage))
        stage_rng = np.random.default_rng(derive_seed(cfg.seed, stage, ""))
        tasks = []
        if stage == "acs":
            items = discover(cfg.input)
            for item in items:
                for p in sorted(st["patterns"]):
                    tasks.append({"key": f"{item.stem}_acs{p}", "item": _item_dict(item),
                                  "pattern": p, "sources": _item_files(item)})
            seconds = sum(item_seconds(i) for i in items)
        elif stage in ("mcs", "tdm"):
            items = self.pool(stage)
            seconds = sum(item_seconds(i) for i in items)
            segs = (self._segments(items, st["min_frames"], st["static_tolerance"]) if stage == "mcs"
                    else self._segments(items, st["min_frames"], need_static=False))
            if st["n_outputs"] and len(segs) < 2:
                log.warning("%s: only %d usable segments, nothing to do", stage, len(segs))
            elif st["n_outputs"]:
                for k in range(st["n_outputs"]):
                    i, j = (int(v) for v in stage_rng.choice(len(segs), size=2, replace=False))
                    pair = [(_item_dict(segs[n][0]), segs[n][1].to_json()) for n in (i, j)]
                    key = f"{stage}_{k:05d}"
                    task = {"key": key, "seed": derive_seed(cfg.seed, stage, key),
                            "sources": [p for n in (i, j) for p in _item_files(segs[n][0])]}
                    if stage == "mcs":
                        task.update(spectral=pair[0], spatial=pair[1], iters=st["em_iterations"])
                    else:
                        task.update(pair=pair, gain_range=list(st["gain_range"]))
                    tasks.append(task)
        elif stage == "features":
            items = self.pool(stage)
            seconds = sum(item_seconds(i) for i in items)
            for item in items:
                tasks.append({"key": item.stem, "item": _item_dict(item), "sources": _item_files(item)})
        else:  # tfm
            src = self.stage_dir("features")
            if not src.is_dir():
                raise ConfigInvalid("stages.tfm", "needs the features stage output")
            files = sorted(src.glob(f"*{FEATURE_SUFFIX}"))
            seconds = 0.0
            for f in files:
                stack = read_features(f)
                seconds += stack.n_frames / stack.frame_rate
                key = f.stem
                tasks.append({"key": key, "source": str(f), "seed": derive_seed(cfg.seed, stage, key),
                              "tfm": {k: v for k, v in st.items() if k != "enabled"},
                              "sources": [f]})
        for t in tasks:
            t["stage"], t["out"] = stage, out
        return tasks, seconds

    def _params_digest(self, task: dict) -> str:
        body = {k: v for k, v in task.items() if k not in ("out", "item", "pair", "spectral",
                                                            "spatial", "source", "sources")}
        body["inputs"] = [self._sha(p) for p in task["sources"]]
        for k in ("pair", "spectral", "spatial"):
            if k in task:
                segs = task[k] if k == "pair" else [task[k]]
                body[k] = [s for _, s in segs]
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    # -- execution --------------------------------------------------------
    def _execute(self, tasks: list) -> list:
        if self.config.workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=self.config.workers) as pool:
                return list(pool.map(_run_task, tasks, chunksize=1))
        return [_run_task(t) for t in tasks]

    def run_stage(self, stage: str, previous: dict | None) -> tuple:
        tasks, seconds = self.plan(stage)
        old = {it["key"]: it for it in (previous or {}).get("items", [])}
        todo, done, skipped = [], {}, 0
        for t in tasks:
            t["params"] = self._params_digest(t)
            prev = old.get(t["key"])
            if prev and prev.get("params") == t["params"] and all(
                    (self.out / rel).is_file() and sha256_file(self.out / rel) == h
                    for rel, h in prev["files"].items()):
                done[t["key"]] = prev
                skipped += 1
            else:
                todo.append(t)
        errors = []
        by_key = {t["key"]: t for t in todo}
        for res in self._execute(todo):
            if "error" in res:
                errors.append({"stage": stage, "key": res["key"], "error": res["error"]})
                log.error("%s %s: %s", stage, res["key"], res["error"])
                continue
            files = {self._rel(p): sha256_file(p) for p in res["files"]}
            done[res["key"]] = {"key": res["key"], "params": by_key[res["key"]]["params"],
                                "files": dict(sorted(files.items()))}
        items = [done[t["key"]] for t in tasks if t["key"] in done]
        out_seconds = self._output_seconds(stage, items)
        entry = {"enabled": True, "input_hours": _hours(seconds), "output_hours": _hours(out_seconds),
                 "input_seconds": round(seconds, 6), "output_seconds": round(out_seconds, 6),
                 "n_items": len(items), "items": items, "errors": errors}
        return entry, skipped

    def _output_seconds(self, stage: str, items: list) -> float:
        total = 0.0
        for it in items:
            for rel in it["files"]:
                p = self.out / rel
                if p.suffix == FEATURE_SUFFIX:
                    s = read_features(p)
                    total += s.n_frames / s.frame_rate
                elif p.suffix == ".wav" and (p.parent.name == "foa" or not
                                              (p.parent.parent / "foa" / p.name).exists()):
                    total += wav_seconds(p)
        return total

    def inputs_entry(self) -> dict:
        root = Path(self.config.input)
        if not root.is_dir():
            raise ConfigInvalid("input", f"directory {root} does not exist")
        items = discover(root)
        files = [{"path": Path(p).relative_to(root).as_posix(), "sha256": self._sha(p)}
                 for it in items for p in _item_files(it)]
        return {"hours": _hours(sum(item_seconds(i) for i in items)), "n_items": len(items),
                "files": files}

    def run(self, only: str | None = None) -> RunResult:
        if only is not None and only not in STAGES:
            raise ConfigInvalid("stage", f"unknown stage {only!r}; expected one of {STAGES}")
        self.out.mkdir(parents=True, exist_ok=True)
        mpath = self.out / "manifest.json"
        previous = {}
        if mpath.is_file():
            try:
                previous = json.loads(mpath.read_text())
            except json.JSONDecodeError:
                log.warning("ignoring unreadable manifest %s", mpath)
        manifest = {"format": 1, "config_sha256": self.config.digest(), "seed": self.config.seed,
                    "inputs": self.inputs_entry(), "stages": {}}
        errors, skipped = [], 0
        for stage in STAGES:
            prev_entry = previous.get("stages", {}).get(stage)
            if not self.config.enabled(stage):
                manifest["stages"][stage] = {"enabled": False}
                continue
            if only is not None and stage != only:
                manifest["stages"][stage] = prev_entry or {"enabled": True, "items": []}
                continue
            entry, sk = self.run_stage(stage, prev_entry)
            manifest["stages"][stage] = entry
            errors.extend(entry["errors"])
            skipped += sk
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return RunResult(manifest, errors, skipped, mpath)


def run(config: PipelineConfig, stage: str | None = None) -> RunResult:
    return Pipeline(config).run(stage)
