"""End-to-end orchestration: configuration, corpus indexing, the full
super-resolution pipeline, and comparative evaluation.

The pipeline upscales the low-resolution query, retrieves correlated
corpus images via the inverted-file index, registers them onto the query
frame, trains a query-adaptive dictionary from the registered content, and
synthesizes the output by sparse coding -- falling back to a pre-trained
generic dictionary whenever no usable correlated images exist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import retrieval, sift, sparse
from .image import load_luma, measure_quality
from .interp import bicubic_resize
from .registration import RegistrationResult, register_to_query
from .sparse import DictionaryPair, PatchGrid

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")
MIN_ADAPTIVE_ATOMS = 8
MAX_TRAIN_PAIRS = 20000

# Queries are blur-degraded upscales, so the pipeline extracts features with
# an initial 2x upsampling; the index must be built with the same setting.
PIPELINE_SIFT_PARAMS = sift.SiftParams(upsample_first=True)

# Candidate acceptance: a registration must either be absolutely good or
# clearly improve on the no-shift error, otherwise the candidate would feed
# unrelated content into the adaptive dictionary.
MAX_REGISTRATION_ERROR = 0.35
MIN_ERROR_IMPROVEMENT = 0.85


class ConfigError(ValueError):
    """Bad configuration key, value, or range."""


class InputError(ValueError):
    """Unusable input: missing/unreadable files, empty directories."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RetrievalSettings:
    k: int = 1000
    top_n: int = 8
    min_score: float = 2.0
    scale_percentile: float = 75.0
    member_radius: float = 6.0


@dataclass
class RegistrationSettings:
    kappa: int = 20
    logpolar: bool = True


@dataclass
class SrSettings:
    patch_size: int = 10
    overlap: int = 5
    sparsity: int = 3
    eps: float = 0.1
    dict_size: int = 512
    iterations: int = 10
    seed: int = 0


@dataclass
class PathSettings:
    corpus_dir: str = ""
    vocab_file: str = ""
    index_file: str = ""
    dictionary_file: str = ""


@dataclass
class PipelineConfig:
    upscale: int = 2
    retrieval: RetrievalSettings = field(default_factory=RetrievalSettings)
    registration: RegistrationSettings = field(default_factory=RegistrationSettings)
    sr: SrSettings = field(default_factory=SrSettings)
    paths: PathSettings = field(default_factory=PathSettings)

    def validate(self) -> "PipelineConfig":
        checks = [
            (self.upscale >= 1, "upscale must be >= 1"),
            (self.retrieval.k >= 1, "retrieval.k must be >= 1"),
            (self.retrieval.top_n >= 1, "retrieval.top_n must be >= 1"),
            (self.retrieval.min_score >= 0, "retrieval.min_score must be >= 0"),
            (0 <= self.retrieval.scale_percentile <= 100,
             "retrieval.scale_percentile must be in [0, 100]"),
            (self.retrieval.member_radius > 0, "retrieval.member_radius must be > 0"),
            (self.registration.kappa >= 1, "registration.kappa must be >= 1"),
            (self.sr.patch_size >= 3, "sr.patch_size must be >= 3"),
            (0 <= self.sr.overlap < self.sr.patch_size,
             "sr.overlap must satisfy 0 <= overlap < patch_size"),
            (self.sr.sparsity >= 1, "sr.sparsity must be >= 1"),
            (self.sr.eps >= 0, "sr.eps must be >= 0"),
            (self.sr.dict_size >= 1, "sr.dict_size must be >= 1"),
            (self.sr.iterations >= 0, "sr.iterations must be >= 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


_CONFIG_KEYS: dict[str, type] = {
    "upscale": int,
    "retrieval.k": int,
    "retrieval.top_n": int,
    "retrieval.min_score": float,
    "retrieval.scale_percentile": float,
    "retrieval.member_radius": float,
    "registration.kappa": int,
    "registration.logpolar": bool,
    "sr.patch_size": int,
    "sr.overlap": int,
    "sr.sparsity": int,
    "sr.eps": float,
    "sr.dict_size": int,
    "sr.iterations": int,
    "sr.seed": int,
    "paths.corpus_dir": str,
    "paths.vocab_file": str,
    "paths.index_file": str,
    "paths.dictionary_file": str,
}


def apply_config_entry(config: PipelineConfig, key: str, raw_value: str) -> None:
    """Set one flat ``section.field`` entry, rejecting unknown keys."""
    if key not in _CONFIG_KEYS:
        raise ConfigError(f"unknown configuration key: {key!r}")
    caster = _CONFIG_KEYS[key]
    try:
        value = _parse_bool(raw_value) if caster is bool else caster(raw_value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw_value!r}") from exc
    if "." in key:
        section, attr = key.split(".", 1)
        setattr(getattr(config, section), attr, value)
    else:
        setattr(config, key, value)


def parse_config_text(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def load_config(path=None, overrides: dict[str, str] | None = None) -> PipelineConfig:
    """Defaults, then config-file entries, then explicit overrides."""
    config = PipelineConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        for key, value in parse_config_text(p.read_text()).items():
            apply_config_entry(config, key, value)
    for key, value in (overrides or {}).items():
        apply_config_entry(config, key, value)
    return config.validate()


# ---------------------------------------------------------------------------
# Corpus indexing
# ---------------------------------------------------------------------------


@dataclass
class IndexBuildResult:
    vocab: retrieval.Vocabulary
    index: retrieval.InvertedIndex
    n_indexed: int
    n_skipped: int
    notes: list[str] = field(default_factory=list)


def list_corpus_images(corpus_dir) -> list[Path]:
    root = Path(corpus_dir)
    if not root.is_dir():
        raise InputError(f"corpus directory not found: {root}")
    paths = sorted(p for p in root.iterdir()
                   if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise InputError(f"no images ({', '.join(IMAGE_SUFFIXES)}) in {root}")
    return paths


def build_index(corpus_dir, config: PipelineConfig) -> IndexBuildResult:
    """Extract corpus features, train the vocabulary, build the index."""
    paths = list_corpus_images(corpus_dir)
    named: list[tuple[str, list[sift.SiftDescriptor]]] = []
    skipped: list[tuple[str, str]] = []
    for path in paths:
        try:
            descs = sift.extract(load_luma(path), PIPELINE_SIFT_PARAMS)
        except (OSError, ValueError) as exc:
            skipped.append((str(path), str(exc)))
            continue
        named.append((str(path), descs))
    if not named:
        raise InputError(f"no readable images in {corpus_dir}")

    sample = np.vstack([sift.descriptor_matrix(d) for _, d in named if d])
    if sample.shape[0] == 0:
        raise InputError("corpus produced no descriptors; images may be featureless")
    notes = []
    k = config.retrieval.k
    if sample.shape[0] < k:
        k = sample.shape[0]
        notes.append(f"vocabulary reduced to k={k} (only {sample.shape[0]} descriptors)")
    vocab = retrieval.train_vocabulary(sample, k, seed=config.sr.seed)
    index = retrieval.index_images(
        named, vocab,
        scale_percentile=config.retrieval.scale_percentile,
        member_radius=config.retrieval.member_radius,
        skipped=skipped,
    )
    return IndexBuildResult(vocab=vocab, index=index, n_indexed=len(named),
                            n_skipped=len(skipped), notes=notes)


# ---------------------------------------------------------------------------
# Degradation model and dictionary training
# ---------------------------------------------------------------------------


def degrade(hr_luma, upscale: int) -> np.ndarray:
    """Produce the low-resolution input by bicubic downscaling (1/upscale)."""
    return bicubic_resize(np.asarray(hr_luma, dtype=np.float64), 1.0 / upscale,
                          edge="clamp")


def upscale_bicubic(lr_luma, upscale: int) -> np.ndarray:
    return bicubic_resize(np.asarray(lr_luma, dtype=np.float64), float(upscale),
                          edge="clamp")


def _sr_grid(shape, config: PipelineConfig) -> PatchGrid:
    return PatchGrid.cover(shape, config.sr.patch_size, config.sr.overlap)


def harvest_training_pairs(hr_images, config: PipelineConfig):
    """(HR patch, LR feature) pairs from ground-truth images, degradation-matched."""
    pairs = []
    s = config.upscale
    for hr in hr_images:
        hr = np.asarray(hr, dtype=np.float64)
        lr = degrade(hr, s)
        ulr = upscale_bicubic(lr, s)
        hr_crop = hr[:ulr.shape[0], :ulr.shape[1]]
        grid = _sr_grid(ulr.shape, config)
        pairs.extend(sparse.build_adaptive_pairs(ulr, [hr_crop], s, grid=grid,
                                                 patch_size=config.sr.patch_size))
    return pairs


def train_generic_dictionary(hr_images, config: PipelineConfig,
                             max_pairs: int = MAX_TRAIN_PAIRS,
                             objective_out: list | None = None) -> DictionaryPair:
    """Train the fallback dictionary from a set of ground-truth rasters."""
    pairs = harvest_training_pairs(hr_images, config)
    if not pairs:
        raise InputError("training produced no usable patch pairs")
    rng = np.random.default_rng(config.sr.seed)
    if len(pairs) > max_pairs:
        keep = rng.choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[i] for i in sorted(keep)]
    k = min(config.sr.dict_size, len(pairs) // 5)
    if k < 1:
        raise InputError(f"too few training pairs ({len(pairs)}) for dictionary training")
    return sparse.train_dictionary(
        pairs, k, sparsity=config.sr.sparsity, iterations=config.sr.iterations,
        seed=config.sr.seed, patch_size=config.sr.patch_size,
        upscale=config.upscale, objective_out=objective_out,
    )


def train_generic_dictionary_from_dir(corpus_dir, config: PipelineConfig,
                                      max_pairs: int = MAX_TRAIN_PAIRS) -> DictionaryPair:
    images = [load_luma(p) for p in list_corpus_images(corpus_dir)]
    return train_generic_dictionary(images, config, max_pairs=max_pairs)


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


@dataclass
class CandidateRecord:
    path: str
    registration: RegistrationResult
    used: bool
    note: str = ""


@dataclass
class SrResult:
    output: np.ndarray
    ulr: np.ndarray
    candidates: list[CandidateRecord]
    dictionary_source: str         # "adaptive" or "generic"
    notes: list[str] = field(default_factory=list)

    def provenance_text(self) -> str:
        lines = [f"dictionary: {self.dictionary_source}"]
        for note in self.notes:
            lines.append(f"note: {note}")
        for rec in self.candidates:
            r = rec.registration
            status = "used" if rec.used else f"dropped ({rec.note})"
            lines.append(
                f"candidate {rec.path}: dy={r.dy:.6f} dx={r.dx:.6f} "
                f"rot={math.degrees(r.rotation):.6f} scale={r.scale:.6f} "
                f"error={r.error:.6f} [{status}]"
            )
        return "\n".join(lines)


def run_sr(lr_luma, config: PipelineConfig,
           vocab: retrieval.Vocabulary | None = None,
           index: retrieval.InvertedIndex | None = None,
           generic_pair: DictionaryPair | None = None) -> SrResult:
    """Retrieval-assisted super-resolution of a low-resolution luma raster.

    Degrades gracefully: with no index, no correlated hits, or no reliable
    registrations it falls back to the generic dictionary instead of
    failing.  Raises InputError only when neither adaptive content nor a
    generic dictionary is available.
    """
    lr = np.asarray(lr_luma, dtype=np.float64)
    s = config.upscale
    ulr = upscale_bicubic(lr, s)
    notes: list[str] = []
    candidates: list[CandidateRecord] = []
    registered: list[np.ndarray] = []

    if vocab is None or index is None:
        notes.append("retrieval index unavailable; falling back to generic dictionary")
    else:
        try:
            hits = retrieval.query(
                ulr, index, vocab, top_n=config.retrieval.top_n,
                sift_params=PIPELINE_SIFT_PARAMS,
                scale_percentile=config.retrieval.scale_percentile,
                member_radius=config.retrieval.member_radius,
            )
        except ValueError as exc:
            hits = []
            notes.append(f"retrieval skipped: {exc}")
        chosen = set(retrieval.select_correlated(hits, config.retrieval.min_score))
        if not chosen:
            notes.append("no correlated images above min_score")
        for hit in hits:
            if hit.image_id not in chosen:
                continue
            path = index.images[hit.image_id].path
            try:
                cand = load_luma(path)
            except (OSError, ValueError) as exc:
                candidates.append(CandidateRecord(
                    path=path, used=False, note=f"unreadable: {exc}",
                    registration=RegistrationResult(0, 0, 1.0, 0.0, 1.0,
                                                    reliable=False)))
                continue
            aligned, reg = register_to_query(
                ulr, cand, kappa=config.registration.kappa,
                use_logpolar=config.registration.logpolar,
            )
            acceptable = reg.reliable and (
                reg.error <= MAX_REGISTRATION_ERROR
                or reg.error <= MIN_ERROR_IMPROVEMENT * reg.zero_shift_error
            )
            if acceptable:
                registered.append(aligned)
                candidates.append(CandidateRecord(path=path, registration=reg,
                                                  used=True))
            else:
                candidates.append(CandidateRecord(path=path, registration=reg,
                                                  used=False,
                                                  note="unreliable registration"))

    grid = _sr_grid(ulr.shape, config)
    pairs = sparse.build_adaptive_pairs(ulr, registered, s, grid=grid,
                                        patch_size=config.sr.patch_size)
    dictionary = None
    source = "generic"
    k_adaptive = min(config.sr.dict_size, len(pairs) // 5)
    if pairs and k_adaptive >= MIN_ADAPTIVE_ATOMS:
        dictionary = sparse.train_dictionary(
            pairs, k_adaptive, sparsity=config.sr.sparsity,
            iterations=config.sr.iterations, seed=config.sr.seed,
            patch_size=config.sr.patch_size, upscale=s,
        )
        source = "adaptive"
    elif registered:
        notes.append("too few adaptive pairs; using generic dictionary")

    if dictionary is None:
        if generic_pair is None:
            raise InputError("no correlated images and no generic dictionary available")
        if generic_pair.upscale != s:
            raise InputError(f"generic dictionary was trained for x{generic_pair.upscale}, "
                             f"pipeline is x{s}")
        dictionary = generic_pair

    output = sparse.super_resolve(lr, dictionary, upscale=s, grid=grid,
                                  sparsity=config.sr.sparsity, eps=config.sr.eps)
    return SrResult(output=output, ulr=ulr, candidates=candidates,
                    dictionary_source=source, notes=notes)


# ---------------------------------------------------------------------------
# Comparative evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalRow:
    image: str
    basic_psnr: float
    basic_ssim: float
    proposed_psnr: float
    proposed_ssim: float


def evaluate_image(hr_luma, name: str, config: PipelineConfig,
                   vocab=None, index=None, generic_pair=None) -> EvalRow:
    hr = np.asarray(hr_luma, dtype=np.float64)
    lr = degrade(hr, config.upscale)
    basic = upscale_bicubic(lr, config.upscale)
    truth = hr[:basic.shape[0], :basic.shape[1]]
    basic_q = measure_quality(truth, basic)
    proposed = run_sr(lr, config, vocab=vocab, index=index,
                      generic_pair=generic_pair).output
    proposed_q = measure_quality(truth, proposed)
    return EvalRow(image=name, basic_psnr=basic_q.psnr, basic_ssim=basic_q.ssim,
                   proposed_psnr=proposed_q.psnr, proposed_ssim=proposed_q.ssim)


def run_eval(test_dir, config: PipelineConfig, vocab=None, index=None,
             generic_pair=None) -> list[EvalRow]:
    paths = list_corpus_images(test_dir)
    rows = []
    for path in paths:
        hr = load_luma(path)
        rows.append(evaluate_image(hr, path.name, config, vocab=vocab,
                                   index=index, generic_pair=generic_pair))
    return rows


def eval_means(rows: list[EvalRow]) -> EvalRow:
    if not rows:
        raise InputError("no evaluation rows")
    n = len(rows)
    return EvalRow(
        image="MEAN",
        basic_psnr=sum(r.basic_psnr for r in rows) / n,
        basic_ssim=sum(r.basic_ssim for r in rows) / n,
        proposed_psnr=sum(r.proposed_psnr for r in rows) / n,
        proposed_ssim=sum(r.proposed_ssim for r in rows) / n,
    )


_EVAL_COLUMNS = ("image", "basic_psnr", "basic_ssim", "proposed_psnr", "proposed_ssim")


def format_eval_table(rows: list[EvalRow]) -> str:
    """Aligned text table with BASIC and PROPOSED PSNR/SSIM columns."""
    all_rows = rows + [eval_means(rows)]
    header = ["IMAGE", "BASIC PSNR", "BASIC SSIM", "PROPOSED PSNR", "PROPOSED SSIM"]
    body = [[r.image, f"{r.basic_psnr:.6f}", f"{r.basic_ssim:.6f}",
             f"{r.proposed_psnr:.6f}", f"{r.proposed_ssim:.6f}"] for r in all_rows]
    widths = [max(len(header[c]), *(len(row[c]) for row in body))
              for c in range(len(header))]
    lines = ["  ".join(h.ljust(widths[c]) for c, h in enumerate(header))]
    for row in body:
        lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)))
    return "\n".join(lines)


def eval_rows_to_csv(rows: list[EvalRow]) -> str:
    lines = [",".join(_EVAL_COLUMNS)]
    for r in rows + [eval_means(rows)]:
        lines.append(f"{r.image},{r.basic_psnr:.6f},{r.basic_ssim:.6f},"
                     f"{r.proposed_psnr:.6f},{r.proposed_ssim:.6f}")
    return "\n".join(lines) + "\n"


def parse_eval_csv(text: str) -> list[EvalRow]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != ",".join(_EVAL_COLUMNS):
        raise ValueError("not an evaluation CSV")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"malformed CSV row: {line!r}")
        rows.append(EvalRow(image=parts[0], basic_psnr=float(parts[1]),
                            basic_ssim=float(parts[2]), proposed_psnr=float(parts[3]),
                            proposed_ssim=float(parts[4])))
    return rows
