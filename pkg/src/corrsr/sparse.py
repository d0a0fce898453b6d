"""Sparse-representation super-resolution with coupled dictionaries.

A high-resolution patch dictionary and a low-resolution feature dictionary
share sparse codes: each upscaled-input patch is reduced to derivative
features, coded greedily against the feature dictionary (orthogonal
matching pursuit), and the same code synthesizes the output patch from the
high-resolution dictionary.  The pair is trained jointly, K-SVD style, on
concatenated patch/feature vectors.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .interp import bicubic_resize

FEATURE_OP_ID = "grad4.v1"
_FIRST_DERIV = np.array([-1.0, 0.0, 1.0])
_SECOND_DERIV = np.array([1.0, 0.0, -2.0, 0.0, 1.0])
_DICT_MAGIC = b"CSRD"
_FORMAT_VERSION = 1
_NORM_TOL = 1e-6


@dataclass
class DictionaryPair:
    """Coupled dictionaries: dh (n_h x K) patch atoms, dl (n_l x K) feature atoms."""

    dh: np.ndarray
    dl: np.ndarray
    patch_size: int
    upscale: int
    feature_op_id: str = FEATURE_OP_ID

    @property
    def k(self) -> int:
        return self.dh.shape[1]


@dataclass
class SparseCode:
    support: np.ndarray        # atom indices, unique
    coefficients: np.ndarray   # one value per support entry


@dataclass
class PatchGrid:
    """Patch origins covering a raster, last row/column snapped to the border."""

    patch_size: int
    overlap: int
    offsets: list[tuple[int, int]]

    @classmethod
    def cover(cls, shape, patch_size: int, overlap: int) -> "PatchGrid":
        if not (0 <= overlap < patch_size):
            raise ValueError(f"overlap must satisfy 0 <= overlap < patch_size, "
                             f"got {overlap} vs {patch_size}")
        h, w = shape[:2]
        if patch_size > min(h, w):
            raise ValueError(f"patch size {patch_size} exceeds raster {shape}")
        step = patch_size - overlap

        def axis_positions(extent):
            pos = list(range(0, extent - patch_size + 1, step))
            if pos[-1] != extent - patch_size:
                pos.append(extent - patch_size)
            return pos

        offsets = [(y, x) for y in axis_positions(h) for x in axis_positions(w)]
        return cls(patch_size=patch_size, overlap=overlap, offsets=offsets)


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------


def extract_lr_features(ulr_patch) -> np.ndarray:
    """Four derivative-filter responses over a patch, flattened.

    Horizontal/vertical first derivatives [-1, 0, 1] and second derivatives
    [1, 0, -2, 0, 1], reflected at the patch border; dimension is
    4 * patch_size**2.  Mean-free by construction.
    """
    patch = np.asarray(ulr_patch, dtype=np.float64)
    if patch.ndim != 2:
        raise ValueError("patch must be 2-D")
    if min(patch.shape) < 3:
        raise ValueError(f"patch {patch.shape} smaller than filter support")
    responses = [
        ndimage.correlate1d(patch, _FIRST_DERIV, axis=1, mode="reflect"),
        ndimage.correlate1d(patch, _FIRST_DERIV, axis=0, mode="reflect"),
        ndimage.correlate1d(patch, _SECOND_DERIV, axis=1, mode="reflect"),
        ndimage.correlate1d(patch, _SECOND_DERIV, axis=0, mode="reflect"),
    ]
    return np.concatenate([r.ravel() for r in responses])


# ---------------------------------------------------------------------------
# Dictionary normalization and persistence
# ---------------------------------------------------------------------------


def normalize_dictionary(pair: DictionaryPair) -> DictionaryPair:
    """Scale each dl column to unit norm, its dh partner by the same factor.

    Zero feature columns cannot be coded; they are removed from both
    dictionaries with a warning.
    """
    norms = np.linalg.norm(pair.dl, axis=0)
    keep = norms > 1e-12
    if not np.all(keep):
        warnings.warn(f"removing {int(np.sum(~keep))} zero dictionary column(s)")
    dl = pair.dl[:, keep] / norms[keep]
    dh = pair.dh[:, keep] / norms[keep]
    return DictionaryPair(dh=dh, dl=dl, patch_size=pair.patch_size,
                          upscale=pair.upscale, feature_op_id=pair.feature_op_id)


def _require_normalized(dl: np.ndarray) -> None:
    norms = np.linalg.norm(dl, axis=0)
    if np.any(np.abs(norms - 1.0) > _NORM_TOL):
        raise ValueError("feature dictionary columns are not unit-normalized; "
                         "run normalize_dictionary first")


def save_dictionary(path, pair: DictionaryPair) -> None:
    """Header then Dh and Dl as little-endian float64, column-major."""
    with open(path, "wb") as fh:
        fh.write(_DICT_MAGIC)
        fh.write(struct.pack("<IIIIII", _FORMAT_VERSION, pair.k,
                             pair.dh.shape[0], pair.dl.shape[0],
                             pair.patch_size, pair.upscale))
        raw = pair.feature_op_id.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)) + raw)
        fh.write(np.asfortranarray(pair.dh, dtype="<f8").tobytes(order="F"))
        fh.write(np.asfortranarray(pair.dl, dtype="<f8").tobytes(order="F"))


def load_dictionary(path) -> DictionaryPair:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _DICT_MAGIC:
        raise ValueError(f"{path}: not a dictionary file")
    version, k, n_h, n_l, patch_size, upscale = struct.unpack_from("<IIIIII", blob, 4)
    if version != _FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported dictionary version {version}")
    pos = 28
    (id_len,) = struct.unpack_from("<H", blob, pos)
    pos += 2
    feature_op_id = blob[pos:pos + id_len].decode("utf-8")
    pos += id_len
    dh_bytes = n_h * k * 8
    dh = np.frombuffer(blob[pos:pos + dh_bytes], dtype="<f8").reshape((n_h, k), order="F")
    pos += dh_bytes
    dl = np.frombuffer(blob[pos:pos + n_l * k * 8], dtype="<f8").reshape((n_l, k), order="F")
    return DictionaryPair(dh=dh.copy(), dl=dl.copy(), patch_size=patch_size,
                          upscale=upscale, feature_op_id=feature_op_id)


# ---------------------------------------------------------------------------
# Orthogonal matching pursuit
# ---------------------------------------------------------------------------


def _ls_refit(dictionary: np.ndarray, support: list[int], target: np.ndarray):
    sub = dictionary[:, support]
    gram = sub.T @ sub
    rhs = sub.T @ target
    try:
        coef = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        coef = np.linalg.lstsq(sub, target, rcond=None)[0]
    return coef, target - sub @ coef


def omp_batch(dictionary: np.ndarray, targets: np.ndarray, sparsity: int,
              eps: float) -> list[SparseCode]:
    """OMP over target columns: greedy atom selection with LS refit per step.

    Stops per signal at `sparsity` atoms or when the residual norm falls to
    eps times the target norm.  Zero targets yield empty codes.
    """
    dic = np.asarray(dictionary, dtype=np.float64)
    tgt = np.asarray(targets, dtype=np.float64)
    if tgt.ndim != 2 or tgt.shape[0] != dic.shape[0]:
        raise ValueError(f"targets {tgt.shape} incompatible with dictionary {dic.shape}")
    n = tgt.shape[1]
    norms0 = np.linalg.norm(tgt, axis=0)
    supports: list[list[int]] = [[] for _ in range(n)]
    coefs: list[np.ndarray] = [np.zeros(0) for _ in range(n)]
    residual = tgt.copy()
    active = norms0 > 0.0

    for _ in range(sparsity):
        if not np.any(active):
            break
        corr = dic.T @ residual[:, active]
        active_ids = np.flatnonzero(active)
        for col, sig in enumerate(active_ids):
            c = np.abs(corr[:, col])
            c[supports[sig]] = -1.0
            atom = int(np.argmax(c))
            if c[atom] <= 0.0:
                active[sig] = False
                continue
            supports[sig].append(atom)
            coef, res = _ls_refit(dic, supports[sig], tgt[:, sig])
            coefs[sig] = coef
            residual[:, sig] = res
            if np.linalg.norm(res) <= eps * norms0[sig]:
                active[sig] = False

    return [SparseCode(support=np.array(supports[i], dtype=np.int64),
                       coefficients=np.asarray(coefs[i], dtype=np.float64))
            for i in range(n)]


def sparse_code(feature, dl: np.ndarray, sparsity: int = 3,
                eps: float = 0.1) -> SparseCode:
    """OMP code of a single feature vector against a normalized dictionary."""
    _require_normalized(np.asarray(dl, dtype=np.float64))
    vec = np.asarray(feature, dtype=np.float64).reshape(-1, 1)
    return omp_batch(dl, vec, sparsity, eps)[0]


def code_residual(code: SparseCode, dictionary: np.ndarray, target) -> float:
    """L2 norm of target minus its reconstruction."""
    recon = dictionary[:, code.support] @ code.coefficients if code.support.size else 0.0
    return float(np.linalg.norm(np.asarray(target, dtype=np.float64) - recon))


def synthesize_hr_patch(code: SparseCode, dh: np.ndarray, ulr_patch_mean: float,
                        patch_size: int | None = None) -> np.ndarray:
    """Dh x code plus the upscaled-input patch mean, as a square patch."""
    n_h = dh.shape[0]
    if patch_size is None:
        patch_size = int(round(math.sqrt(n_h)))
    if patch_size * patch_size != n_h:
        raise ValueError(f"dh rows {n_h} do not form a {patch_size}x{patch_size} patch")
    flat = np.full(n_h, float(ulr_patch_mean))
    if code.support.size:
        flat = flat + dh[:, code.support] @ code.coefficients
    return flat.reshape(patch_size, patch_size)


# ---------------------------------------------------------------------------
# Joint dictionary training (K-SVD style)
# ---------------------------------------------------------------------------


def _stack_pairs(patch_pairs):
    hrs, feats = [], []
    for hr, feat in patch_pairs:
        hrs.append(np.asarray(hr, dtype=np.float64).ravel())
        feats.append(np.asarray(feat, dtype=np.float64).ravel())
    return np.stack(hrs, axis=1), np.stack(feats, axis=1)


def _train_once(z: np.ndarray, k: int, sparsity: int, iterations: int, seed: int):
    """One K-SVD-style run; returns (dictionary, objective trajectory)."""
    n = z.shape[1]
    rng = np.random.default_rng(seed)
    usable = np.flatnonzero(np.linalg.norm(z, axis=0) > 1e-12)
    if usable.size < k:
        raise ValueError("degenerate training set: too few nonzero pairs")
    chosen = rng.choice(usable, size=k, replace=False)
    dico = z[:, chosen].copy()
    dico /= np.linalg.norm(dico, axis=0)

    history: list[float] = []
    prev_supports: list[list[int]] | None = None
    x = np.zeros((k, n))
    for _ in range(iterations):
        codes = omp_batch(dico, z, sparsity, eps=1e-12)
        x[:] = 0.0
        for i, code in enumerate(codes):
            support = code.support.tolist()
            coef = code.coefficients
            if prev_supports is not None and prev_supports[i]:
                old_coef, old_res = _ls_refit(dico, prev_supports[i], z[:, i])
                new_res = code_residual(code, dico, z[:, i])
                if np.linalg.norm(old_res) < new_res:
                    support, coef = prev_supports[i], old_coef
            x[support, i] = coef

        residual = z - dico @ x
        unused = []
        for j in range(k):
            omega = np.flatnonzero(x[j])
            if omega.size == 0:
                unused.append(j)
                continue
            block = residual[:, omega] + np.outer(dico[:, j], x[j, omega])
            u, s, vt = np.linalg.svd(block, full_matrices=False)
            atom = u[:, 0]
            if atom[np.argmax(np.abs(atom))] < 0:
                atom = -atom
                row = -s[0] * vt[0]
            else:
                row = s[0] * vt[0]
            dico[:, j] = atom
            x[j, omega] = row
            residual[:, omega] = block - np.outer(atom, row)

        if unused:
            worst = np.argsort(-np.linalg.norm(residual, axis=0), kind="stable")
            for slot, j in enumerate(unused):
                col = z[:, worst[slot % n]]
                norm = np.linalg.norm(col)
                dico[:, j] = col / norm if norm > 1e-12 else dico[:, j]

        prev_supports = [np.flatnonzero(x[:, i]).tolist() for i in range(n)]
        history.append(float(np.linalg.norm(z - dico @ x) / math.sqrt(n)))

    return dico, history


def train_dictionary(patch_pairs, k: int, sparsity: int = 3, iterations: int = 10,
                     seed: int = 0, patch_size: int | None = None, upscale: int = 1,
                     restarts: int = 1,
                     objective_out: list | None = None) -> DictionaryPair:
    """Jointly train coupled dictionaries on (HR patch, LR feature) pairs.

    Patch and feature vectors are weighted by 1/sqrt(dim) and concatenated,
    then trained by alternating OMP sparse coding and per-atom rank-1
    dictionary updates.  The RMS residual recorded per iteration in
    objective_out is non-increasing: each signal keeps its previous support
    (least-squares refit) whenever fresh OMP codes it worse.

    The alternation is greedy and can stall in a poor local minimum on small
    synthetic problems; restarts > 1 runs that many seeded initializations
    (seed, seed+1, ...) and keeps the lowest final objective.  Deterministic
    for fixed arguments either way.
    """
    hr_mat, feat_mat = _stack_pairs(patch_pairs)
    n_h, n = hr_mat.shape
    n_l = feat_mat.shape[0]
    if n < 5 * k:
        raise ValueError(f"need at least {5 * k} training pairs for k={k}, got {n}")
    if patch_size is None:
        root = int(round(math.sqrt(n_h)))
        patch_size = root if root * root == n_h else 0

    z = np.vstack([hr_mat / math.sqrt(n_h), feat_mat / math.sqrt(n_l)])
    distinct = np.unique(z.round(decimals=12), axis=1).shape[1]
    if distinct < 2:
        raise ValueError("degenerate training set: all pairs identical")

    best = None
    for attempt in range(max(1, restarts)):
        dico, history = _train_once(z, k, sparsity, iterations, seed + attempt)
        final = history[-1] if history else 0.0
        if best is None or final < best[0]:
            best = (final, dico, history)
    _, dico, history = best
    if objective_out is not None:
        objective_out.extend(history)

    dh = dico[:n_h] * math.sqrt(n_h)
    dl = dico[n_h:] * math.sqrt(n_l)
    pair = DictionaryPair(dh=dh, dl=dl, patch_size=patch_size, upscale=upscale)
    return normalize_dictionary(pair)


# ---------------------------------------------------------------------------
# Super-resolution inference
# ---------------------------------------------------------------------------


def super_resolve(lr, pair: DictionaryPair, upscale: int | None = None,
                  grid: PatchGrid | None = None, sparsity: int = 3,
                  eps: float = 0.1) -> np.ndarray:
    """Reconstruct a high-resolution raster from a low-resolution input.

    Bicubically upscales the input, sparse-codes derivative features of
    each grid patch, synthesizes the patch from the coupled dictionary, and
    averages overlapping patches.  Pixels no patch covers keep their
    bicubic value; output is clipped to [0, 255].
    """
    arr = np.asarray(lr, dtype=np.float64)
    if upscale is None:
        upscale = pair.upscale
    if upscale != pair.upscale:
        raise ValueError(f"upscale {upscale} does not match dictionary ({pair.upscale})")
    _require_normalized(pair.dl)

    ulr = bicubic_resize(arr, float(upscale), edge="clamp")
    p = pair.patch_size
    if pair.dh.shape[0] != p * p:
        raise ValueError("dictionary patch geometry is inconsistent")
    if grid is None:
        grid = PatchGrid.cover(ulr.shape, p, overlap=p // 2)
    if grid.patch_size != p:
        raise ValueError(f"grid patch size {grid.patch_size} does not match "
                         f"dictionary ({p})")

    feats = np.empty((pair.dl.shape[0], len(grid.offsets)))
    means = np.empty(len(grid.offsets))
    for i, (y, x) in enumerate(grid.offsets):
        patch = ulr[y:y + p, x:x + p]
        feats[:, i] = extract_lr_features(patch)
        means[i] = patch.mean()
    if feats.shape[0] != pair.dl.shape[0]:
        raise ValueError("feature dimension does not match dictionary")

    codes = omp_batch(pair.dl, feats, sparsity, eps)
    acc = np.zeros_like(ulr)
    cnt = np.zeros_like(ulr)
    for i, (y, x) in enumerate(grid.offsets):
        patch = synthesize_hr_patch(codes[i], pair.dh, means[i], p)
        acc[y:y + p, x:x + p] += patch
        cnt[y:y + p, x:x + p] += 1.0
    covered = cnt > 0
    out = ulr.copy()
    out[covered] = acc[covered] / cnt[covered]
    return np.clip(out, 0.0, 255.0)


def build_adaptive_pairs(ulr, registered_candidates, upscale: int,
                         grid: PatchGrid | None = None, patch_size: int = 10,
                         var_thresh: float = 1.0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Harvest (HR patch, LR feature) pairs from registered candidates.

    Each registered candidate is treated as aligned high-resolution content
    for the upscaled query: candidate patches (mean-removed) pair with
    derivative features of the co-located query patches.  Patches whose
    query side has variance below var_thresh are skipped.  Returns an empty
    list when no candidates are given.
    """
    base = np.asarray(ulr, dtype=np.float64)
    pairs: list[tuple[np.ndarray, np.ndarray]] = []
    if not registered_candidates:
        return pairs
    if grid is None:
        grid = PatchGrid.cover(base.shape, patch_size, overlap=patch_size // 2)
    p = grid.patch_size
    for cand in registered_candidates:
        cand = np.asarray(cand, dtype=np.float64)
        if cand.shape != base.shape:
            raise ValueError(f"candidate {cand.shape} not aligned to query frame "
                             f"{base.shape}")
        for y, x in grid.offsets:
            query_patch = base[y:y + p, x:x + p]
            if query_patch.var() < var_thresh:
                continue
            hr_patch = cand[y:y + p, x:x + p]
            pairs.append((hr_patch - hr_patch.mean(),
                          extract_lr_features(query_patch)))
    return pairs
