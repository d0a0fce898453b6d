"""Correlated-image retrieval over a visual-word inverted-file index.

Descriptors are quantized against a k-means vocabulary.  Each large-scale
descriptor anchors a bundled set of nearby smaller-scale descriptors,
tagged with the quadrant (sector 0..3) they occupy around the anchor; the
index stores one posting per bundled set under the anchor's visual word.
Query scoring multiplies shared-member word counts by a quadrant-agreement
weight.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sift
from .image import load_luma
from .sift import SiftDescriptor

DESCRIPTOR_DIM = 128
MAX_BUNDLE_MEMBERS = 128
N_SECTORS = 4
GEOMETRY_WEIGHT_FLOOR = 0.25
DEFAULT_SCALE_PERCENTILE = 75.0
DEFAULT_MEMBER_RADIUS = 6.0

_VOCAB_MAGIC = b"CSRV"
_INDEX_MAGIC = b"CSRI"
_FORMAT_VERSION = 1


@dataclass
class Vocabulary:
    """k visual words as rows of a (k, 128) centroid matrix."""

    centroids: np.ndarray

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


@dataclass
class BundledSet:
    """Anchor visual word plus member words and their quadrant sectors."""

    anchor: int
    members: np.ndarray      # member visual-word ids, int64
    sectors: np.ndarray      # quadrant index per member, 0..3


@dataclass
class ImageEntry:
    path: str
    n_descriptors: int
    n_sets: int


@dataclass
class RetrievalHit:
    image_id: int
    score: float
    matched_sets: int


@dataclass
class InvertedIndex:
    """Visual word -> postings of (image id, bundled set), sorted by image id."""

    postings: dict[int, list[tuple[int, BundledSet]]]
    images: list[ImageEntry]
    k: int
    skipped: list[tuple[str, str]] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------


def train_vocabulary(descriptor_sample, k: int, seed: int = 0,
                     max_iterations: int = 25) -> Vocabulary:
    """Seeded k-means over descriptor vectors.

    Initialization picks k distinct sample rows; empty clusters are reseeded
    from the points currently worst represented.  Deterministic for a fixed
    seed and sample order.
    """
    data = np.asarray(descriptor_sample, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != DESCRIPTOR_DIM:
        raise ValueError(f"expected (n, {DESCRIPTOR_DIM}) sample, got {data.shape}")
    n = data.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if n < k:
        raise ValueError(f"sample size {n} smaller than k={k}")

    rng = np.random.default_rng(seed)
    centroids = data[rng.choice(n, size=k, replace=False)].copy()

    for _ in range(max_iterations):
        dists = _squared_distances(data, centroids)
        labels = np.argmin(dists, axis=1)
        new_centroids = centroids.copy()
        for j in range(k):
            mask = labels == j
            if np.any(mask):
                new_centroids[j] = data[mask].mean(axis=0)
        # Reseed empty clusters from the worst-represented points.
        empty = np.flatnonzero(np.bincount(labels, minlength=k) == 0)
        if empty.size:
            nearest = dists[np.arange(n), labels]
            worst = np.argsort(-nearest, kind="stable")[:empty.size]
            new_centroids[empty] = data[worst]
        if np.array_equal(new_centroids, centroids):
            break
        centroids = new_centroids
    return Vocabulary(centroids=centroids)


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    p2 = np.sum(points ** 2, axis=1)[:, None]
    c2 = np.sum(centroids ** 2, axis=1)[None, :]
    return np.maximum(p2 - 2.0 * points @ centroids.T + c2, 0.0)


def quantize(desc, vocab: Vocabulary) -> int:
    """Nearest centroid id by Euclidean distance; ties go to the lowest id."""
    vec = desc.vector if isinstance(desc, SiftDescriptor) else np.asarray(desc, dtype=np.float64)
    diffs = vocab.centroids - vec[None, :]
    # Direct per-centroid sums keep exact ties exact; argmin takes the first.
    return int(np.argmin(np.einsum("ij,ij->i", diffs, diffs)))


def quantize_batch(vectors: np.ndarray, vocab: Vocabulary, chunk: int = 2048) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.size == 0:
        return np.zeros(0, dtype=np.int64)
    out = np.empty(vectors.shape[0], dtype=np.int64)
    for start in range(0, vectors.shape[0], chunk):
        block = vectors[start:start + chunk]
        out[start:start + chunk] = np.argmin(_squared_distances(block, vocab.centroids), axis=1)
    return out


def save_vocabulary(path, vocab: Vocabulary) -> None:
    """Header (magic, version, k, dim) then k x 128 little-endian float32."""
    with open(path, "wb") as fh:
        fh.write(_VOCAB_MAGIC)
        fh.write(struct.pack("<III", _FORMAT_VERSION, vocab.k, DESCRIPTOR_DIM))
        fh.write(vocab.centroids.astype("<f4").tobytes())


def load_vocabulary(path) -> Vocabulary:
    blob = Path(path).read_bytes()
    if blob[:4] != _VOCAB_MAGIC:
        raise ValueError(f"{path}: not a vocabulary file")
    version, k, dim = struct.unpack("<III", blob[4:16])
    if version != _FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported vocabulary version {version}")
    if dim != DESCRIPTOR_DIM:
        raise ValueError(f"{path}: unexpected descriptor dimension {dim}")
    expect = k * dim * 4
    body = blob[16:16 + expect]
    if len(body) != expect:
        raise ValueError(f"{path}: truncated vocabulary data")
    cents = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(k, dim)
    return Vocabulary(centroids=cents)


# ---------------------------------------------------------------------------
# Bundling
# ---------------------------------------------------------------------------


def _sector_of(dx: float, dy: float) -> int:
    """Quadrant around the anchor: 0=NE, 1=NW, 2=SW, 3=SE (y grows downward)."""
    north = dy < 0
    east = dx >= 0
    if north:
        return 0 if east else 1
    return 3 if east else 2


def bundle(descs: list[SiftDescriptor], vocab: Vocabulary,
           scale_percentile: float = DEFAULT_SCALE_PERCENTILE,
           member_radius: float = DEFAULT_MEMBER_RADIUS) -> list[BundledSet]:
    """Group descriptors into bundled sets keyed by large-scale anchors.

    A descriptor whose scale reaches the given percentile of the image's
    descriptor scales anchors a set; smaller-scale descriptors within
    member_radius * anchor.scale of the anchor join it (capped at 128,
    keeping the largest scales).  Descriptors captured by no set are
    indexed as singleton sets.
    """
    if not descs:
        return []
    words = quantize_batch(sift.descriptor_matrix(descs), vocab)
    scales = np.array([d.scale for d in descs])
    xs = np.array([d.x for d in descs])
    ys = np.array([d.y for d in descs])
    thresh = np.percentile(scales, scale_percentile)
    anchor_ids = np.flatnonzero(scales >= thresh)

    sets: list[BundledSet] = []
    member_of_any = np.zeros(len(descs), dtype=bool)
    for a in anchor_ids:
        radius = member_radius * scales[a]
        dist2 = (xs - xs[a]) ** 2 + (ys - ys[a]) ** 2
        cand = np.flatnonzero((dist2 <= radius * radius) & (scales < scales[a]))
        if cand.size > MAX_BUNDLE_MEMBERS:
            order = np.argsort(-scales[cand], kind="stable")
            cand = cand[order[:MAX_BUNDLE_MEMBERS]]
        member_of_any[cand] = True
        sectors = np.array([_sector_of(xs[m] - xs[a], ys[m] - ys[a]) for m in cand],
                           dtype=np.int64)
        sets.append(BundledSet(anchor=int(words[a]),
                               members=words[cand].astype(np.int64),
                               sectors=sectors))
    member_of_any[anchor_ids] = True
    for i in np.flatnonzero(~member_of_any):
        sets.append(BundledSet(anchor=int(words[i]),
                               members=np.zeros(0, dtype=np.int64),
                               sectors=np.zeros(0, dtype=np.int64)))
    return sets


# ---------------------------------------------------------------------------
# Index construction and query
# ---------------------------------------------------------------------------


def index_images(named_descriptors, vocab: Vocabulary,
                 scale_percentile: float = DEFAULT_SCALE_PERCENTILE,
                 member_radius: float = DEFAULT_MEMBER_RADIUS,
                 skipped: list[tuple[str, str]] | None = None) -> InvertedIndex:
    """Build an index from (name, descriptor list) pairs."""
    postings: dict[int, list[tuple[int, BundledSet]]] = {}
    images: list[ImageEntry] = []
    for image_id, (name, descs) in enumerate(named_descriptors):
        sets = bundle(descs, vocab, scale_percentile, member_radius)
        images.append(ImageEntry(path=str(name), n_descriptors=len(descs),
                                 n_sets=len(sets)))
        for s in sets:
            postings.setdefault(s.anchor, []).append((image_id, s))
    for plist in postings.values():
        plist.sort(key=lambda entry: entry[0])
    return InvertedIndex(postings=postings, images=images, k=vocab.k,
                         skipped=list(skipped or []))


def index_corpus(image_paths, vocab: Vocabulary,
                 sift_params: sift.SiftParams | None = None,
                 scale_percentile: float = DEFAULT_SCALE_PERCENTILE,
                 member_radius: float = DEFAULT_MEMBER_RADIUS) -> InvertedIndex:
    """Extract, bundle, and index a corpus of image files.

    Unreadable or undersized images are skipped and recorded in the index's
    skip manifest rather than aborting the build.
    """
    named = []
    skipped: list[tuple[str, str]] = []
    for path in image_paths:
        try:
            luma = load_luma(path)
            descs = sift.extract(luma, sift_params)
        except (OSError, ValueError) as exc:
            skipped.append((str(path), str(exc)))
            continue
        named.append((str(path), descs))
    return index_images(named, vocab, scale_percentile, member_radius, skipped)


def _score_pair(query_set: BundledSet, cand_set: BundledSet) -> float:
    """Shared-member word count scaled by quadrant agreement (floor 0.25)."""
    if query_set.members.size == 0 or cand_set.members.size == 0:
        return 0.0
    q_words, c_words = query_set.members, cand_set.members
    shared_words = np.intersect1d(q_words, c_words)
    if shared_words.size == 0:
        return 0.0
    matched = 0
    sector_hits = 0
    for w in shared_words:
        q_sec = sorted(query_set.sectors[q_words == w].tolist())
        c_sec = sorted(cand_set.sectors[c_words == w].tolist())
        matched += min(len(q_sec), len(c_sec))
        # Max-agreement pairing: count multiset overlap of sector labels.
        ci = 0
        for s in q_sec:
            while ci < len(c_sec) and c_sec[ci] < s:
                ci += 1
            if ci < len(c_sec) and c_sec[ci] == s:
                sector_hits += 1
                ci += 1
    weight = max(GEOMETRY_WEIGHT_FLOOR, sector_hits / matched)
    return matched * weight


def query(img, index: InvertedIndex, vocab: Vocabulary, top_n: int = 10,
          sift_params: sift.SiftParams | None = None,
          scale_percentile: float = DEFAULT_SCALE_PERCENTILE,
          member_radius: float = DEFAULT_MEMBER_RADIUS) -> list[RetrievalHit]:
    """Score indexed images against a query raster.

    Each query bundled set is matched against candidate sets sharing its
    anchor word; image scores sum the per-set scores.  Returns up to top_n
    hits, descending score, ties broken by ascending image id.
    """
    descs = sift.extract(np.asarray(img, dtype=np.float64), sift_params)
    query_sets = bundle(descs, vocab, scale_percentile, member_radius)
    return query_sets_against(query_sets, index, top_n)


def query_sets_against(query_sets: list[BundledSet], index: InvertedIndex,
                       top_n: int = 10) -> list[RetrievalHit]:
    scores: dict[int, float] = {}
    matched: dict[int, int] = {}
    for qs in query_sets:
        for image_id, cs in index.postings.get(qs.anchor, []):
            s = _score_pair(qs, cs)
            if s > 0.0:
                scores[image_id] = scores.get(image_id, 0.0) + s
                matched[image_id] = matched.get(image_id, 0) + 1
    hits = [RetrievalHit(image_id=i, score=scores[i], matched_sets=matched[i])
            for i in scores]
    hits.sort(key=lambda h: (-h.score, h.image_id))
    return hits[:top_n]


def select_correlated(hits: list[RetrievalHit], min_score: float) -> list[int]:
    """Image ids whose retrieval score reaches min_score; may be empty."""
    return [h.image_id for h in hits if h.score >= min_score]


# ---------------------------------------------------------------------------
# Index persistence (little-endian fixed-width integers)
# ---------------------------------------------------------------------------


def save_index(path, index: InvertedIndex) -> None:
    """Binary layout: header, image table, skip manifest, per-word blocks.

    header:   magic 'CSRI', u32 version, u32 k, u32 n_images, u32 n_skipped,
              u32 n_words
    image:    u16 path length + utf-8 path, u32 n_descriptors, u32 n_sets
    skipped:  u16 + utf-8 path, u16 + utf-8 reason
    word:     u32 word id, u32 n_postings, then per posting:
              u32 image id, u16 member count, members as (u32 word, u8 sector)
    """
    words = sorted(index.postings)
    with open(path, "wb") as fh:
        fh.write(_INDEX_MAGIC)
        fh.write(struct.pack("<IIIII", _FORMAT_VERSION, index.k,
                             len(index.images), len(index.skipped), len(words)))
        for entry in index.images:
            raw = entry.path.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<II", entry.n_descriptors, entry.n_sets))
        for spath, reason in index.skipped:
            for text in (spath, reason):
                raw = text.encode("utf-8")[:65535]
                fh.write(struct.pack("<H", len(raw)) + raw)
        for w in words:
            plist = index.postings[w]
            fh.write(struct.pack("<II", w, len(plist)))
            for image_id, bset in plist:
                fh.write(struct.pack("<IH", image_id, bset.members.size))
                for m, s in zip(bset.members.tolist(), bset.sectors.tolist()):
                    fh.write(struct.pack("<IB", m, s))


def load_index(path) -> InvertedIndex:
    blob = Path(path).read_bytes()
    if blob[:4] != _INDEX_MAGIC:
        raise ValueError(f"{path}: not an index file")
    pos = 4
    version, k, n_images, n_skipped, n_words = struct.unpack_from("<IIIII", blob, pos)
    pos += 20
    if version != _FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported index version {version}")

    def read_str():
        nonlocal pos
        (length,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        text = blob[pos:pos + length].decode("utf-8")
        pos += length
        return text

    images = []
    for _ in range(n_images):
        ipath = read_str()
        n_desc, n_sets = struct.unpack_from("<II", blob, pos)
        pos += 8
        images.append(ImageEntry(path=ipath, n_descriptors=n_desc, n_sets=n_sets))
    skipped = [(read_str(), read_str()) for _ in range(n_skipped)]
    postings: dict[int, list[tuple[int, BundledSet]]] = {}
    for _ in range(n_words):
        w, n_post = struct.unpack_from("<II", blob, pos)
        pos += 8
        plist = []
        for _ in range(n_post):
            image_id, n_members = struct.unpack_from("<IH", blob, pos)
            pos += 6
            members = np.empty(n_members, dtype=np.int64)
            sectors = np.empty(n_members, dtype=np.int64)
            for i in range(n_members):
                m, s = struct.unpack_from("<IB", blob, pos)
                pos += 5
                members[i] = m
                sectors[i] = s
            plist.append((image_id, BundledSet(anchor=w, members=members,
                                               sectors=sectors)))
        postings[w] = plist
    return InvertedIndex(postings=postings, images=images, k=k, skipped=skipped)
