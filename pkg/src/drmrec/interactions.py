"""Implicit-feedback interaction data: loading, reindexing, splitting.

Interactions are stored as one sorted array of internal item ids per user.
Internal ids are dense integers assigned in first-seen order so that every
external token maps to exactly one row/column of the factor model.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyDatasetError, ParseError

logger = logging.getLogger(__name__)

FORMATS = ("pair-list", "playlist-json")


@dataclass(frozen=True)
class InteractionMatrix:
    """Binary user-item interactions in a fixed internal id space.

    Attributes:
        num_users: number of user rows (M).
        num_items: number of item columns (N).
        user_items: tuple of length M; entry u is a sorted, duplicate-free
            int64 array of the items user u interacted with.
        user_labels: external user tokens, index-aligned, or None.
        item_labels: external item tokens, index-aligned, or None.
    """

    num_users: int
    num_items: int
    user_items: tuple
    user_labels: tuple | None = None
    item_labels: tuple | None = None

    @property
    def num_interactions(self) -> int:
        return int(sum(v.size for v in self.user_items))

    def items_of(self, user: int) -> np.ndarray:
        return self.user_items[user]

    @classmethod
    def from_user_items(cls, num_users, num_items, user_items,
                        user_labels=None, item_labels=None):
        """Build and validate a matrix from per-user item id lists."""
        rows = []
        for u in range(num_users):
            v = np.unique(np.asarray(user_items[u], dtype=np.int64))
            if v.size and (v[0] < 0 or v[-1] >= num_items):
                raise ValueError(f"item id out of range for user {u}")
            rows.append(v)
        if user_labels is not None:
            user_labels = tuple(user_labels)
            if len(user_labels) != num_users:
                raise ValueError("user label count does not match num_users")
        if item_labels is not None:
            item_labels = tuple(item_labels)
            if len(item_labels) != num_items:
                raise ValueError("item label count does not match num_items")
        return cls(num_users, num_items, tuple(rows), user_labels, item_labels)

    def user_label(self, u: int) -> str:
        return self.user_labels[u] if self.user_labels is not None else str(u)

    def item_label(self, i: int) -> str:
        return self.item_labels[i] if self.item_labels is not None else str(i)


@dataclass(frozen=True)
class SplitSpec:
    """Fractions and seed for a per-interaction random split."""

    train_fraction: float = 0.7
    validation_fraction: float = 0.1
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_fraction, self.validation_fraction, self.test_fraction)
        if any(f < 0 for f in fr):
            raise ConfigError(f"split fractions must be nonnegative, got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {fr}")


def _parse_pair_lines(lines, path=None):
    """Yield (user_token, item_token) from pair-list lines.

    Lines are `user<TAB>item`; blank lines and `#` comments are skipped.
    """
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0] or not fields[1]:
            raise ParseError("expected exactly 'user<TAB>item'",
                             path=path, line=lineno)
        yield fields[0], fields[1]


def _index_pairs(pairs):
    """Assign dense internal ids in first-seen order and group by user."""
    user_index: dict = {}
    item_index: dict = {}
    per_user: list = []
    for u_tok, i_tok in pairs:
        u = user_index.setdefault(u_tok, len(user_index))
        if u == len(per_user):
            per_user.append([])
        i = item_index.setdefault(i_tok, len(item_index))
        per_user[u].append(i)
    return user_index, item_index, per_user


def load_interactions(path, fmt="pair-list") -> InteractionMatrix:
    """Load a dataset file into an InteractionMatrix.

    Args:
        path: input file.
        fmt: "pair-list" or "playlist-json".

    Raises:
        ParseError: malformed content (includes file and line context).
        EmptyDatasetError: no interactions at all.
    """
    path = Path(path)
    if fmt == "pair-list":
        with open(path, encoding="utf-8") as fh:
            user_index, item_index, per_user = _index_pairs(
                _parse_pair_lines(fh, path=path))
        if not item_index:
            raise EmptyDatasetError("dataset contains no interactions", path=path)
        return InteractionMatrix.from_user_items(
            len(user_index), len(item_index), per_user,
            user_labels=list(user_index), item_labels=list(item_index))
    if fmt == "playlist-json":
        records = _read_playlist_json(path)
        return convert_playlists(records, source=path)
    raise ConfigError(f"unknown dataset format {fmt!r} (expected one of {FORMATS})")


def _read_playlist_json(path):
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}", path=path) from exc
    if not isinstance(data, list):
        raise ParseError("top-level JSON value must be an array", path=path)
    records = []
    for idx, rec in enumerate(data):
        if not isinstance(rec, dict) or "id" not in rec:
            raise ParseError(f"record {idx} is not an object with an 'id'",
                             path=path)
        if "songs" not in rec or not isinstance(rec["songs"], list):
            raise ParseError(f"record {idx} ({rec.get('id')!r}) has no song list",
                             path=path)
        records.append((str(rec["id"]), [str(s) for s in rec["songs"]]))
    return records


def convert_playlists(records, source=None) -> InteractionMatrix:
    """Treat each playlist as a user and its tracks as that user's items.

    Empty playlists are retained (the user row exists) but flagged with a
    warning, since they can never be sampled during training.
    """
    user_index: dict = {}
    item_index: dict = {}
    per_user: list = []
    for playlist_id, songs in records:
        if playlist_id in user_index:
            raise ParseError(f"duplicate playlist id {playlist_id!r}", path=source)
        user_index[playlist_id] = len(user_index)
        if not songs:
            logger.warning("playlist %r is empty; retained with no interactions",
                           playlist_id)
        row = [item_index.setdefault(s, len(item_index)) for s in songs]
        per_user.append(row)
    total = sum(len(r) for r in per_user)
    if total == 0:
        raise EmptyDatasetError("playlists contain no songs", path=source)
    return InteractionMatrix.from_user_items(
        len(user_index), len(item_index), per_user,
        user_labels=list(user_index), item_labels=list(item_index))


def split_interactions(matrix: InteractionMatrix, spec: SplitSpec):
    """Assign every interaction independently to train/validation/test.

    One uniform draw per interaction, in (user, item) order, so identical
    (input, seed) pairs reproduce the split exactly.

    Returns:
        (train, validation, test) matrices sharing the input's id space.
    """
    rng = np.random.default_rng(spec.seed)
    hi_val = spec.train_fraction + spec.validation_fraction
    parts = ([], [], [])
    for u in range(matrix.num_users):
        items = matrix.user_items[u]
        draws = rng.random(items.size)
        tr = items[draws < spec.train_fraction]
        va = items[(draws >= spec.train_fraction) & (draws < hi_val)]
        te = items[draws >= hi_val]
        parts[0].append(tr)
        parts[1].append(va)
        parts[2].append(te)
    return tuple(
        InteractionMatrix(matrix.num_users, matrix.num_items, tuple(rows),
                          matrix.user_labels, matrix.item_labels)
        for rows in parts)


def eligible_users(train: InteractionMatrix, holdout: InteractionMatrix,
                   min_train: int = 5) -> np.ndarray:
    """Users with at least min_train training items and a nonempty holdout."""
    if train.num_users != holdout.num_users:
        raise ValueError("train and holdout matrices disagree on user count")
    keep = [u for u in range(train.num_users)
            if train.user_items[u].size >= min_train
            and holdout.user_items[u].size >= 1]
    return np.asarray(keep, dtype=np.int64)


def write_pair_list(path, matrix: InteractionMatrix) -> None:
    """Write canonical pair-list form.

    Rows are grouped by user in id order; within a user, items already seen
    in earlier rows come first (in the order they were first emitted), then
    unseen items. That makes first-occurrence order in the file equal the
    emission order, so reloading assigns the same internal ids and rewriting
    the loaded matrix reproduces the file byte for byte.
    """
    emitted: dict = {}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u in range(matrix.num_users):
            u_tok = matrix.user_label(u)
            row = [int(i) for i in matrix.user_items[u]]
            seen = sorted((i for i in row if i in emitted),
                          key=emitted.__getitem__)
            new = [i for i in row if i not in emitted]
            for i in new:
                emitted[i] = len(emitted)
            for i in seen + new:
                fh.write(f"{u_tok}\t{matrix.item_label(i)}\n")


def load_interaction_splits(paths, fmt="pair-list"):
    """Load several pair-list files into one shared internal id space.

    The factor model addresses users and items by dense internal id, so the
    train/validation/test files of one experiment must be indexed jointly.
    Ids are assigned in first-seen order across the files in the order given.
    """
    if fmt != "pair-list":
        raise ConfigError("pre-split datasets must be pair-list files")
    user_index: dict = {}
    item_index: dict = {}
    raw_rows = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            pairs = list(_parse_pair_lines(fh, path=path))
        raw_rows.append(pairs)
        for u_tok, i_tok in pairs:
            user_index.setdefault(u_tok, len(user_index))
            item_index.setdefault(i_tok, len(item_index))
    if not item_index:
        raise EmptyDatasetError("split files contain no interactions",
                                path=paths[0])
    num_users, num_items = len(user_index), len(item_index)
    user_labels, item_labels = list(user_index), list(item_index)
    out = []
    for pairs in raw_rows:
        rows = [[] for _ in range(num_users)]
        for u_tok, i_tok in pairs:
            rows[user_index[u_tok]].append(item_index[i_tok])
        out.append(InteractionMatrix.from_user_items(
            num_users, num_items, rows,
            user_labels=user_labels, item_labels=item_labels))
    return out


def persist_split(out_dir, train, validation, test, spec: SplitSpec) -> dict:
    """Write the three split files plus a manifest of seed and fractions."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = {"train": train, "validation": validation, "test": test}
    for name, part in names.items():
        write_pair_list(out_dir / f"{name}.tsv", part)
    manifest = {
        "seed": spec.seed,
        "train_fraction": spec.train_fraction,
        "validation_fraction": spec.validation_fraction,
        "test_fraction": spec.test_fraction,
        "num_users": train.num_users,
        "num_items": train.num_items,
        "interactions": {name: part.num_interactions
                         for name, part in names.items()},
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
