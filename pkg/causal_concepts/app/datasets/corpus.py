import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np
import pandas as pd

from app.datasets.factors import FactorSpace
from app.datasets.render import render_image
from app.errors import ConfigurationError

logger = logging.getLogger(__name__)

IMAGES_FILE = "images.bin"
HEADER_FILE = "images.json"
FACTORS_FILE = "factors.json"
LABELS_FILE = "labels.csv"


@dataclass
class Corpus:
    """
    A rendered corpus: every sample of a factor space in corpus order.

    Attributes:
        space (FactorSpace): The generating factor space.
        images (np.ndarray): ``N x H x W x C`` float32 intensities in [0, 1].
        factor_indices (np.ndarray): ``N x m`` grid indices.
        u (np.ndarray): ``N x m`` normalized labels.
    """

    space: FactorSpace
    images: np.ndarray
    factor_indices: np.ndarray
    u: np.ndarray

    def __len__(self):
        return len(self.factor_indices)


def generate_corpus(space, workers=1):
    """
    Render the full Cartesian product of a factor space.

    Rendering is pure, so samples are distributed over ``workers`` processes
    when more than one is requested; the result is identical either way.
    """
    indices = space.all_indices()
    logger.info("rendering %d samples for %s", len(indices), space.dataset_name)
    draw = partial(render_image, space)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            images = list(pool.map(draw, indices, chunksize=256))
    else:
        images = [draw(idx) for idx in indices]
    return Corpus(
        space=space,
        images=np.stack(images).astype(np.float32),
        factor_indices=indices,
        u=space.normalize_all(indices),
    )


def save_corpus(corpus, out_dir):
    """
    Persist a corpus as a directory.

    Layout:
        ``factors.json``  FactorSpace as JSON.
        ``images.bin``    raw little-endian float32, C order, no padding.
        ``images.json``   header ``{"shape": [N, H, W, C], "dtype": "<f4", "order": "C"}``.
        ``labels.csv``    one row per sample: ``idx_<factor>`` columns then ``u_<factor>`` columns.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / FACTORS_FILE).write_text(corpus.space.model_dump_json(indent=2))

    images = np.ascontiguousarray(corpus.images, dtype="<f4")
    images.tofile(out_dir / IMAGES_FILE)
    header = {"shape": list(images.shape), "dtype": "<f4", "order": "C"}
    (out_dir / HEADER_FILE).write_text(json.dumps(header, indent=2))

    names = corpus.space.names
    labels = pd.DataFrame(corpus.factor_indices, columns=[f"idx_{n}" for n in names])
    for j, name in enumerate(names):
        labels[f"u_{name}"] = corpus.u[:, j]
    labels.to_csv(out_dir / LABELS_FILE, index=False)
    logger.info("saved corpus of %d samples to %s", len(corpus), out_dir)
    return out_dir


def load_corpus(corpus_dir):
    """Load a corpus written by ``save_corpus``; images are memory-mapped read-only."""
    corpus_dir = Path(corpus_dir)
    missing = [f for f in (FACTORS_FILE, IMAGES_FILE, HEADER_FILE, LABELS_FILE) if not (corpus_dir / f).exists()]
    if missing:
        raise ConfigurationError(f"corpus at {corpus_dir} is missing {', '.join(missing)}")

    space = FactorSpace.model_validate_json((corpus_dir / FACTORS_FILE).read_text())
    header = json.loads((corpus_dir / HEADER_FILE).read_text())
    images = np.memmap(
        corpus_dir / IMAGES_FILE,
        dtype=np.dtype(header["dtype"]),
        mode="r",
        shape=tuple(header["shape"]),
        order=header["order"],
    )
    labels = pd.read_csv(corpus_dir / LABELS_FILE)
    names = space.names
    return Corpus(
        space=space,
        images=images,
        factor_indices=labels[[f"idx_{n}" for n in names]].to_numpy(dtype=np.int64),
        u=labels[[f"u_{n}" for n in names]].to_numpy(dtype=np.float32),
    )


def corpus_dir(data_dir, dataset_name, resolution="mini", image_size=64):
    return Path(data_dir) / f"{dataset_name}_{resolution}_{image_size}"


def obtain_corpus(dataset_name, resolution="mini", data_dir=None, image_size=64, workers=1):
    """
    Load a cached corpus, rendering and saving it first when it is not on disk yet.

    Args:
        dataset_name (str): ``"dsprites_like"`` or ``"shapes3d_like"``.
        resolution (str): ``"mini"`` or ``"full-grid"``.
        data_dir (str | Path | None): Cache root, ``settings.DATA_DIR`` by default.
        image_size (int): Side length of the rendered images.
        workers (int): Rendering processes used on a cache miss.

    Returns:
        tuple[Corpus, Path]: The memory-mapped corpus and its directory.
    """
    from app.config.settings import settings
    from app.datasets.factors import build_factor_space

    directory = corpus_dir(data_dir or settings.DATA_DIR, dataset_name, resolution, image_size)
    if not (directory / HEADER_FILE).exists():
        logger.info("no cached corpus at %s, rendering", directory)
        space = build_factor_space(dataset_name, resolution, image_size=image_size)
        save_corpus(generate_corpus(space, workers), directory)
    return load_corpus(directory), directory
