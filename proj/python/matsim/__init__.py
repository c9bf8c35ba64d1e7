"""Perceptual material similarity from triplet comparisons."""

from ._core import (
    AnswerStore,
    ComputeError,
    DatasetBundle,
    EncoderModel,
    ValidationError,
    batch_hard_triplet_loss,
    cross_entropy_loss,
    elbow_k,
    evaluate,
    gamut_solve,
    generate_synthetic,
    hopkins,
    information_gain,
    kmeans,
    load_dataset,
    perplexity,
    project_2d,
    read_answers,
    read_checkpoint,
    similarity_loss,
    simplex_project,
    simulate_answers,
    train,
    triplet_geometry,
    triplet_loss,
    tste_fit,
    write_answers,
    write_checkpoint,
)

__all__ = [name for name in dir() if not name.startswith("_")]
