"""Classifier adapters, the bundled desk model, and dataset sampling."""

from .adapters import (ClassifierAdapter, NumpyNetAdapter, TorchvisionAdapter,
                       available_models, load_classifier, predict, register_model)
from .data import (Cifar10Source, DataSource, ImageFolderSource, SampledDataset,
                   Synth10Source, class_motif, get_data_source, resolve_dataset,
                   sample_dataset, synth_texture_image)
from .smallcnn import SequentialNet, accuracy, desk_architecture, train_classifier

__all__ = [
    "ClassifierAdapter", "NumpyNetAdapter", "TorchvisionAdapter",
    "available_models", "load_classifier", "predict", "register_model",
    "Cifar10Source", "DataSource", "ImageFolderSource", "SampledDataset",
    "Synth10Source", "class_motif", "get_data_source", "resolve_dataset",
    "sample_dataset", "synth_texture_image",
    "SequentialNet", "accuracy", "desk_architecture", "train_classifier",
]
