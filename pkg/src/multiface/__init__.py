"""Bottom-up multi-face landmark grouping with a cosine discriminative loss."""

from .core import (EmbeddingMap, FaceGroup, Heatmap, LandmarkCandidate, LossConfig,
                   MultifaceError, SceneAnnotation, Tensor, annotation_read,
                   annotation_write, tensor_read, tensor_write)
from .loss import LabeledEmbeddings, LossBreakdown, fox_loss, fox_loss_grad, pixel_objective
from .meanshift import ClusterConfig, ClusterResult, mean_shift, oracle_cluster
from .nms import NmsConfig, extract_candidates, gather_embeddings
from .pipeline import ToyTrainConfig, generate_scene, parse_faces, train_toy_embeddings

__version__ = "0.1.0"
