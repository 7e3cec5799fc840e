"""Adaptive cross-city sentiment modeling.

Contrastive city embeddings guide similarity-weighted data augmentation; a
multimodal (text-embedding + mobility) classifier is globally pretrained and
then adapted per city.
"""

__version__ = "0.1.0"
