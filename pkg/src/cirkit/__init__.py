"""cirkit: composed-image-retrieval toolkit.

Synthesizes training triplets on-the-fly from caption-embedding pairs, trains
a small query-composition model with a three-term contrastive objective,
evaluates retrieval with exact Recall@k and mAP@k, and provides dataset
pairing plus judge-driven benchmark refinement pipelines.
"""

__version__ = "0.1.0"
