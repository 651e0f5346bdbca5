from ._knn import (
    FailurePrediction,
    PredictionMode,
    SimilarityConfig,
    TieBreak,
    TrajectoryNearestNeighbors,
    nearest_neighbors,
    predict,
    predictions_to_frame,
    similarity,
    trajectory_distances,
)
