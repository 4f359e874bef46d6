"""Spatially-aware token merging for transformer encoders."""

from ._core import (  # noqa: F401
    TosaError,
    alpha_at,
    bipartite_partition,
    bsm_select,
    build_schedule,
    cosine_similarity_matrix,
    fused_score,
    load_feature_file,
    make_spatial_tokens,
    patch_mean_depth,
    proportional_attention,
    quantize_depth,
    render_merge_map,
    row_softmax_with_bias,
    save_feature_file,
    sinusoidal_encoding,
    spatial_dispersion,
    two_plane_scene,
    vit_forward,
    weighted_row_average,
)

__all__ = [name for name in dir() if not name.startswith("_")]
