from ._core import (
    CcptError,
    clip_loss,
    even_split,
    forgetting_rate,
    gradcheck,
    kmeans,
    macro_ovr_auc,
    mof_select,
    odid_loss,
    row_correction,
    run_pipeline,
    similarity_matrix,
)

__version__ = "0.1.0"
