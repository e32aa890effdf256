"""faststyle: a small CPU inference engine for convolutional graphs with
zero-channel structured pruning and patch-swap style transfer."""

from .tensor import (
    EPS_DEFAULT,
    ChannelStats,
    ShapeError,
    Tensor4,
    activation,
    add,
    batch_norm,
    channel_stats,
    concat_channels,
    conv2d,
    conv2d_fast,
    pool,
    upsample_nearest,
)
from .graph import (
    Graph,
    GraphBuilder,
    GraphError,
    Node,
    Preprocessing,
    count_flops,
    count_params,
    execute,
    infer_shapes,
    validate,
)
from .model_io import (
    MANIFEST_NAME,
    WEIGHTS_NAME,
    ModelFormatError,
    load_model,
    load_model_dir,
    save_model,
    save_model_dir,
)
from .prune import (
    EquivalenceReport,
    KeepMask,
    PruneError,
    PrunePlan,
    PruneReport,
    apply_prune,
    detect_zero_channels,
    propagate_masks,
    prune_graph,
    verify_equivalence,
)
from .transform import (
    MODES,
    AggregateLayout,
    TransferConfig,
    adain,
    aggregate_features,
    colorize,
    normalize,
    sandwich_swap,
    split_aggregate,
    style_swap,
    swap_selections,
    transfer,
)
from .pipeline import (
    ImageError,
    PipelineError,
    StyleJob,
    encode,
    encoder_stride,
    read_image,
    stylize,
    write_image,
)
from .metrics import BenchResult, GramMatrix, benchmark, edge_ssim, gram, gram_distance, sobel_edges, ssim

__version__ = "0.1.0"
