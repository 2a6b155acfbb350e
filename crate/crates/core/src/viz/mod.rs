//! Attention heatmaps, Grad-CAM saliency and a top-mass overlap statistic.

mod gradcam;
mod heatmap;
mod overlap;

pub use gradcam::{default_gradcam_layer, gradcam, gradcam_map};
pub use heatmap::{colormap_jet, render_heatmap, Heatmap};
pub use overlap::{overlap_topq, topq_cells, OverlapStat};
