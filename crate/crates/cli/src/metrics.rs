//! Summary measures of emitted runs.

use std::collections::BTreeSet;

use mbmlmc::fem::QoiSpec;
use mbmlmc::geometry::Point;
use mbmlmc::media::BlockPartition;

/// Centre of the QoI support.
pub fn qoi_center(qoi: &QoiSpec) -> Point {
    match qoi {
        QoiSpec::BlockAverageSolution { region } | QoiSpec::BlockAverageGradientComponent { region, .. } => {
            region.center()
        }
        QoiSpec::MollifiedStrainTrace { center, .. } => *center,
    }
}

/// Distance, in block edges, from the area-weighted centroid of the refined
/// blocks to `target`; `None` when nothing is refined.
pub fn refined_centroid_offset(part: &BlockPartition, refined: &BTreeSet<usize>, target: Point) -> Option<f64> {
    let mut area = 0.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    for &id in refined {
        let b = part.block(id).ok()?;
        let a = b.rect.area();
        let c = b.rect.center();
        area += a;
        sx += a * c.x;
        sy += a * c.y;
    }
    (area > 0.0).then(|| Point::new(sx / area, sy / area).dist(target) / part.edge)
}

/// True if the sample counts strictly decrease from level to level.
pub fn strictly_decreasing(m: &[u64]) -> bool {
    m.windows(2).all(|w| w[1] < w[0])
}
