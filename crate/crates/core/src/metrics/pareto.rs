/// A trained agent's position in the (Var, CR) plane.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontierPoint {
    pub label: String,
    pub var: f64,
    pub cr: f64,
    pub dominated: bool,
}

impl FrontierPoint {
    pub fn new(label: impl Into<String>, var: f64, cr: f64) -> Self {
        Self {
            label: label.into(),
            var,
            cr,
            dominated: false,
        }
    }

    /// `other` has no more variance and no less return, and is strictly
    /// better in one of the two.
    pub fn is_dominated_by(&self, other: &FrontierPoint) -> bool {
        other.var <= self.var && other.cr >= self.cr && (other.var < self.var || other.cr > self.cr)
    }
}

/// Flags every dominated point; input order is preserved. Points equal in
/// both coordinates do not dominate each other.
pub fn pareto_filter(mut points: Vec<FrontierPoint>) -> Vec<FrontierPoint> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].var.total_cmp(&points[b].var));

    // best return among points with strictly smaller variance
    let mut best_before = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let var = points[order[i]].var;
        let mut j = i;
        let mut group_best = f64::NEG_INFINITY;
        while j < order.len() && points[order[j]].var == var {
            group_best = group_best.max(points[order[j]].cr);
            j += 1;
        }
        for &k in &order[i..j] {
            let cr = points[k].cr;
            points[k].dominated = best_before >= cr || group_best > cr;
        }
        best_before = best_before.max(group_best);
        i = j;
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(points: &[FrontierPoint]) -> Vec<bool> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| points.iter().enumerate().any(|(j, q)| i != j && p.is_dominated_by(q)))
            .collect()
    }

    #[test]
    fn examples() {
        let one = pareto_filter(vec![FrontierPoint::new("a", 1.0, 1.0)]);
        assert!(!one[0].dominated);
        let two = pareto_filter(vec![FrontierPoint::new("a", 1.0, 1.0), FrontierPoint::new("b", 2.0, 1.0)]);
        assert_eq!(two.iter().map(|p| p.dominated).collect::<Vec<_>>(), vec![false, true]);
        let ties = pareto_filter(vec![FrontierPoint::new("a", 1.0, 1.0), FrontierPoint::new("b", 1.0, 1.0)]);
        assert!(ties.iter().all(|p| !p.dominated));
    }

    proptest! {
        #[test]
        fn agrees_with_pairwise_check(raw in proptest::collection::vec((0u8..20, 0u8..20), 0..60)) {
            // coarse grid so ties are common
            let pts: Vec<FrontierPoint> = raw
                .iter()
                .enumerate()
                .map(|(i, &(v, c))| FrontierPoint::new(i.to_string(), v as f64, c as f64))
                .collect();
            let expected = brute_force(&pts);
            let got: Vec<bool> = pareto_filter(pts).iter().map(|p| p.dominated).collect();
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn monotone_rescaling_preserves_flags(raw in proptest::collection::vec((0.0f64..10.0, -5.0f64..5.0), 1..40)) {
            let pts: Vec<FrontierPoint> = raw.iter().map(|&(v, c)| FrontierPoint::new("", v, c)).collect();
            let scaled: Vec<FrontierPoint> = raw.iter().map(|&(v, c)| FrontierPoint::new("", v.sqrt() * 3.0, c)).collect();
            let a: Vec<bool> = pareto_filter(pts).iter().map(|p| p.dominated).collect();
            let b: Vec<bool> = pareto_filter(scaled).iter().map(|p| p.dominated).collect();
            prop_assert_eq!(a, b);
        }
    }
}
