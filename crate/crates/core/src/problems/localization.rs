//! Sensor-network localization with a non-Lipschitz residual loss.
//!
//! Unknown positions `x_1..x_n` in the plane are fit to measured distances
//! between variable pairs and between anchors and variables. The objective
//! averages `r(| |x_i - x_j| - d_ij |)` over all measured pairs, where the
//! loss `r` is `u^5`, `exp(u^3)` or `u`.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Problem;
use crate::error::{Error, Result};
use crate::growth::{compose, GrowthModel};
use crate::rng::RngStream;

/// Residual loss `r(u)` for `u >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Pow5,
    ExpCube,
    Abs,
}

impl Loss {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Loss::Pow5 => u.powi(5),
            Loss::ExpCube => (u * u * u).exp(),
            Loss::Abs => u,
        }
    }

    /// Growth model of `r` as a function on `R^1`.
    fn outer_model(self) -> GrowthModel {
        match self {
            // 5u^4 is convex and nondecreasing on u >= 0
            Loss::Pow5 => GrowthModel::radial_convex(|t| 5.0 * t.powi(4)),
            Loss::ExpCube => GrowthModel::radial(|t| 3.0 * t * t * (t * t * t).exp()),
            Loss::Abs => GrowthModel::lipschitz(1.0).expect("L = 1"),
        }
        .with_dim(1)
    }

    pub fn name(self) -> &'static str {
        match self {
            Loss::Pow5 => "pow5",
            Loss::ExpCube => "exp_cube",
            Loss::Abs => "abs",
        }
    }
}

/// A measured distance. For anchor pairs `i` indexes anchors and `j`
/// indexes variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub target: f64,
}

/// Serializable localization instance. `variables` holds the ground truth
/// the targets were measured from; it is not seen by the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationInstance {
    pub r_kind: Loss,
    /// Factor the coordinates were multiplied by when generated.
    #[serde(default = "one")]
    pub scale: f64,
    pub variables: Vec<[f64; 2]>,
    pub anchors: Vec<[f64; 2]>,
    #[serde(default)]
    pub pairs_xx: Vec<Pair>,
    #[serde(default)]
    pub pairs_ax: Vec<Pair>,
}

fn one() -> f64 {
    1.0
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn point(z: &[f64], k: usize) -> [f64; 2] {
    [z[2 * k], z[2 * k + 1]]
}

impl LocalizationInstance {
    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs_xx.len() + self.pairs_ax.len()
    }

    /// Flattened ground-truth decision vector.
    pub fn ground_truth(&self) -> Vec<f64> {
        self.variables.iter().flat_map(|p| [p[0], p[1]]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        let m = self.anchors.len();
        if self.num_pairs() == 0 {
            return Err(Error::invalid("localization instance has no pairs"));
        }
        let mut seen = BTreeSet::new();
        for p in &self.pairs_xx {
            if p.i >= n || p.j >= n || p.i == p.j {
                return Err(Error::invalid(format!("bad variable pair ({}, {})", p.i, p.j)));
            }
            if !seen.insert((0, p.i.min(p.j), p.i.max(p.j))) {
                return Err(Error::invalid(format!("duplicate pair ({}, {})", p.i, p.j)));
            }
        }
        for p in &self.pairs_ax {
            if p.i >= m || p.j >= n {
                return Err(Error::invalid(format!("bad anchor pair ({}, {})", p.i, p.j)));
            }
            if !seen.insert((1, p.i, p.j)) {
                return Err(Error::invalid(format!("duplicate anchor pair ({}, {})", p.i, p.j)));
            }
        }
        let all_targets = self.pairs_xx.iter().chain(&self.pairs_ax);
        if let Some(p) = all_targets.into_iter().find(|p| !(p.target >= 0.0 && p.target.is_finite())) {
            return Err(Error::invalid(format!("target {} must be finite and >= 0", p.target)));
        }
        Ok(())
    }

    /// Objective value at the flattened decision vector `z`.
    pub fn objective(&self, z: &[f64]) -> f64 {
        let r = self.r_kind;
        let xx: f64 = self
            .pairs_xx
            .iter()
            .map(|p| r.eval((dist2(point(z, p.i), point(z, p.j)) - p.target).abs()))
            .sum();
        let ax: f64 = self
            .pairs_ax
            .iter()
            .map(|p| r.eval((dist2(self.anchors[p.i], point(z, p.j)) - p.target).abs()))
            .sum();
        (xx + ax) / self.num_pairs() as f64
    }

    /// Growth model assembled from the calculus: each term is the loss
    /// composed with the residual map, terms are summed and averaged.
    ///
    /// `z -> |x_i - x_j|` has Lipschitz constant `sqrt(2)` in the stacked
    /// vector `z`; the anchor residual `z -> |a_i - x_j|` has constant 1.
    pub fn growth_model(&self) -> Result<GrowthModel> {
        let dim = 2 * self.num_variables();
        let outer = self.r_kind.outer_model();
        let xx_inner = GrowthModel::lipschitz(std::f64::consts::SQRT_2)?;
        let ax_inner = GrowthModel::lipschitz(1.0)?;
        let mut terms = Vec::with_capacity(self.num_pairs());
        for p in &self.pairs_xx {
            let p = *p;
            terms.push(compose(&outer, &xx_inner, move |z: &[f64]| {
                vec![(dist2(point(z, p.i), point(z, p.j)) - p.target).abs()]
            }));
        }
        for p in &self.pairs_ax {
            let p = *p;
            let a = self.anchors[p.i];
            terms.push(compose(&outer, &ax_inner, move |z: &[f64]| {
                vec![(dist2(a, point(z, p.j)) - p.target).abs()]
            }));
        }
        GrowthModel::sum_all(terms)?
            .scaled(1.0 / self.num_pairs() as f64)
            .map(|m| m.with_dim(dim))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let inst: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Localization objective over the flattened vector `(x_1, y_1, ..., x_n, y_n)`
/// with its growth model attached.
pub fn localization_problem(instance: &LocalizationInstance) -> Result<Problem> {
    instance.validate()?;
    let model = instance.growth_model()?;
    let inst = instance.clone();
    let name = format!("localization-{}", instance.r_kind.name());
    Ok(Problem::new(name, 2 * instance.num_variables(), move |z: &[f64]| inst.objective(z))
        .with_model(model))
}

/// Recipe for a random localization instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    #[serde(default = "GenerateSpec::default_n")]
    pub n: usize,
    #[serde(default = "GenerateSpec::default_m")]
    pub m: usize,
    #[serde(default = "GenerateSpec::default_n_xx")]
    pub n_xx: usize,
    #[serde(default = "GenerateSpec::default_n_ax")]
    pub n_ax: usize,
    pub r_kind: Loss,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of additive Gaussian noise on the targets.
    #[serde(default)]
    pub noise: f64,
}

impl GenerateSpec {
    fn default_n() -> usize {
        10
    }
    fn default_m() -> usize {
        4
    }
    fn default_n_xx() -> usize {
        100
    }
    fn default_n_ax() -> usize {
        50
    }

    /// Ten variables, four corner anchors, 100 + 50 sampled pairs.
    pub fn standard(r_kind: Loss, seed: u64) -> Self {
        Self {
            n: 10,
            m: 4,
            n_xx: 100,
            n_ax: 50,
            r_kind,
            seed,
            noise: 0.0,
        }
    }
}

const CORNERS: [[f64; 2]; 4] = [[0.45, 0.45], [-0.45, 0.45], [-0.45, -0.45], [0.45, -0.45]];

/// Draws variables uniformly from `[-0.5, 0.5]^2`, places the first four
/// anchors at `(+-0.45, +-0.45)` (further anchors uniformly), samples pairs
/// with replacement and drops duplicates. Coordinates are divided by 10
/// for the `exp_cube` loss.
pub fn generate_instance(spec: &GenerateSpec) -> Result<LocalizationInstance> {
    if spec.n_xx > 0 && spec.n < 2 {
        return Err(Error::invalid("variable pairs need at least two variables"));
    }
    if spec.n_ax > 0 && (spec.m == 0 || spec.n == 0) {
        return Err(Error::invalid("anchor pairs need anchors and variables"));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::invalid("noise must be finite and >= 0"));
    }
    let mut rng = RngStream::new(spec.seed, 0x4c4f_4341).draw_rng(0);
    let scale = if spec.r_kind == Loss::ExpCube { 0.1 } else { 1.0 };
    let unit = |rng: &mut rand_chacha::ChaCha8Rng| -> [f64; 2] {
        [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]
    };
    let mut variables: Vec<[f64; 2]> = (0..spec.n).map(|_| unit(&mut rng)).collect();
    let mut anchors: Vec<[f64; 2]> = (0..spec.m)
        .map(|k| if k < 4 { CORNERS[k] } else { unit(&mut rng) })
        .collect();
    for p in variables.iter_mut().chain(anchors.iter_mut()) {
        p[0] *= scale;
        p[1] *= scale;
    }

    let mut xx = BTreeSet::new();
    for _ in 0..spec.n_xx {
        let i = rng.random_range(0..spec.n);
        let mut j = rng.random_range(0..spec.n - 1);
        if j >= i {
            j += 1;
        }
        xx.insert((i.min(j), i.max(j)));
    }
    let mut ax = BTreeSet::new();
    for _ in 0..spec.n_ax {
        ax.insert((rng.random_range(0..spec.m), rng.random_range(0..spec.n)));
    }

    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut measure = |d: f64| (d + noise.sample(&mut rng)).max(0.0);
    let pairs_xx = xx
        .into_iter()
        .map(|(i, j)| Pair {
            i,
            j,
            target: measure(dist2(variables[i], variables[j])),
        })
        .collect();
    let pairs_ax = ax
        .into_iter()
        .map(|(i, j)| Pair {
            i,
            j,
            target: measure(dist2(anchors[i], variables[j])),
        })
        .collect();

    let inst = LocalizationInstance {
        r_kind: spec.r_kind,
        scale,
        variables,
        anchors,
        pairs_xx,
        pairs_ax,
    };
    inst.validate()?;
    Ok(inst)
}

/// Starting point drawn uniformly from `[-0.5, 0.5]^2` per variable, times `scale`.
pub fn random_initial_point(n: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed, 0x494e_4954).draw_rng(0);
    (0..2 * n)
        .map(|_| scale * (rng.random::<f64>() - 0.5))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Tally;
    use proptest::prelude::*;

    fn single_pair(r_kind: Loss, target: f64) -> LocalizationInstance {
        LocalizationInstance {
            r_kind,
            scale: 1.0,
            variables: vec![[0.0, 0.0], [1.0, 0.0]],
            anchors: vec![],
            pairs_xx: vec![Pair { i: 0, j: 1, target }],
            pairs_ax: vec![],
        }
    }

    #[test]
    fn ground_truth_is_global_minimum() {
        for r in [Loss::Pow5, Loss::Abs] {
            let inst = generate_instance(&GenerateSpec::standard(r, 3)).unwrap();
            let p = localization_problem(&inst).unwrap();
            assert!(p.eval(&inst.ground_truth(), Tally::Oracle).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn single_pair_values() {
        // |x_0 - x_1| = 1 at ground truth, target 2 -> residual 1
        let p = localization_problem(&single_pair(Loss::Pow5, 2.0)).unwrap();
        assert_eq!(p.eval(&[0.0, 0.0, 1.0, 0.0], Tally::Oracle).unwrap(), 1.0);
        let p = localization_problem(&single_pair(Loss::ExpCube, 1.0)).unwrap();
        assert_eq!(p.eval(&[0.0, 0.0, 1.0, 0.0], Tally::Oracle).unwrap(), 1.0);
    }

    #[test]
    fn single_pair_model() {
        let inst = single_pair(Loss::Pow5, 2.0);
        let m = inst.growth_model().unwrap();
        let z = [0.0, 0.0, 1.0, 0.0];
        let s2 = std::f64::consts::SQRT_2;
        assert!((m.alpha(&z).unwrap() - 5.0 * s2).abs() < 1e-12);
        // sqrt(2) * (5 (1 + sqrt(2))^4 - 5)
        let expected = s2 * (5.0 * (1.0 + s2).powi(4) - 5.0);
        assert!((m.beta(&z, 1.0).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn empty_pairs_rejected() {
        let mut inst = single_pair(Loss::Abs, 1.0);
        inst.pairs_xx.clear();
        assert!(localization_problem(&inst).is_err());
    }

    #[test]
    fn standard_generation() {
        let inst = generate_instance(&GenerateSpec::standard(Loss::Pow5, 0)).unwrap();
        assert_eq!(inst.num_variables(), 10);
        assert_eq!(inst.anchors.len(), 4);
        assert!(inst.pairs_xx.len() <= 45 && !inst.pairs_xx.is_empty());
        assert!(inst.pairs_ax.len() <= 40 && !inst.pairs_ax.is_empty());
        assert!(inst
            .variables
            .iter()
            .all(|p| p[0].abs() <= 0.5 && p[1].abs() <= 0.5));
        assert!(inst.anchors.contains(&[-0.45, 0.45]));
    }

    #[test]
    fn tiny_generation() {
        let spec = GenerateSpec {
            n: 2,
            m: 0,
            n_xx: 1,
            n_ax: 0,
            r_kind: Loss::Abs,
            seed: 1,
            noise: 0.0,
        };
        let inst = generate_instance(&spec).unwrap();
        assert_eq!(inst.num_pairs(), 1);
        assert_eq!((inst.pairs_xx[0].i, inst.pairs_xx[0].j), (0, 1));
    }

    #[test]
    fn exp_cube_is_scaled() {
        let inst = generate_instance(&GenerateSpec::standard(Loss::ExpCube, 9)).unwrap();
        let max = inst
            .variables
            .iter()
            .chain(&inst.anchors)
            .flat_map(|p| [p[0].abs(), p[1].abs()])
            .fold(0.0, f64::max);
        assert!(max <= 0.05);
        assert_eq!(inst.scale, 0.1);
    }

    #[test]
    fn toml_round_trip() {
        let inst = generate_instance(&GenerateSpec::standard(Loss::Pow5, 5)).unwrap();
        let back = LocalizationInstance::from_toml(&inst.to_toml().unwrap()).unwrap();
        assert_eq!(inst, back);
        assert!(LocalizationInstance::from_toml("r_kind = \"pow5\"\nbogus = 1\nvariables=[]\nanchors=[]").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn objective_is_permutation_consistent(seed in 0u64..1000, zseed in 0u64..1000, shift in 1usize..10) {
            let inst = generate_instance(&GenerateSpec::standard(Loss::Pow5, seed)).unwrap();
            let n = inst.num_variables();
            let perm: Vec<usize> = (0..n).map(|k| (k + shift) % n).collect();
            let z = random_initial_point(n, 1.0, zseed);
            let mut relabeled = inst.clone();
            for p in relabeled.pairs_xx.iter_mut() {
                p.i = perm[p.i];
                p.j = perm[p.j];
            }
            for p in relabeled.pairs_ax.iter_mut() {
                p.j = perm[p.j];
            }
            let mut z2 = vec![0.0; 2 * n];
            for k in 0..n {
                z2[2 * perm[k]] = z[2 * k];
                z2[2 * perm[k] + 1] = z[2 * k + 1];
            }
            let a = inst.objective(&z);
            let b = relabeled.objective(&z2);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn exp_cube_objective_at_least_one(seed in 0u64..500, zseed in 0u64..500) {
            let inst = generate_instance(&GenerateSpec::standard(Loss::ExpCube, seed)).unwrap();
            let z = random_initial_point(inst.num_variables(), 0.1, zseed);
            prop_assert!(inst.objective(&z) >= 1.0);
        }
    }
}
