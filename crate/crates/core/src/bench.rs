//! Benchmark generators: the piecewise-linearized vehicle, gridworlds,
//! 1D conveyors and randomized small instances.

use num_traits::{One, Zero};
use rand::Rng;

use crate::geometry::rational::{frac, int, round_to_denominator, to_f64};
use crate::geometry::{Hyperrect, Matrix, Partition, Scalar};
use crate::model::{
    single_location, translation_dynamics, AffineDynamics, Location, PiecewiseAffineSystem, Problem,
};

fn seg(lo: Scalar, hi: Scalar) -> Hyperrect {
    Hyperrect::new(vec![lo], vec![hi]).expect("ordered bounds")
}

fn zeros(n: usize, m: usize) -> Matrix {
    vec![vec![Scalar::zero(); m]; n]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linearization {
    /// `a = cos θ_mid`, `c = sin θ_mid`, `b = d = 0`.
    Midpoint,
    /// First-order expansion of `v·cos θ`, `v·sin θ` around the bin
    /// midpoint: adds a `θ` column and nonzero offsets `b`, `d`.
    Tangent,
}

/// Discretized vehicle over the state `(x, y, v, θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleConfig {
    pub theta_bins: usize,
    pub v_bins: usize,
    pub x: (Scalar, Scalar),
    pub y: (Scalar, Scalar),
    pub v: (Scalar, Scalar),
    pub theta: (Scalar, Scalar),
    pub x_cells: usize,
    pub y_cells: usize,
    pub alphas: Vec<Scalar>,
    pub betas: Vec<Scalar>,
    pub denominator: u64,
    pub linearization: Linearization,
}

impl VehicleConfig {
    /// 3 heading bins × 8 speed bins = 24 locations on a 8 × 4 position
    /// grid: 768 control cells.
    pub fn dubins24() -> VehicleConfig {
        VehicleConfig {
            theta_bins: 3,
            v_bins: 8,
            x: (int(0), int(16)),
            y: (int(0), int(8)),
            v: (int(0), int(2)),
            theta: (frac(-1, 2), frac(5, 2)),
            x_cells: 8,
            y_cells: 4,
            alphas: vec![frac(-1, 4), int(0), frac(1, 4)],
            betas: vec![frac(-1, 2), int(0), frac(1, 2)],
            denominator: 1 << 20,
            linearization: Linearization::Midpoint,
        }
    }

    /// 3 × 2 locations on a 4 × 2 position grid: 48 control cells.
    pub fn desk() -> VehicleConfig {
        VehicleConfig {
            theta_bins: 3,
            v_bins: 2,
            x: (int(0), int(8)),
            y: (int(0), int(4)),
            v: (int(0), int(2)),
            theta: (frac(-1, 2), frac(5, 2)),
            x_cells: 4,
            y_cells: 2,
            alphas: vec![int(-1), int(0), int(1)],
            betas: vec![frac(-1, 2), int(0), frac(1, 2)],
            denominator: 1 << 20,
            linearization: Linearization::Midpoint,
        }
    }

    pub fn n_locations(&self) -> usize {
        self.theta_bins * self.v_bins
    }

    pub fn state_space(&self) -> Hyperrect {
        Hyperrect::from_bounds(&[
            self.x.clone(),
            self.y.clone(),
            self.v.clone(),
            self.theta.clone(),
        ])
    }

    fn bin(range: &(Scalar, Scalar), bins: usize, i: usize) -> (Scalar, Scalar) {
        let w = (&range.1 - &range.0) / int(bins as i64);
        (
            &range.0 + &w * int(i as i64),
            &range.0 + &w * int(i as i64 + 1),
        )
    }
}

/// Coefficients of one location: `x⁺ = x + a·v + a_θ·θ + b`,
/// `y⁺ = y + c·v + c_θ·θ + d`, `v⁺ = v + α`, `θ⁺ = θ + e·β`.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleCoefficients {
    pub a: Scalar,
    pub c: Scalar,
    pub a_theta: Scalar,
    pub c_theta: Scalar,
    pub b: Scalar,
    pub d: Scalar,
    pub e: Scalar,
}

/// Location `l = theta_bin · v_bins + v_bin`.
pub fn vehicle_coefficients(
    cfg: &VehicleConfig,
    theta_bin: usize,
    v_bin: usize,
) -> VehicleCoefficients {
    let (t0, t1) = VehicleConfig::bin(&cfg.theta, cfg.theta_bins, theta_bin);
    let (v0, v1) = VehicleConfig::bin(&cfg.v, cfg.v_bins, v_bin);
    let tm = (t0 + t1) / int(2);
    let vm = (v0.clone() + v1) / int(2);
    let round = |x: f64| round_to_denominator(x, cfg.denominator);
    let theta = to_f64(&tm);
    let a = round(theta.cos());
    let c = round(theta.sin());
    // A vehicle at rest cannot turn: the slowest bin never changes heading.
    let e = if v_bin == 0 && v0 == cfg.v.0 {
        Scalar::zero()
    } else {
        vm.clone()
    };
    match cfg.linearization {
        Linearization::Midpoint => VehicleCoefficients {
            a,
            c,
            a_theta: Scalar::zero(),
            c_theta: Scalar::zero(),
            b: Scalar::zero(),
            d: Scalar::zero(),
            e,
        },
        Linearization::Tangent => {
            let vmf = to_f64(&vm);
            let a_theta = round(-vmf * theta.sin());
            let c_theta = round(vmf * theta.cos());
            VehicleCoefficients {
                b: -(&a_theta * &tm),
                d: -(&c_theta * &tm),
                a,
                c,
                a_theta,
                c_theta,
                e,
            }
        }
    }
}

pub fn dubins_pwl(cfg: &VehicleConfig) -> PiecewiseAffineSystem {
    let space = cfg.state_space();
    let mut locations = Vec::with_capacity(cfg.n_locations());
    for tb in 0..cfg.theta_bins {
        for vb in 0..cfg.v_bins {
            let k = vehicle_coefficients(cfg, tb, vb);
            let one = Scalar::one;
            let zero = Scalar::zero;
            let a = vec![
                vec![one(), zero(), k.a.clone(), k.a_theta.clone()],
                vec![zero(), one(), k.c.clone(), k.c_theta.clone()],
                vec![zero(), zero(), one(), zero()],
                vec![zero(), zero(), zero(), one()],
            ];
            let mut b = zeros(4, 2);
            b[2][0] = one();
            b[3][1] = k.e.clone();
            let c = vec![k.b.clone(), k.d.clone(), zero(), zero()];
            let (v0, v1) = VehicleConfig::bin(&cfg.v, cfg.v_bins, vb);
            let (t0, t1) = VehicleConfig::bin(&cfg.theta, cfg.theta_bins, tb);
            locations.push(Location {
                invariant: Hyperrect::from_bounds(&[
                    cfg.x.clone(),
                    cfg.y.clone(),
                    (v0, v1),
                    (t0, t1),
                ]),
                dynamics: AffineDynamics::new(a, b, c).expect("4×4 / 4×2 / 4"),
            });
        }
    }
    let mut inputs = Vec::new();
    for alpha in &cfg.alphas {
        for beta in &cfg.betas {
            inputs.push(vec![alpha.clone(), beta.clone()]);
        }
    }
    let bound = |vals: &[Scalar]| {
        (
            vals.iter().min().cloned().unwrap_or_else(Scalar::zero),
            vals.iter().max().cloned().unwrap_or_else(Scalar::zero),
        )
    };
    let input_box = Hyperrect::from_bounds(&[bound(&cfg.alphas), bound(&cfg.betas)]);
    PiecewiseAffineSystem::new(space, input_box, inputs, locations).expect("bins tile the box")
}

/// Vehicle reach-avoid problem: Init in the bottom-left position cell at
/// low speed facing right, Goal the top-right quarter, two unsafe position blocks.
pub fn vehicle_problem(cfg: &VehicleConfig) -> Problem {
    let sys = dubins_pwl(cfg);
    let space = cfg.state_space();
    let control = Partition::uniform(
        &space,
        &[cfg.x_cells, cfg.y_cells, cfg.v_bins, cfg.theta_bins],
    )
    .expect("positive counts");
    let xb = |i| VehicleConfig::bin(&cfg.x, cfg.x_cells, i);
    let yb = |j| VehicleConfig::bin(&cfg.y, cfg.y_cells, j);
    let slow = VehicleConfig::bin(&cfg.v, cfg.v_bins, 0);
    // Facing away from the left wall: other headings leave the domain at once.
    let forward = (0..cfg.theta_bins)
        .map(|i| VehicleConfig::bin(&cfg.theta, cfg.theta_bins, i))
        .find(|(lo, hi)| lo <= &Scalar::zero() && &Scalar::zero() <= hi)
        .unwrap_or_else(|| cfg.theta.clone());
    let init = vec![Hyperrect::from_bounds(&[
        xb(0),
        yb(0),
        (cfg.v.0.clone(), slow.1.clone()),
        forward,
    ])];
    let goal = vec![Hyperrect::from_bounds(&[
        (xb(cfg.x_cells * 3 / 4).0, cfg.x.1.clone()),
        (yb(cfg.y_cells / 2).0, cfg.y.1.clone()),
        cfg.v.clone(),
        cfg.theta.clone(),
    ])];
    let blocked = [
        (cfg.x_cells * 3 / 8, cfg.y_cells / 4),
        (cfg.x_cells * 5 / 8, cfg.y_cells * 3 / 4),
    ];
    let mut safe = Vec::new();
    for i in 0..cfg.x_cells {
        for j in 0..cfg.y_cells {
            if !blocked.contains(&(i, j)) {
                safe.push(Hyperrect::from_bounds(&[
                    xb(i),
                    yb(j),
                    cfg.v.clone(),
                    cfg.theta.clone(),
                ]));
            }
        }
    }
    Problem::new(sys, control, init, safe, goal, 1, None)
}

/// The 768-cell vehicle instance.
pub fn full_vehicle_instance() -> Problem {
    vehicle_problem(&VehicleConfig::dubins24())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Init bottom-left, Goal top-right, nothing unsafe.
    Open,
    /// Goal top-right, sealed off by unsafe neighbours.
    WalledGoal,
    /// A full unsafe column between Init and Goal.
    Wall,
    /// Init block bottom-left, Goal rectangle top-right, small unsafe blocks.
    Blocks,
    /// Init and Goal are the same top-right cell.
    InitInGoal,
}

/// `x⁺ = x + u` on `[0,nx]×[0,ny]` with unit cells and inputs `±1` per
/// axis plus stay.
pub fn gridworld(nx: usize, ny: usize, layout: Layout) -> Problem {
    gridworld_with_step(nx, ny, layout, int(1), 1)
}

pub fn gridworld_with_step(
    nx: usize,
    ny: usize,
    layout: Layout,
    step: Scalar,
    k: usize,
) -> Problem {
    let space = Hyperrect::from_bounds(&[(int(0), int(nx as i64)), (int(0), int(ny as i64))]);
    let s = step.clone();
    let z = Scalar::zero;
    let inputs = vec![
        vec![s.clone(), z()],
        vec![-s.clone(), z()],
        vec![z(), s.clone()],
        vec![z(), -s.clone()],
        vec![z(), z()],
    ];
    let input_box = Hyperrect::from_bounds(&[(-s.clone(), s.clone()), (-s.clone(), s)]);
    let sys = single_location(space.clone(), input_box, inputs, translation_dynamics(2))
        .expect("one location");
    let control = Partition::uniform(&space, &[nx, ny]).expect("positive counts");
    let cell = |i: usize, j: usize| {
        Hyperrect::from_bounds(&[
            (int(i as i64), int(i as i64 + 1)),
            (int(j as i64), int(j as i64 + 1)),
        ])
    };
    let block = |i0: usize, i1: usize, j0: usize, j1: usize| {
        Hyperrect::from_bounds(&[
            (int(i0 as i64), int(i1 as i64)),
            (int(j0 as i64), int(j1 as i64)),
        ])
    };
    let (init, goal, unsafe_cells): (Vec<Hyperrect>, Vec<Hyperrect>, Vec<(usize, usize)>) =
        match layout {
            Layout::Open => (vec![cell(0, 0)], vec![cell(nx - 1, ny - 1)], vec![]),
            Layout::WalledGoal => {
                let mut walls = vec![];
                if nx >= 2 {
                    walls.push((nx - 2, ny - 1));
                }
                if ny >= 2 {
                    walls.push((nx - 1, ny - 2));
                }
                if nx >= 2 && ny >= 2 {
                    walls.push((nx - 2, ny - 2));
                }
                (vec![cell(0, 0)], vec![cell(nx - 1, ny - 1)], walls)
            }
            Layout::Wall => {
                let col = nx / 2;
                (
                    vec![cell(0, 0)],
                    vec![cell(nx - 1, ny - 1)],
                    (0..ny).map(|j| (col, j)).collect(),
                )
            }
            Layout::Blocks => {
                let walls: Vec<(usize, usize)> = [
                    (Some(nx / 2), (ny / 2).checked_sub(1)),
                    ((nx / 2).checked_sub(2), Some(ny / 2 + 1)),
                ]
                .into_iter()
                .filter_map(|(i, j)| Some((i?, j?)))
                .filter(|&(i, j)| i < nx && j < ny && (i, j) != (0, 0))
                .collect();
                (
                    vec![block(0, 2.min(nx), 0, 2.min(ny))],
                    vec![block(nx.saturating_sub(2), nx, ny - 1, ny)],
                    walls,
                )
            }
            Layout::InitInGoal => (
                vec![cell(nx - 1, ny - 1)],
                vec![cell(nx - 1, ny - 1)],
                vec![],
            ),
        };
    let mut safe = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            if !unsafe_cells.contains(&(i, j)) {
                safe.push(cell(i, j));
            }
        }
    }
    Problem::new(sys, control, init, safe, goal, k, None)
}

/// `x⁺ = x + u` on `[0,n]` with unit cells, inputs `+step` and `-step`,
/// Init the first cell and Goal the last. `blocked` drops the forward input.
pub fn conveyor(n: usize, step: Scalar, blocked: bool) -> Problem {
    let space = seg(int(0), int(n as i64));
    let inputs = if blocked {
        vec![vec![-step.clone()], vec![Scalar::zero()]]
    } else {
        vec![vec![step.clone()], vec![-step.clone()]]
    };
    let sys = single_location(
        space.clone(),
        seg(-step.clone(), step),
        inputs,
        translation_dynamics(1),
    )
    .expect("one location");
    Problem::new(
        sys,
        Partition::uniform(&space, &[n]).expect("n ≥ 1"),
        vec![seg(int(0), int(1))],
        vec![space.clone()],
        vec![seg(int(n as i64 - 1), int(n as i64))],
        1,
        None,
    )
}

/// `x⁺ = scale·x + shift` on `[lo, hi]`, cells of width `1/cells`.
pub fn contracting_1d(
    scale: Scalar,
    shift: Scalar,
    cells: usize,
) -> (PiecewiseAffineSystem, Partition) {
    let space = seg(int(0), int(1));
    let sys = single_location(
        space.clone(),
        seg(int(0), int(0)),
        vec![vec![int(0)]],
        AffineDynamics::new(vec![vec![scale]], vec![vec![int(0)]], vec![shift]).expect("1×1"),
    )
    .expect("one location");
    (
        sys,
        Partition::uniform(&space, &[cells]).expect("cells ≥ 1"),
    )
}

/// `x⁺ = x/2 - m` on `[-2,8]` with cells of width 2. Goal `[-2,2]`, Init
/// `[4,6]`, `[6,8]` unsafe. Every image stays at distance `m` from the
/// faces that matter, so constant offsets up to `m` keep the certificate.
pub fn margin_instance(m: Scalar) -> Problem {
    let space = seg(int(-2), int(8));
    let sys = single_location(
        space.clone(),
        seg(int(0), int(0)),
        vec![vec![int(0)]],
        AffineDynamics::new(vec![vec![frac(1, 2)]], vec![vec![int(0)]], vec![-m]).expect("1×1"),
    )
    .expect("one location");
    Problem::new(
        sys,
        Partition::uniform(&space, &[5]).expect("5 cells"),
        vec![seg(int(4), int(6))],
        vec![seg(int(-2), int(6))],
        vec![seg(int(-2), int(2))],
        1,
        None,
    )
}

/// Named instances addressable from the command line.
pub const PRESETS: &[&str] = &[
    "dubins24",
    "desk",
    "grid4x4",
    "grid4x4-walled",
    "grid6x6-wall",
    "blocks6x6",
    "walled6x6",
    "conveyor",
    "conveyor-blocked",
    "margin",
];

pub fn preset(name: &str) -> Option<Problem> {
    Some(match name {
        "dubins24" => full_vehicle_instance(),
        "desk" => vehicle_problem(&VehicleConfig::desk()),
        "grid4x4" => gridworld(4, 4, Layout::Open),
        "grid4x4-walled" => gridworld(4, 4, Layout::WalledGoal),
        "grid6x6-wall" => gridworld(6, 6, Layout::Wall),
        "blocks6x6" => gridworld_with_step(6, 6, Layout::Blocks, frac(3, 4), 2),
        "walled6x6" => gridworld(6, 6, Layout::WalledGoal),
        "conveyor" => conveyor(6, int(1), false),
        "conveyor-blocked" => conveyor(6, int(1), true),
        "margin" => margin_instance(frac(1, 4)),
        _ => return None,
    })
}

/// Knobs for [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSpec {
    pub max_cells_per_axis: usize,
    pub max_inputs: usize,
    /// Dynamics map cells onto unions of cells.
    pub aligned: bool,
    pub k: usize,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            max_cells_per_axis: 4,
            max_inputs: 3,
            aligned: false,
            k: 1,
        }
    }
}

/// Small random reach-avoid instance in 1 or 2 dimensions with at most
/// 12 control cells.
///
/// Cells have unit width on `[0, n_i]`. Aligned instances use diagonal
/// maps with entries in `{1, -1}` (reflections about the domain centre)
/// and integer shifts; otherwise shifts and scalings are random fractions.
pub fn random_instance(rng: &mut impl Rng, spec: &RandomSpec) -> Problem {
    let dim = rng.gen_range(1..=2);
    let counts: Vec<usize> = loop {
        let c: Vec<usize> = (0..dim)
            .map(|_| rng.gen_range(2..=spec.max_cells_per_axis))
            .collect();
        if c.iter().product::<usize>() <= 12 {
            break c;
        }
    };
    let space = Hyperrect::from_bounds(
        &counts
            .iter()
            .map(|&c| (int(0), int(c as i64)))
            .collect::<Vec<_>>(),
    );
    let n_inputs = rng.gen_range(1..=spec.max_inputs);
    let n_locations = if dim == 1 && counts[0] >= 2 && rng.gen_bool(0.3) {
        2
    } else {
        1
    };

    let random_map = |rng: &mut dyn rand::RngCore| -> (Matrix, Vec<Scalar>) {
        let mut a = zeros(dim, dim);
        let mut c = vec![Scalar::zero(); dim];
        for i in 0..dim {
            if spec.aligned {
                if rng.gen_bool(0.25) {
                    a[i][i] = int(-1);
                    c[i] = int(counts[i] as i64);
                } else {
                    a[i][i] = int(1);
                }
            } else {
                a[i][i] = [frac(1, 2), frac(3, 4), int(1), frac(5, 4)][rng.gen_range(0..4)].clone();
                c[i] = frac(rng.gen_range(-4..=4), 4);
            }
        }
        (a, c)
    };
    let dyns: Vec<(Matrix, Vec<Scalar>)> =
        (0..n_locations).map(|_| random_map(&mut *rng)).collect();

    let mut inputs = Vec::new();
    for _ in 0..n_inputs {
        let u: Vec<Scalar> = (0..dim)
            .map(|_| {
                if spec.aligned {
                    int(rng.gen_range(-1..=1))
                } else {
                    frac(rng.gen_range(-6..=6), 4)
                }
            })
            .collect();
        inputs.push(u);
    }
    let bound = if spec.aligned { int(1) } else { frac(3, 2) };
    let input_box = Hyperrect::from_bounds(&vec![(-bound.clone(), bound); dim]);
    let eye: Matrix = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| if i == j { int(1) } else { int(0) })
                .collect()
        })
        .collect();
    let locations: Vec<Location> = if n_locations == 1 {
        vec![Location {
            invariant: space.clone(),
            dynamics: AffineDynamics::new(dyns[0].0.clone(), eye.clone(), dyns[0].1.clone())
                .expect("square"),
        }]
    } else {
        let cut = int(rng.gen_range(1..counts[0]) as i64);
        vec![
            Location {
                invariant: seg(int(0), cut.clone()),
                dynamics: AffineDynamics::new(dyns[0].0.clone(), eye.clone(), dyns[0].1.clone())
                    .expect("square"),
            },
            Location {
                invariant: seg(cut, int(counts[0] as i64)),
                dynamics: AffineDynamics::new(dyns[1].0.clone(), eye.clone(), dyns[1].1.clone())
                    .expect("square"),
            },
        ]
    };
    let sys = PiecewiseAffineSystem::new(space.clone(), input_box, inputs, locations)
        .expect("locations tile the space");
    let control = Partition::uniform(&space, &counts).expect("positive counts");
    let n = control.len();

    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let goal_id = order[0];
    let init_id = order[1];
    let n_unsafe = rng.gen_range(0..=(n - 2).min(3));
    let unsafe_ids = &order[2..2 + n_unsafe];
    let mut init = vec![control.cell(init_id).clone()];
    if n - 2 - n_unsafe > 0 && rng.gen_bool(0.3) {
        init.push(control.cell(order[2 + n_unsafe]).clone());
    }
    let goal = vec![control.cell(goal_id).clone()];
    let safe: Vec<Hyperrect> = (0..n)
        .filter(|i| !unsafe_ids.contains(i))
        .map(|i| control.cell(i).clone())
        .collect();
    Problem::new(sys, control, init, safe, goal, spec.k, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            let p = preset(name).unwrap();
            assert!(p.validate().is_empty(), "{name}: {:?}", p.validate());
        }
        assert!(preset("nope").is_none());
    }

    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lowest_speed_bin_cannot_turn() {
        let cfg = VehicleConfig::dubins24();
        for tb in 0..cfg.theta_bins {
            assert!(vehicle_coefficients(&cfg, tb, 0).e.is_zero());
            assert!(!vehicle_coefficients(&cfg, tb, 1).e.is_zero());
        }
    }

    #[test]
    fn heading_bin_at_zero_is_straight() {
        let cfg = VehicleConfig::dubins24();
        let k = vehicle_coefficients(&cfg, 0, 3);
        assert_eq!(k.a, int(1));
        assert!(k.c.is_zero());
        assert!(k.b.is_zero() && k.d.is_zero());
    }

    #[test]
    fn four_by_two_coefficient_table() {
        let cfg = VehicleConfig {
            theta_bins: 4,
            v_bins: 2,
            theta: (int(0), int(4)),
            ..VehicleConfig::desk()
        };
        let den = cfg.denominator as f64;
        for tb in 0..4 {
            let mid = tb as f64 + 0.5;
            for vb in 0..2 {
                let k = vehicle_coefficients(&cfg, tb, vb);
                assert!((to_f64(&k.a) - mid.cos()).abs() <= 0.5 / den);
                assert!((to_f64(&k.c) - mid.sin()).abs() <= 0.5 / den);
                let expected_e = if vb == 0 { 0.0 } else { 1.5 };
                assert_eq!(to_f64(&k.e), expected_e);
            }
        }
    }

    #[test]
    fn vehicle_at_rest_stays_put() {
        let cfg = VehicleConfig::dubins24();
        let sys = dubins_pwl(&cfg);
        assert_eq!(sys.locations().len(), 24);
        let origin = vec![int(1), int(1), int(0), int(0)];
        let idle = sys
            .inputs()
            .iter()
            .position(|u| u.iter().all(|x| x.is_zero()))
            .unwrap();
        assert_eq!(sys.step(&origin, idle).unwrap(), origin);
    }

    #[test]
    fn tangent_variant_has_offsets() {
        let cfg = VehicleConfig {
            linearization: Linearization::Tangent,
            ..VehicleConfig::desk()
        };
        let k = vehicle_coefficients(&cfg, 2, 1);
        assert!(!k.b.is_zero() && !k.d.is_zero());
        let sys = dubins_pwl(&cfg);
        assert_eq!(sys.locations().len(), 6);
    }

    #[test]
    fn generated_problems_validate() {
        assert!(full_vehicle_instance().validate().is_empty());
        assert_eq!(full_vehicle_instance().n_control(), 768);
        assert!(vehicle_problem(&VehicleConfig::desk())
            .validate()
            .is_empty());
        for layout in [
            Layout::Open,
            Layout::WalledGoal,
            Layout::Wall,
            Layout::Blocks,
            Layout::InitInGoal,
        ] {
            let p = gridworld(6, 6, layout);
            assert!(p.validate().is_empty(), "{layout:?}: {:?}", p.validate());
        }
        assert!(gridworld(1, 2, Layout::InitInGoal).validate().is_empty());
        assert!(conveyor(4, int(1), false).validate().is_empty());
        assert!(margin_instance(frac(1, 4)).validate().is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for aligned in [false, true] {
            let spec = RandomSpec {
                aligned,
                ..RandomSpec::default()
            };
            for _ in 0..50 {
                let p = random_instance(&mut rng, &spec);
                assert!(p.validate().is_empty(), "{:?}", p.validate());
                assert!(p.n_control() <= 12 && p.system.n_inputs() <= 4);
            }
        }
    }
}
