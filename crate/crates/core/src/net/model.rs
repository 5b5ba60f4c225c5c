//! The two-level encoder-decoder `f` mapping a cloud to per-point
//! displacements.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::conv::{conv_stream, densities, ConvGeometry, KernelIds, KernelMlp, lrelu};
use super::params::ModelParams;
use super::tape::{GradTape, LinearIds, NodeId};
use super::tensor::Tensor;
use crate::cloud::{bbox_diagonal, poisson_subsample, NeighborIndex, Point, PointCloud, Vec3};
use crate::error::{Error, Result};

/// Below this many points the second pooling level is dropped.
pub const MIN_POINTS_FOR_POOLING: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    /// Receptive field of level 1, fraction of the input diagonal.
    pub r1_frac: f64,
    /// Receptive field of level 2.
    pub r2_frac: f64,
    pub width_a: usize,
    pub width_b: usize,
    pub width_c: usize,
    pub width_dec1: usize,
    pub width_dec0: usize,
    pub width_head: usize,
    pub kernel_hidden: usize,
    /// Exclude every point from its own neighborhood at every level, not just
    /// the first full-resolution convolution.
    pub blind_all_levels: bool,
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec {
            r1_frac: 0.05,
            r2_frac: 0.10,
            width_a: 16,
            width_b: 32,
            width_c: 96,
            width_dec1: 32,
            width_dec0: 32,
            width_head: 32,
            kernel_hidden: 8,
            blind_all_levels: false,
        }
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "levels=({}, {}) widths=({} {} {} {} {} {}) kernel_hidden={} blind_all_levels={}",
            self.r1_frac,
            self.r2_frac,
            self.width_a,
            self.width_b,
            self.width_c,
            self.width_dec1,
            self.width_dec0,
            self.width_head,
            self.kernel_hidden,
            self.blind_all_levels
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSpec {
    pub receptive_frac: f64,
    pub pool_frac: f64,
    pub width: usize,
}

impl ArchSpec {
    pub fn levels(&self) -> [LevelSpec; 2] {
        [
            LevelSpec {
                receptive_frac: self.r1_frac,
                pool_frac: self.r1_frac / 2.0,
                width: self.width_b,
            },
            LevelSpec {
                receptive_frac: self.r2_frac,
                pool_frac: self.r2_frac / 2.0,
                width: self.width_c,
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r1_frac > 0.0 && self.r2_frac >= self.r1_frac && self.r2_frac.is_finite()) {
            return Err(Error::param("arch", format!("need 0 < r1 <= r2, got {} {}", self.r1_frac, self.r2_frac)));
        }
        let widths = [
            self.width_a,
            self.width_b,
            self.width_c,
            self.width_dec1,
            self.width_dec0,
            self.width_head,
            self.kernel_hidden,
        ];
        if widths.contains(&0) {
            return Err(Error::param("arch", "all widths must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvLayer {
    kernel: KernelIds,
    mix: LinearIds,
}

#[derive(Debug, Clone)]
struct Layout {
    a: ConvLayer,
    b: ConvLayer,
    c: ConvLayer,
    c2: ConvLayer,
    d: ConvLayer,
    skip1: LinearIds,
    e: ConvLayer,
    skip0: LinearIds,
    head1: LinearIds,
    head2: LinearIds,
}

struct Init<'a> {
    params: &'a mut ModelParams,
    rng: ChaCha8Rng,
}

impl Init<'_> {
    fn gauss(&mut self, name: String, rows: usize, cols: usize, std: f64) -> usize {
        let n = Normal::new(0.0, std).expect("finite std");
        let data = (0..rows * cols).map(|_| n.sample(&mut self.rng)).collect();
        self.params.push(name, Tensor::from_vec(rows, cols, data).expect("shape"))
    }

    fn constant(&mut self, name: String, rows: usize, cols: usize, v: f64) -> usize {
        self.params.push(name, Tensor::filled(rows, cols, v))
    }

    fn linear(&mut self, name: &str, cin: usize, cout: usize) -> LinearIds {
        LinearIds {
            w: self.gauss(format!("{name}.w"), cin, cout, (2.0 / cin as f64).sqrt()),
            b: self.constant(format!("{name}.b"), 1, cout, 0.0),
        }
    }

    fn conv(&mut self, name: &str, hidden: usize, cin: usize, cout: usize) -> ConvLayer {
        let kernel = KernelIds {
            w1: self.gauss(format!("{name}.kernel.w1"), 3, hidden, 1.0),
            b1: self.gauss(format!("{name}.kernel.b1"), 1, hidden, 0.5),
            w2: self.gauss(format!("{name}.kernel.w2"), hidden, cin, (1.0 / hidden as f64).sqrt()),
            b2: self.constant(format!("{name}.kernel.b2"), 1, cin, 1.0),
        };
        ConvLayer {
            kernel,
            mix: self.linear(&format!("{name}.mix"), cin, cout),
        }
    }
}

fn build_layout(arch: &ArchSpec, params: &mut ModelParams, seed: u64) -> Layout {
    let h = arch.kernel_hidden;
    let mut init = Init {
        params,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let a = init.conv("enc0", h, 1, arch.width_a);
    let b = init.conv("enc1", h, arch.width_a, arch.width_b);
    let c = init.conv("enc2", h, arch.width_b, arch.width_c);
    let c2 = init.conv("enc2b", h, arch.width_c, arch.width_c);
    let d = init.conv("dec1", h, arch.width_c, arch.width_dec1);
    let skip1 = init.linear("skip1", arch.width_b + arch.width_dec1, arch.width_dec1);
    let e = init.conv("dec0", h, arch.width_dec1, arch.width_dec0);
    let skip0 = init.linear("skip0", arch.width_a + arch.width_dec0, arch.width_dec0);
    let head1 = init.linear("head1", arch.width_dec0, arch.width_head);
    let head2 = LinearIds {
        w: init.constant("head2.w".into(), arch.width_head, 3, 0.0),
        b: init.constant("head2.b".into(), 1, 3, 0.0),
    };
    Layout {
        a,
        b,
        c,
        c2,
        d,
        skip1,
        e,
        skip0,
        head1,
        head2,
    }
}

/// Full-resolution points plus the two Poisson-disk pooling levels, with the
/// absolute radii derived from the input diagonal.
#[derive(Debug, Clone)]
pub struct Pyramid {
    pub diag: f64,
    pub r1: f64,
    pub r2: f64,
    pub points: [Vec<Point>; 3],
    /// Full-resolution id of every point of every level.
    pub ids: [Vec<usize>; 3],
    /// Level 2 dropped because the cloud is too small.
    pub degenerate: bool,
}

impl Pyramid {
    pub fn build(points: &[Point], arch: &ArchSpec, seed: u64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidData("network input needs at least 2 points".into()));
        }
        let diag = bbox_diagonal(points);
        if !(diag > 0.0) {
            return Err(Error::InvalidData("network input has zero extent".into()));
        }
        let [l1, l2] = arch.levels();
        let (r1, r2) = (l1.receptive_frac * diag, l2.receptive_frac * diag);
        let ids1 = poisson_subsample(points, l1.pool_frac * diag, seed);
        let p1: Vec<Point> = ids1.iter().map(|&i| points[i]).collect();
        let degenerate = points.len() < MIN_POINTS_FOR_POOLING;
        let ids2: Vec<usize> = if degenerate {
            Vec::new()
        } else {
            poisson_subsample(&p1, l2.pool_frac * diag, seed.wrapping_add(1))
                .into_iter()
                .map(|i| ids1[i])
                .collect()
        };
        if degenerate {
            log::warn!(
                "{} points are too few for two pooling levels; using a single level",
                points.len()
            );
        }
        let p2 = ids2.iter().map(|&i| points[i]).collect();
        Ok(Pyramid {
            diag,
            r1,
            r2,
            points: [points.to_vec(), p1, p2],
            ids: [(0..points.len()).collect(), ids1, ids2],
            degenerate,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Radius {
    R1,
    R2,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    from: usize,
    to: usize,
    radius: Radius,
    first: bool,
}

const SLOT_A: Slot = Slot { from: 0, to: 0, radius: Radius::R1, first: true };
const SLOT_B: Slot = Slot { from: 0, to: 1, radius: Radius::R1, first: false };
const SLOT_C: Slot = Slot { from: 1, to: 2, radius: Radius::R2, first: false };
const SLOT_C2: Slot = Slot { from: 2, to: 2, radius: Radius::R2, first: false };
const SLOT_D: Slot = Slot { from: 2, to: 1, radius: Radius::R2, first: false };
const SLOT_E: Slot = Slot { from: 1, to: 0, radius: Radius::R1, first: false };

/// Neighbor indices and densities of a pyramid, reusable across forward
/// passes over the same points.
pub struct LevelCtx<'a> {
    pyr: &'a Pyramid,
    index_r1: [Option<NeighborIndex<'a>>; 3],
    index_r2: [Option<NeighborIndex<'a>>; 3],
    dens_r1: [Vec<f64>; 3],
    dens_r2: [Vec<f64>; 3],
    blind: bool,
    blind_all: bool,
}

impl<'a> LevelCtx<'a> {
    fn new(pyr: &'a Pyramid, blind: bool, blind_all: bool) -> Result<Self> {
        let mut ctx = LevelCtx {
            pyr,
            index_r1: [None, None, None],
            index_r2: [None, None, None],
            dens_r1: Default::default(),
            dens_r2: Default::default(),
            blind,
            blind_all,
        };
        // inputs at R1: levels 0 and 1; inputs at R2: levels 1 and 2
        for l in 0..2 {
            let idx = NeighborIndex::build(&pyr.points[l], pyr.r1)?;
            ctx.dens_r1[l] = densities(&idx, pyr.r1);
            ctx.index_r1[l] = Some(idx);
        }
        if !pyr.degenerate {
            for l in 1..3 {
                let idx = NeighborIndex::build(&pyr.points[l], pyr.r2)?;
                ctx.dens_r2[l] = densities(&idx, pyr.r2);
                ctx.index_r2[l] = Some(idx);
            }
        }
        Ok(ctx)
    }

    fn parts(&self, s: Slot) -> (&NeighborIndex<'a>, &[Point], f64, &[f64]) {
        let (idx, r, d) = match s.radius {
            Radius::R1 => (&self.index_r1[s.from], self.pyr.r1, &self.dens_r1[s.from]),
            Radius::R2 => (&self.index_r2[s.from], self.pyr.r2, &self.dens_r2[s.from]),
        };
        (idx.as_ref().expect("index for used slot"), &self.pyr.points[s.to], r, d)
    }

    fn excluder(&self, s: Slot) -> impl Fn(usize, usize) -> bool + Sync + '_ {
        let active = self.blind && (s.first || self.blind_all);
        let out_ids = &self.pyr.ids[s.to];
        let in_ids = &self.pyr.ids[s.from];
        move |i, j| active && out_ids[i] == in_ids[j]
    }
}

/// Executes the network graph either on a tape or directly on tensors.
trait Exec {
    type H;
    fn ones(&mut self, rows: usize) -> Self::H;
    fn zeros(&mut self, rows: usize, cols: usize) -> Self::H;
    fn linear(&mut self, x: &Self::H, ids: LinearIds) -> Self::H;
    fn lrelu(&mut self, x: &Self::H) -> Self::H;
    fn concat(&mut self, a: &Self::H, b: &Self::H) -> Self::H;
    fn scale(&mut self, x: &Self::H, s: f64) -> Self::H;
    fn conv(&mut self, x: &Self::H, slot: Slot, ids: KernelIds) -> Self::H;
}

struct TapeExec<'t, 'p, 'c> {
    tape: &'t mut GradTape<'p>,
    ctx: &'t LevelCtx<'c>,
}

impl Exec for TapeExec<'_, '_, '_> {
    type H = NodeId;
    fn ones(&mut self, rows: usize) -> NodeId {
        self.tape.input(Tensor::filled(rows, 1, 1.0))
    }
    fn zeros(&mut self, rows: usize, cols: usize) -> NodeId {
        self.tape.input(Tensor::zeros(rows, cols))
    }
    fn linear(&mut self, x: &NodeId, ids: LinearIds) -> NodeId {
        self.tape.linear(*x, ids)
    }
    fn lrelu(&mut self, x: &NodeId) -> NodeId {
        self.tape.leaky_relu(*x)
    }
    fn concat(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        self.tape.concat(*a, *b)
    }
    fn scale(&mut self, x: &NodeId, s: f64) -> NodeId {
        self.tape.scale(*x, s)
    }
    fn conv(&mut self, x: &NodeId, slot: Slot, ids: KernelIds) -> NodeId {
        let (index, out, r, dens) = self.ctx.parts(slot);
        let geom = ConvGeometry::build(index, out, r, dens, self.ctx.excluder(slot));
        self.tape.mc_conv(*x, Arc::new(geom), ids)
    }
}

struct StreamExec<'p, 'c> {
    params: &'p ModelParams,
    ctx: &'p LevelCtx<'c>,
    empty: usize,
}

impl Exec for StreamExec<'_, '_> {
    type H = Tensor;
    fn ones(&mut self, rows: usize) -> Tensor {
        Tensor::filled(rows, 1, 1.0)
    }
    fn zeros(&mut self, rows: usize, cols: usize) -> Tensor {
        Tensor::zeros(rows, cols)
    }
    fn linear(&mut self, x: &Tensor, ids: LinearIds) -> Tensor {
        x.affine(self.params.get(ids.w), self.params.get(ids.b))
    }
    fn lrelu(&mut self, x: &Tensor) -> Tensor {
        x.map(lrelu)
    }
    fn concat(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        a.hconcat(b)
    }
    fn scale(&mut self, x: &Tensor, s: f64) -> Tensor {
        x.map(|v| v * s)
    }
    fn conv(&mut self, x: &Tensor, slot: Slot, ids: KernelIds) -> Tensor {
        let (index, out, r, dens) = self.ctx.parts(slot);
        let k = KernelMlp::from_params(self.params, ids);
        let (t, empty) = conv_stream(x, index, out, r, dens, self.ctx.excluder(slot), &k);
        self.empty += empty;
        t
    }
}

fn run<E: Exec>(l: &Layout, arch: &ArchSpec, pyr: &Pyramid, e: &mut E) -> E::H {
    let conv = |e: &mut E, x: &E::H, slot: Slot, layer: ConvLayer| {
        let agg = e.conv(x, slot, layer.kernel);
        let mixed = e.linear(&agg, layer.mix);
        e.lrelu(&mixed)
    };
    let dense = |e: &mut E, x: &E::H, ids: LinearIds| {
        let y = e.linear(x, ids);
        e.lrelu(&y)
    };
    let x0 = e.ones(pyr.points[0].len());
    let a = conv(e, &x0, SLOT_A, l.a);
    let b = conv(e, &a, SLOT_B, l.b);
    let d = if pyr.degenerate {
        e.zeros(pyr.points[1].len(), arch.width_dec1)
    } else {
        let c = conv(e, &b, SLOT_C, l.c);
        let c2 = conv(e, &c, SLOT_C2, l.c2);
        conv(e, &c2, SLOT_D, l.d)
    };
    let bd = e.concat(&b, &d);
    let s1 = dense(e, &bd, l.skip1);
    let up = conv(e, &s1, SLOT_E, l.e);
    let au = e.concat(&a, &up);
    let s0 = dense(e, &au, l.skip0);
    let h = dense(e, &s0, l.head1);
    let o = e.linear(&h, l.head2);
    e.scale(&o, pyr.r1)
}

fn to_vectors(t: &Tensor) -> Vec<Vec3> {
    (0..t.rows).map(|i| Vec3::from_column_slice(t.row(i))).collect()
}

#[derive(Debug, Clone)]
pub struct Model {
    pub arch: ArchSpec,
    pub params: ModelParams,
    layout: Layout,
}

impl Model {
    /// Fresh model with seeded random weights and a zero output layer, so the
    /// initial displacement field is exactly zero.
    pub fn new(arch: ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut params = ModelParams::new();
        let layout = build_layout(&arch, &mut params, seed);
        Ok(Model { arch, params, layout })
    }

    /// Wraps loaded parameters, checking names and shapes against `arch`.
    pub fn from_params(arch: ArchSpec, params: ModelParams) -> Result<Self> {
        let reference = Model::new(arch.clone(), 0)?;
        let same = reference.params.len() == params.len()
            && reference
                .params
                .iter()
                .zip(params.iter())
                .all(|((na, a), (nb, b))| na == nb && a.shape() == b.shape());
        if !same {
            return Err(Error::ArchitectureMismatch {
                expected: arch.to_string(),
                found: "parameter tensors with different names or shapes".into(),
            });
        }
        if !params.all_finite() {
            return Err(Error::InvalidData("model parameters contain non-finite values".into()));
        }
        Ok(Model {
            arch,
            layout: reference.layout,
            params,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn output_layer(&self) -> [usize; 2] {
        [self.layout.head2.w, self.layout.head2.b]
    }

    /// Replaces the zero output layer by uniform values in `[-scale, scale]`
    /// (gradient checks need a non-trivial output).
    pub fn randomize_output(&mut self, scale: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for id in self.output_layer() {
            for v in &mut self.params.get_mut(id).data {
                *v = rng.random_range(-scale..=scale);
            }
        }
    }

    pub fn pyramid(&self, points: &[Point], seed: u64) -> Result<Pyramid> {
        Pyramid::build(points, &self.arch, seed)
    }

    /// Neighbor structures for repeated passes over one pyramid.
    pub fn prepare<'a>(&self, pyr: &'a Pyramid, blind_spot: bool) -> Result<LevelCtx<'a>> {
        LevelCtx::new(pyr, blind_spot, self.arch.blind_all_levels)
    }

    /// Forward pass recorded on a tape. Returns the tape and the node holding
    /// the `N x 3` displacements.
    pub fn forward_tape(&self, pyr: &Pyramid, blind_spot: bool) -> Result<(GradTape<'_>, NodeId)> {
        let ctx = self.prepare(pyr, blind_spot)?;
        let mut tape = GradTape::new(&self.params);
        let out = run(&self.layout, &self.arch, pyr, &mut TapeExec { tape: &mut tape, ctx: &ctx });
        Ok((tape, out))
    }

    /// Forward pass without recording; memory stays linear in the point count.
    pub fn infer(&self, pyr: &Pyramid, blind_spot: bool) -> Result<Vec<Vec3>> {
        let ctx = self.prepare(pyr, blind_spot)?;
        Ok(self.infer_prepared(&ctx))
    }

    pub fn infer_prepared(&self, ctx: &LevelCtx) -> Vec<Vec3> {
        let pyr = ctx.pyr;
        let mut e = StreamExec {
            params: &self.params,
            ctx,
            empty: 0,
        };
        let out = run(&self.layout, &self.arch, pyr, &mut e);
        if e.empty > 0 {
            log::debug!("forward: {} empty neighborhoods", e.empty);
        }
        to_vectors(&out)
    }

    pub fn displacements(tape: &GradTape, out: NodeId) -> Vec<Vec3> {
        to_vectors(tape.value(out))
    }
}

/// Per-point displacements `d(y)` for `cloud`. Clouds with fewer than two
/// distinct positions get zero displacements.
pub fn network_forward(model: &Model, cloud: &PointCloud, blind_spot: bool, pool_seed: u64) -> Result<Vec<Vec3>> {
    if cloud.len() < 2 || !(cloud.bbox_diagonal() > 0.0) {
        return Ok(vec![Vec3::zeros(); cloud.len()]);
    }
    let pyr = model.pyramid(cloud.positions(), pool_seed)?;
    model.infer(&pyr, blind_spot)
}
